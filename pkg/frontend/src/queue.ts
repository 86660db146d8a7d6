/** Serializes async jobs: at most one runs, later ones wait their turn. */
export class SingleFlight {
  private tail: Promise<unknown> = Promise.resolve();
  private waiting = 0;
  private active = false;

  get pending(): number {
    return this.waiting + (this.active ? 1 : 0);
  }

  get busy(): boolean {
    return this.active || this.waiting > 0;
  }

  run<T>(job: () => Promise<T>): Promise<T> {
    this.waiting += 1;
    const next = this.tail.then(
      async () => {
        this.waiting -= 1;
        this.active = true;
        try {
          return await job();
        } finally {
          this.active = false;
        }
      },
    );
    // failures propagate to the caller but never stall the queue
    this.tail = next.catch(() => undefined);
    return next;
  }
}
