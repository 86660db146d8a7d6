import type {
  GenerateRequest,
  GenerateResponse,
  HealthResponse,
  HistoryResponse,
  InterpolateRequest,
  InterpolateResponse,
} from "./types";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = "";
  const text = await res.text();
  try {
    const body = JSON.parse(text) as { detail?: unknown };
    detail = typeof body.detail === "string" ? body.detail : text;
  } catch {
    detail = text || res.statusText;
  }
  throw new ApiError(res.status, detail);
}

export class FashionApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.base + path);
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.get("/api/health");
  }

  createSession(): Promise<{ session_id: string }> {
    return this.post("/api/session", {});
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.post("/api/generate", req);
  }

  interpolate(req: InterpolateRequest): Promise<InterpolateResponse> {
    return this.post("/api/interpolate", req);
  }

  history(sessionId: string): Promise<HistoryResponse> {
    return this.get(`/api/history?session_id=${encodeURIComponent(sessionId)}`);
  }
}
