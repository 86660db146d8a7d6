/** Pure client state; the DOM layer renders from this and nothing else. */

export interface GenerationEntry {
  generationId: string;
  caption: string;
  seed: number;
  createdAt: string;
  image: string;
  shapeMap: string;
}

export interface AppState {
  sessionId: string | null;
  history: GenerationEntry[];
  selected: string[];
  frames: string[] | null;
  sliderIndex: number;
  error: string | null;
}

export function initialState(): AppState {
  return {
    sessionId: null,
    history: [],
    selected: [],
    frames: null,
    sliderIndex: 0,
    error: null,
  };
}

export function addGeneration(state: AppState, entry: GenerationEntry): AppState {
  return { ...state, history: [...state.history, entry], error: null };
}

export function setHistory(state: AppState, entries: GenerationEntry[]): AppState {
  const ids = new Set(entries.map((e) => e.generationId));
  return {
    ...state,
    history: [...entries],
    selected: state.selected.filter((id) => ids.has(id)),
  };
}

/** Select up to two entries; a third pick evicts the oldest selection. */
export function toggleSelect(state: AppState, generationId: string): AppState {
  if (!state.history.some((e) => e.generationId === generationId)) return state;
  let selected: string[];
  if (state.selected.includes(generationId)) {
    selected = state.selected.filter((id) => id !== generationId);
  } else {
    selected = [...state.selected, generationId].slice(-2);
  }
  return { ...state, selected, frames: null, sliderIndex: 0 };
}

export function selectedEntries(state: AppState): GenerationEntry[] {
  return state.selected.map(
    (id) => state.history.find((e) => e.generationId === id)!,
  );
}

export function setFrames(state: AppState, frames: string[]): AppState {
  return { ...state, frames: [...frames], sliderIndex: 0, error: null };
}

export function setSlider(state: AppState, index: number): AppState {
  if (!state.frames) return state;
  const clamped = Math.max(0, Math.min(state.frames.length - 1, index));
  return { ...state, sliderIndex: clamped };
}

export function currentFrame(state: AppState): string | null {
  if (!state.frames || state.frames.length === 0) return null;
  return state.frames[state.sliderIndex];
}

export function setError(state: AppState, message: string | null): AppState {
  return { ...state, error: message };
}
