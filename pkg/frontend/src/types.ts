export interface GenerateRequest {
  image: string;
  segmap: string;
  caption: string;
  seed?: number;
  session_id?: string;
}

export interface GenerateResponse {
  shape_map: string;
  image: string;
  session_id: string;
  generation_id: string;
  seed: number;
}

export type WalkMode = "shape" | "texture" | "both";

export interface InterpolateRequest {
  generation_id_a: string;
  generation_id_b: string;
  mode: WalkMode;
  steps: number;
}

export interface InterpolateResponse {
  frames: string[];
  mode: WalkMode;
  steps: number;
}

export interface HistoryEntry {
  generation_id: string;
  caption: string;
  seed: number;
  created_at: string;
  thumbnail: string;
  shape_map: string;
}

export interface HistoryResponse {
  session_id: string;
  generations: HistoryEntry[];
}

export interface HealthResponse {
  status: string;
  checkpoints_loaded: boolean;
}
