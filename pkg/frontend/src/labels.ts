/** The 7 segmentation labels in wire order (palette index = position). */
export interface LabelInfo {
  name: string;
  color: [number, number, number];
}

export const LABELS: readonly LabelInfo[] = [
  { name: "background", color: [232, 232, 232] },
  { name: "hair", color: [64, 40, 20] },
  { name: "face", color: [240, 200, 160] },
  { name: "upper-clothes", color: [208, 32, 32] },
  { name: "pants/shorts", color: [32, 64, 192] },
  { name: "legs", color: [240, 160, 128] },
  { name: "arms", color: [192, 128, 96] },
];

export const HAIR_LABEL = 1;
export const FACE_LABEL = 2;
