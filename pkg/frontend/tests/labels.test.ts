import { describe, expect, it } from "vitest";

import { FACE_LABEL, HAIR_LABEL, LABELS } from "../src/labels";

describe("label table", () => {
  it("lists exactly the 7 labels in wire order", () => {
    expect(LABELS.map((l) => l.name)).toEqual([
      "background",
      "hair",
      "face",
      "upper-clothes",
      "pants/shorts",
      "legs",
      "arms",
    ]);
  });

  it("keeps the head label indices aligned with the table", () => {
    expect(LABELS[HAIR_LABEL].name).toBe("hair");
    expect(LABELS[FACE_LABEL].name).toBe("face");
  });

  it("gives every label a distinct color", () => {
    const seen = new Set(LABELS.map((l) => l.color.join(",")));
    expect(seen.size).toBe(7);
  });
});
