import { describe, expect, it } from "vitest";

import {
  GenerationEntry,
  addGeneration,
  currentFrame,
  initialState,
  selectedEntries,
  setError,
  setFrames,
  setHistory,
  setSlider,
  toggleSelect,
} from "../src/state";

function entry(id: string, caption = "a plain outfit"): GenerationEntry {
  return {
    generationId: id,
    caption,
    seed: 1,
    createdAt: "2026-01-01T00:00:00Z",
    image: `img-${id}`,
    shapeMap: `map-${id}`,
  };
}

describe("history state", () => {
  it("starts empty with nothing selected", () => {
    const s = initialState();
    expect(s.history).toEqual([]);
    expect(s.selected).toEqual([]);
    expect(currentFrame(s)).toBeNull();
  });

  it("appends generations in order and clears the error banner", () => {
    let s = setError(initialState(), "500: boom");
    s = addGeneration(s, entry("g1"));
    s = addGeneration(s, entry("g2"));
    expect(s.history.map((e) => e.generationId)).toEqual(["g1", "g2"]);
    expect(s.error).toBeNull();
  });

  it("keeps at most two selections, evicting the oldest", () => {
    let s = initialState();
    for (const id of ["g1", "g2", "g3"]) s = addGeneration(s, entry(id));
    s = toggleSelect(s, "g1");
    s = toggleSelect(s, "g2");
    s = toggleSelect(s, "g3");
    expect(s.selected).toEqual(["g2", "g3"]);
    s = toggleSelect(s, "g2");
    expect(s.selected).toEqual(["g3"]);
  });

  it("ignores selections of unknown generations", () => {
    const s = toggleSelect(initialState(), "ghost");
    expect(s.selected).toEqual([]);
  });

  it("prunes selections when a history refresh drops entries", () => {
    let s = initialState();
    s = addGeneration(s, entry("g1"));
    s = addGeneration(s, entry("g2"));
    s = toggleSelect(s, "g1");
    s = toggleSelect(s, "g2");
    s = setHistory(s, [entry("g2")]);
    expect(s.selected).toEqual(["g2"]);
    expect(selectedEntries(s).map((e) => e.generationId)).toEqual(["g2"]);
  });
});

describe("interpolation frames", () => {
  it("shows the stored endpoint payloads at the slider ends", () => {
    let s = initialState();
    s = setFrames(s, ["frameA", "mid", "frameB"]);
    expect(currentFrame(s)).toBe("frameA");
    s = setSlider(s, 2);
    expect(currentFrame(s)).toBe("frameB");
    s = setSlider(s, 1);
    expect(currentFrame(s)).toBe("mid");
  });

  it("clamps the slider to the frame range", () => {
    let s = setFrames(initialState(), ["a", "b"]);
    s = setSlider(s, 99);
    expect(s.sliderIndex).toBe(1);
    s = setSlider(s, -5);
    expect(s.sliderIndex).toBe(0);
  });

  it("drops stale frames when the selection changes", () => {
    let s = initialState();
    s = addGeneration(s, entry("g1"));
    s = setFrames(s, ["a", "b"]);
    s = toggleSelect(s, "g1");
    expect(s.frames).toBeNull();
    expect(s.sliderIndex).toBe(0);
  });
});
