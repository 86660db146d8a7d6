import { ApiError, FashionApi } from "./api";
import { LABELS } from "./labels";
import { compareHeadRegion, headPreserved } from "./pixeldiff";
import { SingleFlight } from "./queue";
import samples from "./samples.json";
import {
  AppState,
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
} from "./state";
import type { WalkMode } from "./types";

interface Sample {
  name: string;
  caption: string;
  imagePng: string;
  segmapPng: string;
}

const SAMPLES = samples as Sample[];
const api = new FashionApi(
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8000",
);
const generateQueue = new SingleFlight();

let state: AppState = initialState();
let sampleIndex = 0;
let lastResult: { generationId: string; image: string; shapeMap: string; sampleIndex: number } | null = null;
let headNote = "";

function dataUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pngImg(b64: string, size: number, alt: string): HTMLImageElement {
  const img = el("img", "pixel");
  img.src = dataUrl(b64);
  img.width = size;
  img.height = size;
  img.alt = alt;
  return img;
}

function copyable(label: string, value: string): HTMLElement {
  const wrap = el("div", "copyable");
  wrap.appendChild(el("span", "copy-label", label));
  const code = el("code", undefined, value);
  wrap.appendChild(code);
  const btn = el("button", "copy-btn", "copy");
  btn.addEventListener("click", () => {
    void navigator.clipboard?.writeText(value);
  });
  wrap.appendChild(btn);
  return wrap;
}

function update(next: AppState): void {
  state = next;
  render();
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.detail}`;
  return String(err);
}

async function refreshHistory(): Promise<void> {
  if (!state.sessionId) return;
  const res = await api.history(state.sessionId);
  const entries: GenerationEntry[] = res.generations.map((g) => ({
    generationId: g.generation_id,
    caption: g.caption,
    seed: g.seed,
    createdAt: g.created_at,
    image: g.thumbnail,
    shapeMap: g.shape_map,
  }));
  update(setHistory(state, entries));
}

function runGenerate(): void {
  const caption = (document.getElementById("caption") as HTMLTextAreaElement).value;
  const seedBox = document.getElementById("seed") as HTMLInputElement;
  const seed = seedBox.value.trim() === "" ? undefined : Number(seedBox.value);
  const sample = SAMPLES[sampleIndex];
  const pickedSample = sampleIndex;
  void generateQueue
    .run(() =>
      api.generate({
        image: sample.imagePng,
        segmap: sample.segmapPng,
        caption,
        seed,
        session_id: state.sessionId ?? undefined,
      }),
    )
    .then((res) => {
      seedBox.value = String(res.seed);
      let next = state.sessionId ? state : { ...state, sessionId: res.session_id };
      next = addGeneration(next, {
        generationId: res.generation_id,
        caption,
        seed: res.seed,
        createdAt: new Date().toISOString(),
        image: res.image,
        shapeMap: res.shape_map,
      });
      if (lastResult && lastResult.sampleIndex === pickedSample) {
        const diff = compareHeadRegion(sample.segmapPng, lastResult.image, res.image);
        headNote = headPreserved(diff)
          ? `head region preserved (${diff.headTotal} px identical, ${diff.bodyChanged} garment px changed)`
          : `head region CHANGED: ${diff.headChanged}/${diff.headTotal} px differ`;
      } else {
        headNote = "";
      }
      lastResult = {
        generationId: res.generation_id,
        image: res.image,
        shapeMap: res.shape_map,
        sampleIndex: pickedSample,
      };
      update(next);
    })
    .catch((err) => update(setError(state, describeError(err))));
}

function runInterpolate(): void {
  const pair = selectedEntries(state);
  if (pair.length !== 2) return;
  const mode = (document.getElementById("walk-mode") as HTMLSelectElement).value as WalkMode;
  const steps = Number((document.getElementById("walk-steps") as HTMLInputElement).value);
  void api
    .interpolate({
      generation_id_a: pair[0].generationId,
      generation_id_b: pair[1].generationId,
      mode,
      steps,
    })
    .then((res) => update(setFrames(state, res.frames)))
    .catch((err) => update(setError(state, describeError(err))));
}

function renderLegend(): HTMLElement {
  const legend = el("div", "legend");
  legend.id = "legend";
  for (const label of LABELS) {
    const item = el("span", "legend-item");
    const chip = el("span", "chip");
    chip.style.background = `rgb(${label.color.join(",")})`;
    item.appendChild(chip);
    item.appendChild(el("span", undefined, label.name));
    legend.appendChild(item);
  }
  return legend;
}

function renderStudio(): HTMLElement {
  const section = el("section", "panel");
  section.appendChild(el("h2", undefined, "Studio"));

  const row = el("div", "row");
  const inputCol = el("div", "col");
  inputCol.appendChild(el("h3", undefined, "Wearer"));
  const picker = el("select");
  picker.id = "sample-picker";
  SAMPLES.forEach((s, i) => {
    const opt = el("option", undefined, s.name);
    opt.value = String(i);
    opt.selected = i === sampleIndex;
    picker.appendChild(opt);
  });
  picker.addEventListener("change", () => {
    sampleIndex = Number(picker.value);
    const caption = document.getElementById("caption") as HTMLTextAreaElement;
    caption.value = SAMPLES[sampleIndex].caption;
    render();
  });
  inputCol.appendChild(picker);
  inputCol.appendChild(pngImg(SAMPLES[sampleIndex].imagePng, 128, "input photo"));
  row.appendChild(inputCol);

  const resultCol = el("div", "col");
  resultCol.appendChild(el("h3", undefined, "Result"));
  if (lastResult) {
    const pair = el("div", "row");
    pair.appendChild(pngImg(lastResult.shapeMap, 128, "generated shape map"));
    pair.appendChild(pngImg(lastResult.image, 128, "generated image"));
    resultCol.appendChild(pair);
    resultCol.appendChild(copyable("generation", lastResult.generationId));
    if (headNote) {
      resultCol.appendChild(el("p", "head-note", headNote));
    }
  } else {
    resultCol.appendChild(el("p", "empty", "nothing generated yet"));
  }
  resultCol.appendChild(renderLegend());
  row.appendChild(resultCol);
  section.appendChild(row);
  return section;
}

function renderHistory(): HTMLElement {
  const section = el("section", "panel");
  section.appendChild(el("h2", undefined, "History"));
  if (state.history.length === 0) {
    section.appendChild(el("p", "empty", "no generations in this session yet"));
    return section;
  }
  const list = el("div", "history");
  for (const entry of state.history) {
    const card = el("div", "card" + (state.selected.includes(entry.generationId) ? " selected" : ""));
    card.appendChild(pngImg(entry.image, 64, "thumbnail"));
    card.appendChild(el("div", "caption", entry.caption));
    card.appendChild(copyable("seed", String(entry.seed)));
    card.appendChild(copyable("id", entry.generationId));
    card.addEventListener("click", (ev) => {
      if ((ev.target as HTMLElement).tagName === "BUTTON") return;
      update(toggleSelect(state, entry.generationId));
    });
    list.appendChild(card);
  }
  section.appendChild(list);

  const pair = selectedEntries(state);
  if (pair.length === 2) {
    const compare = el("div", "compare");
    compare.appendChild(el("h3", undefined, "Compare"));
    const side = el("div", "row");
    for (const entry of pair) {
      const col = el("div", "col");
      col.appendChild(pngImg(entry.image, 128, "compare image"));
      col.appendChild(el("div", "caption", entry.caption));
      side.appendChild(col);
    }
    compare.appendChild(side);

    const controls = el("div", "row");
    const modeSel = el("select");
    modeSel.id = "walk-mode";
    for (const mode of ["shape", "texture", "both"]) {
      const opt = el("option", undefined, mode);
      opt.value = mode;
      if (mode === "both") opt.selected = true;
      modeSel.appendChild(opt);
    }
    controls.appendChild(modeSel);
    const steps = el("input") as HTMLInputElement;
    steps.id = "walk-steps";
    steps.type = "number";
    steps.min = "2";
    steps.max = "64";
    steps.value = "7";
    controls.appendChild(steps);
    const go = el("button", undefined, "Interpolate");
    go.addEventListener("click", runInterpolate);
    controls.appendChild(go);
    compare.appendChild(controls);

    if (state.frames) {
      const slider = el("input") as HTMLInputElement;
      slider.id = "walk-slider";
      slider.type = "range";
      slider.min = "0";
      slider.max = String(state.frames.length - 1);
      slider.value = String(state.sliderIndex);
      slider.addEventListener("input", () => {
        update(setSlider(state, Number(slider.value)));
      });
      compare.appendChild(slider);
      const frame = currentFrame(state);
      if (frame) {
        compare.appendChild(pngImg(frame, 128, "interpolation frame"));
        compare.appendChild(
          el("p", "frame-note", `frame ${state.sliderIndex + 1} of ${state.frames.length}`),
        );
      }
    }
    section.appendChild(compare);
  }
  return section;
}

function render(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.replaceChildren();

  const header = el("header");
  header.appendChild(el("h1", undefined, "Outfit Studio"));
  if (state.error) {
    header.appendChild(el("div", "error", state.error));
  }
  if (generateQueue.busy) {
    header.appendChild(el("div", "busy", `working (${generateQueue.pending} queued)`));
  }
  root.appendChild(header);

  const controls = el("section", "panel");
  const caption = el("textarea") as HTMLTextAreaElement;
  caption.id = "caption";
  caption.rows = 2;
  caption.value = (document.getElementById("caption") as HTMLTextAreaElement | null)?.value
    ?? SAMPLES[sampleIndex].caption;
  controls.appendChild(el("h3", undefined, "Caption"));
  controls.appendChild(caption);
  const seedRow = el("div", "row");
  seedRow.appendChild(el("span", "copy-label", "seed"));
  const seed = el("input") as HTMLInputElement;
  seed.id = "seed";
  seed.type = "number";
  seed.placeholder = "blank = server draws one";
  seed.value = (document.getElementById("seed") as HTMLInputElement | null)?.value ?? "7";
  seedRow.appendChild(seed);
  const go = el("button", "go", "Generate");
  go.addEventListener("click", () => {
    runGenerate();
    render();
  });
  seedRow.appendChild(go);
  controls.appendChild(seedRow);
  root.appendChild(controls);

  root.appendChild(renderStudio());
  root.appendChild(renderHistory());
}

async function start(): Promise<void> {
  render();
  try {
    const health = await api.health();
    if (!health.checkpoints_loaded) {
      update(setError(state, "service reports checkpoints not loaded"));
    }
  } catch (err) {
    update(setError(state, describeError(err)));
  }
  window.setInterval(() => {
    void refreshHistory().catch(() => undefined);
  }, 4000);
}

void start();
