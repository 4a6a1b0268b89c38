/**
 * Editor entry point: wires the state machine, renderer, and snap client to
 * the DOM. Drag paints/erases (or orbits with the right button / while
 * holding space), the wheel zooms, SNAP sends the grid to the service with
 * the slider overrides and swaps in the returned shape.
 */

import { SnapClient, ApiError, type ModelInfo } from "./api.js";
import { EditorState, type Tool } from "./state.js";
import { VoxelRenderer } from "./renderer.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const metricsBox = document.getElementById("metrics") as HTMLDivElement;
const categorySelect = document.getElementById("category") as HTMLSelectElement;
const snapButton = document.getElementById("snap") as HTMLButtonElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const redoButton = document.getElementById("redo") as HTMLButtonElement;
const clearButton = document.getElementById("clear") as HTMLButtonElement;
const lambda1Slider = document.getElementById("lambda1") as HTMLInputElement;
const lambda2Slider = document.getElementById("lambda2") as HTMLInputElement;
const stepsSlider = document.getElementById("steps") as HTMLInputElement;

const client = new SnapClient("");
let models: ModelInfo[] = [];
let state = new EditorState(16, "chair");
let renderer = new VoxelRenderer(canvas, state.dims);

function showBanner(text: string, isError = false): void {
  banner.textContent = text;
  banner.className = isError ? "banner error" : "banner";
  banner.style.display = text ? "block" : "none";
}

function refreshUi(): void {
  undoButton.disabled = !state.canUndo();
  redoButton.disabled = !state.canRedo();
  snapButton.disabled = state.requestInFlight;
  snapButton.textContent = state.requestInFlight ? "snapping…" : "SNAP";
  const m = state.lastMetrics;
  if (m) {
    metricsBox.textContent =
      `realism ${m.realism_initial.toFixed(3)} → ${m.realism_final.toFixed(3)}   ` +
      `dissimilarity ${m.dissimilarity_initial.toFixed(2)} → ${m.dissimilarity_final.toFixed(2)}   ` +
      `${m.steps_taken} steps, ${(m.wall_time * 1000).toFixed(0)} ms` +
      (state.lastWarnings.length ? `   ⚠ ${state.lastWarnings.join(", ")}` : "");
  } else {
    metricsBox.textContent = "paint a rough shape, then hit SNAP";
  }
  renderer.syncGrid(state.grid);
}

for (const tool of ["paint", "erase", "box"] as Tool[]) {
  const button = document.getElementById(`tool-${tool}`) as HTMLButtonElement;
  button.addEventListener("click", () => {
    state.tool = tool;
    document.querySelectorAll(".tool").forEach((el) => el.classList.remove("active"));
    button.classList.add("active");
  });
}

undoButton.addEventListener("click", () => {
  state.undo();
  refreshUi();
});
redoButton.addEventListener("click", () => {
  state.redo();
  refreshUi();
});
clearButton.addEventListener("click", () => {
  state.applyBox([0, 0, 0], [state.dims - 1, state.dims - 1, state.dims - 1], "erase");
  refreshUi();
});

snapButton.addEventListener("click", async () => {
  if (!state.beginSnap()) return; // single-flight: ignore double clicks
  refreshUi();
  showBanner("");
  try {
    const result = await client.snap(state.category, state.grid, {
      lambda1: parseFloat(lambda1Slider.value),
      lambda2: parseFloat(lambda2Slider.value),
      refine_steps: parseInt(stepsSlider.value, 10),
    });
    state.completeSnap({ grid: result.grid, metrics: result.metrics, warnings: result.warnings });
  } catch (err) {
    state.failSnap();
    const message = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    showBanner(`snap failed — ${message}`, true);
  }
  refreshUi();
});

categorySelect.addEventListener("change", () => {
  const model = models.find((m) => m.category === categorySelect.value);
  if (!model) return;
  state.switchCategory(model.category, model.resolution);
  renderer = new VoxelRenderer(canvas, state.dims);
  resize();
  refreshUi();
});

// --- pointer interaction -------------------------------------------------

let dragging: "orbit" | "tool" | null = null;
let lastPointer: [number, number] = [0, 0];
let boxAnchor: [number, number, number] | null = null;
let spaceHeld = false;

document.addEventListener("keydown", (e) => {
  if (e.code === "Space") spaceHeld = true;
  if (e.code === "KeyZ" && (e.ctrlKey || e.metaKey)) {
    if (e.shiftKey) state.redo();
    else state.undo();
    refreshUi();
  }
});
document.addEventListener("keyup", (e) => {
  if (e.code === "Space") spaceHeld = false;
});

function ndc(e: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [
    ((e.clientX - rect.left) / rect.width) * 2 - 1,
    -(((e.clientY - rect.top) / rect.height) * 2 - 1),
  ];
}

function targetCell(e: PointerEvent): [number, number, number] | null {
  const [nx, ny] = ndc(e);
  const picked = renderer.pick(nx, ny);
  return state.tool === "erase" ? picked.erase : picked.paint;
}

canvas.addEventListener("pointerdown", (e) => {
  canvas.setPointerCapture(e.pointerId);
  lastPointer = [e.clientX, e.clientY];
  if (e.button === 2 || spaceHeld) {
    dragging = "orbit";
    return;
  }
  dragging = "tool";
  const cell = targetCell(e);
  if (!cell) return;
  if (state.tool === "box") {
    boxAnchor = cell;
  } else {
    state.applyBrush(...cell);
    refreshUi();
  }
});

canvas.addEventListener("pointermove", (e) => {
  const [nx, ny] = ndc(e);
  if (dragging === "orbit") {
    renderer.orbitBy(
      (e.clientX - lastPointer[0]) * 0.008,
      (e.clientY - lastPointer[1]) * 0.008,
    );
    lastPointer = [e.clientX, e.clientY];
    return;
  }
  const picked = renderer.pick(nx, ny);
  renderer.setHighlight(state.tool === "erase" ? picked.erase : picked.paint);
  if (dragging === "tool" && state.tool !== "box") {
    const cell = targetCell(e);
    if (cell) {
      state.applyBrush(...cell);
      refreshUi();
    }
  }
});

canvas.addEventListener("pointerup", (e) => {
  if (dragging === "tool" && state.tool === "box" && boxAnchor) {
    const cell = targetCell(e);
    if (cell) {
      state.applyBox(boxAnchor, cell);
      refreshUi();
    }
  }
  dragging = null;
  boxAnchor = null;
});

canvas.addEventListener("contextmenu", (e) => e.preventDefault());
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  renderer.zoomBy(e.deltaY > 0 ? 1.1 : 0.9);
});

function resize(): void {
  const rect = canvas.parentElement!.getBoundingClientRect();
  renderer.resize(rect.width, rect.height);
}
window.addEventListener("resize", resize);

function loop(): void {
  renderer.render();
  requestAnimationFrame(loop);
}

async function boot(): Promise<void> {
  try {
    const health = await client.health();
    models = health.models;
    categorySelect.innerHTML = "";
    for (const model of models) {
      const option = document.createElement("option");
      option.value = model.category;
      option.textContent = `${model.category} (${model.resolution}³)`;
      categorySelect.appendChild(option);
    }
    if (models.length > 0) {
      state.switchCategory(models[0].category, models[0].resolution);
      renderer = new VoxelRenderer(canvas, state.dims);
    } else {
      showBanner("service has no models loaded", true);
    }
  } catch (err) {
    showBanner(`cannot reach snap service — ${String(err)}`, true);
  }
  resize();
  refreshUi();
  loop();
}

boot();
