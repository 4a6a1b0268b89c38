/**
 * Editor state machine: current grid, snapshot-based undo/redo, tool
 * selection, and the single-flight snap request rule.
 *
 * Every mutation goes through methods that record an entry in the edit log,
 * so replaying the log against the initial grid reproduces the current one
 * (the tests assert this property). Undo snapshots are full grid copies,
 * capped at 100: grids are small and snapshots keep restore trivially
 * correct.
 */

import { VoxelGridData } from "./grid.js";

export type Tool = "paint" | "erase" | "box";

export interface SnapMetrics {
  dissimilarity_initial: number;
  dissimilarity_final: number;
  realism_initial: number;
  realism_final: number;
  steps_taken: number;
  wall_time: number;
}

export type EditAction =
  | { kind: "brush"; x: number; y: number; z: number; tool: "paint" | "erase" }
  | { kind: "box"; from: [number, number, number]; to: [number, number, number]; tool: "paint" | "erase" }
  | { kind: "replace"; grid: VoxelGridData }
  | { kind: "clear" };

const MAX_HISTORY = 100;

export class EditorState {
  grid: VoxelGridData;
  category: string;
  tool: Tool = "paint";
  requestInFlight = false;
  lastMetrics: SnapMetrics | null = null;
  lastWarnings: string[] = [];
  readonly editLog: EditAction[] = [];

  private undoStack: VoxelGridData[] = [];
  private redoStack: VoxelGridData[] = [];

  constructor(dims: number, category = "chair") {
    this.grid = VoxelGridData.empty(dims);
    this.category = category;
  }

  get dims(): number {
    return this.grid.dims;
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  private pushSnapshot(): void {
    this.undoStack.push(this.grid.clone());
    if (this.undoStack.length > MAX_HISTORY) this.undoStack.shift();
    this.redoStack = [];
  }

  /**
   * Paint or erase one cell. A no-op brush (painting an occupied cell,
   * erasing an empty one, or touching out of bounds) changes nothing and
   * records no undo entry.
   */
  applyBrush(x: number, y: number, z: number, tool?: "paint" | "erase"): boolean {
    const t = tool ?? (this.tool === "erase" ? "erase" : "paint");
    if (!this.grid.inBounds(x, y, z)) return false;
    const target = t === "paint";
    if (this.grid.get(x, y, z) === target) return false;
    this.pushSnapshot();
    this.grid.set(x, y, z, target);
    this.editLog.push({ kind: "brush", x, y, z, tool: t });
    return true;
  }

  /** Fill or clear an axis-aligned box (both corners inclusive, clamped). */
  applyBox(
    from: [number, number, number],
    to: [number, number, number],
    tool?: "paint" | "erase",
  ): boolean {
    const t = tool ?? (this.tool === "erase" ? "erase" : "paint");
    const n = this.dims;
    const lo = from.map((v, i) => Math.max(0, Math.min(v, to[i]))) as typeof from;
    const hi = from.map((v, i) => Math.min(n - 1, Math.max(v, to[i]))) as typeof from;
    const target = t === "paint";
    let changed = false;
    const next = this.grid.clone();
    for (let z = lo[2]; z <= hi[2]; z++) {
      for (let y = lo[1]; y <= hi[1]; y++) {
        for (let x = lo[0]; x <= hi[0]; x++) {
          if (next.get(x, y, z) !== target) {
            next.set(x, y, z, target);
            changed = true;
          }
        }
      }
    }
    if (!changed) return false;
    this.pushSnapshot();
    this.grid = next;
    this.editLog.push({ kind: "box", from: [...from], to: [...to], tool: t });
    return true;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.grid);
    this.grid = prev;
    this.editLog.push({ kind: "replace", grid: prev.clone() });
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.grid);
    this.grid = next;
    this.editLog.push({ kind: "replace", grid: next.clone() });
    return true;
  }

  /** Marks the start of a snap round trip; refuses a second in-flight one. */
  beginSnap(): boolean {
    if (this.requestInFlight) return false;
    this.requestInFlight = true;
    return true;
  }

  /** Successful snap: the response grid replaces the current one (one undo
   * entry), metrics are surfaced. */
  completeSnap(result: { grid: VoxelGridData; metrics: SnapMetrics; warnings: string[] }): void {
    if (result.grid.dims !== this.dims) {
      this.requestInFlight = false;
      throw new Error(
        `snap returned ${result.grid.dims}^3 but the editor is at ${this.dims}^3`,
      );
    }
    this.pushSnapshot();
    this.grid = result.grid.clone();
    this.lastMetrics = result.metrics;
    this.lastWarnings = result.warnings;
    this.requestInFlight = false;
    this.editLog.push({ kind: "replace", grid: result.grid.clone() });
  }

  /** Failed snap: grid untouched, flight flag released. */
  failSnap(): void {
    this.requestInFlight = false;
  }

  /** Category switch resets to an empty grid at that category's resolution. */
  switchCategory(category: string, dims: number): void {
    this.category = category;
    this.grid = VoxelGridData.empty(dims);
    this.undoStack = [];
    this.redoStack = [];
    this.editLog.length = 0;
    this.editLog.push({ kind: "clear" });
    this.lastMetrics = null;
    this.lastWarnings = [];
  }
}

/** Replay an edit log against an empty grid: the invariant checked in tests
 * is that this reproduces the live grid exactly. */
export function replayLog(dims: number, log: EditAction[]): VoxelGridData {
  const state = new EditorState(dims);
  for (const action of log) {
    switch (action.kind) {
      case "brush":
        state.applyBrush(action.x, action.y, action.z, action.tool);
        break;
      case "box":
        state.applyBox(action.from, action.to, action.tool);
        break;
      case "replace":
        state.grid = action.grid.clone();
        break;
      case "clear":
        state.grid = VoxelGridData.empty(dims);
        break;
    }
  }
  return state.grid;
}
