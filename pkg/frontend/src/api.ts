/**
 * Typed client for the snap service JSON API.
 */

import { VoxelGridData } from "./grid.js";
import type { SnapMetrics } from "./state.js";

export interface SnapOverrides {
  lambda1?: number;
  lambda2?: number;
  refine_steps?: number;
  refine_lr?: number;
  threshold?: number;
  component_removal?: boolean;
  symmetrize?: boolean;
}

export interface SnapResponse {
  grid: VoxelGridData;
  zInitial: number[];
  zFinal: number[];
  metrics: SnapMetrics;
  warnings: string[];
}

export interface ModelInfo {
  category: string;
  resolution: number;
  latent_dim: number;
}

export class ApiError extends Error {
  readonly code: string;
  readonly requestId: string | undefined;

  constructor(code: string, message: string, requestId?: string) {
    super(message);
    this.code = code;
    this.requestId = requestId;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const body = await response.json();
    return new ApiError(body.code ?? "internal", body.message ?? response.statusText, body.request_id);
  } catch {
    return new ApiError("internal", `${response.status} ${response.statusText}`);
  }
}

export class SnapClient {
  constructor(private readonly baseUrl: string = "") {}

  async health(): Promise<{ status: string; models: ModelInfo[]; version: string }> {
    const response = await fetch(`${this.baseUrl}/api/health`);
    if (!response.ok) throw await parseError(response);
    return response.json();
  }

  async snap(
    category: string,
    grid: VoxelGridData,
    overrides?: SnapOverrides,
  ): Promise<SnapResponse> {
    const body: Record<string, unknown> = { category, grid: grid.toBase64() };
    if (overrides && Object.keys(overrides).length > 0) body.overrides = overrides;
    const response = await fetch(`${this.baseUrl}/api/snap`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    const payload = await response.json();
    return {
      grid: VoxelGridData.fromBase64(payload.grid),
      zInitial: payload.z_initial,
      zFinal: payload.z_final,
      metrics: payload.metrics,
      warnings: payload.warnings ?? [],
    };
  }

  async generate(category: string, n = 1, seed?: number): Promise<VoxelGridData[]> {
    const body: Record<string, unknown> = { category, n };
    if (seed !== undefined) body.seed = seed;
    const response = await fetch(`${this.baseUrl}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    const payload = await response.json();
    return payload.samples.map((s: { grid: string }) => VoxelGridData.fromBase64(s.grid));
  }
}
