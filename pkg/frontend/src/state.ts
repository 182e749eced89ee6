/** Session state and request building, kept DOM-free for testability. */

import type { DenoiseRequest, ModelInfo } from "./api.js";

export interface SessionState {
  /** base64 PNM of the uploaded image; null until one is loaded */
  image: string | null;
  /** 0 means "input is already noisy": no synthesis, no PSNR readout */
  sigma: number;
  lambda: number;
  stage: number;
  layer: number;
  seed: number;
}

export function initialState(): SessionState {
  return { image: null, sigma: 25, lambda: 0, stage: 0, layer: 0, seed: 0 };
}

/**
 * Clamp controls to what the served model advertises: lambda into
 * lambda_range, stage/layer onto available indices (preferring the
 * texture-steering default of stage 2 when it exists).
 */
export function conformToModel(state: SessionState, info: ModelInfo): SessionState {
  const [lo, hi] = info.lambda_range;
  return {
    ...state,
    lambda: Math.min(Math.max(state.lambda, lo), hi),
    stage: info.available_stages.includes(state.stage)
      ? state.stage
      : (info.available_stages.includes(2) ? 2 : (info.available_stages[0] ?? 0)),
    layer: info.available_layers.includes(state.layer) ? state.layer : 0,
  };
}

export function buildRequest(state: SessionState, info: ModelInfo): DenoiseRequest {
  if (state.image === null) throw new Error("no image loaded");
  const conformed = conformToModel(state, info);
  const req: DenoiseRequest = {
    image: state.image,
    lambda: conformed.lambda,
    stage: conformed.stage,
    layer: conformed.layer,
    seed: conformed.seed,
  };
  if (conformed.sigma > 0) req.sigma = conformed.sigma;
  return req;
}

export function lambdaTicks(range: [number, number], step = 0.25): number[] {
  const ticks: number[] = [];
  for (let v = range[0]; v <= range[1] + 1e-9; v += step) {
    ticks.push(Math.round(v * 100) / 100);
  }
  return ticks;
}
