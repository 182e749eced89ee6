/** Types and fetch wrappers for the modulation service endpoints. */

export interface ModelInfo {
  c_in: 1 | 3;
  c: number;
  depth: number;
  stages: number;
  gate: string;
  use_1x1: boolean;
  params: number;
  available_stages: number[];
  available_layers: number[];
  lambda_range: [number, number];
}

export interface DenoiseRequest {
  image: string;
  sigma?: number;
  lambda: number;
  stage: number;
  layer: number;
  seed: number;
}

export interface DenoiseResponse {
  image: string;
  psnr_noisy: number | null;
  psnr_denoised: number | null;
  elapsed_ms: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    const detail = body.detail;
    if (typeof detail === "string") return detail;
    if (detail && typeof detail === "object") {
      return `${detail.field ?? "request"}: ${detail.message ?? "invalid"}`;
    }
  } catch {
    /* non-JSON body */
  }
  return `HTTP ${resp.status}`;
}

export async function fetchModelInfo(base = ""): Promise<ModelInfo> {
  const resp = await fetch(`${base}/api/model`);
  if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
  return (await resp.json()) as ModelInfo;
}

export async function postDenoise(req: DenoiseRequest, base = ""): Promise<DenoiseResponse> {
  const resp = await fetch(`${base}/api/denoise`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(req),
  });
  if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
  return (await resp.json()) as DenoiseResponse;
}
