/** Wires upload, noise/stage/layer controls, and the texture slider to the
 * service, rendering input | denoised panes with live PSNR numbers. */

import { ApiError, fetchModelInfo, postDenoise } from "./api.js";
import type { DenoiseRequest, DenoiseResponse, ModelInfo } from "./api.js";
import { debounce } from "./debounce.js";
import {
  base64ToBytes,
  bytesToBase64,
  decodePnm,
  encodePnm,
  rgbaToSamples,
  samplesToRgba,
} from "./pnm.js";
import { SingleFlight } from "./singleflight.js";
import { buildRequest, conformToModel, initialState, lambdaTicks } from "./state.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const fileInput = $<HTMLInputElement>("file");
const sigmaSelect = $<HTMLSelectElement>("sigma");
const lambdaSlider = $<HTMLInputElement>("lambda");
const lambdaReadout = $<HTMLSpanElement>("lambda-value");
const stageSelect = $<HTMLSelectElement>("stage");
const layerSelect = $<HTMLSelectElement>("layer");
const seedInput = $<HTMLInputElement>("seed");
const inputCanvas = $<HTMLCanvasElement>("input-canvas");
const outputCanvas = $<HTMLCanvasElement>("output-canvas");
const inputLabel = $<HTMLElement>("input-label");
const psnrReadout = $<HTMLElement>("psnr");
const statusLine = $<HTMLElement>("status");
const modelLine = $<HTMLElement>("model-info");
const toast = $<HTMLElement>("toast");

let state = initialState();
let info: ModelInfo | null = null;

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  setTimeout(() => toast.classList.remove("visible"), 4000);
}

function setControlsEnabled(enabled: boolean): void {
  for (const el of [sigmaSelect, lambdaSlider, stageSelect, layerSelect, seedInput]) {
    el.disabled = !enabled;
  }
}

const flight = new SingleFlight<DenoiseRequest, DenoiseResponse>(
  (req) => postDenoise(req),
  (_req, resp) => renderResponse(resp),
  (_req, err) => {
    statusLine.textContent = "";
    if (err instanceof ApiError && err.status === 413) {
      showToast(`image too large for the server: ${err.message}`);
    } else {
      showToast(err instanceof Error ? err.message : String(err));
    }
  },
);

function renderResponse(resp: DenoiseResponse): void {
  const image = decodePnm(base64ToBytes(resp.image));
  const ctx = outputCanvas.getContext("2d")!;
  outputCanvas.width = image.width;
  outputCanvas.height = image.height;
  ctx.putImageData(
    new ImageData(samplesToRgba(image), image.width, image.height),
    0,
    0,
  );
  const parts: string[] = [];
  if (resp.psnr_noisy !== null) parts.push(`noisy ${resp.psnr_noisy.toFixed(2)} dB`);
  if (resp.psnr_denoised !== null) parts.push(`denoised ${resp.psnr_denoised.toFixed(2)} dB`);
  psnrReadout.textContent = parts.join("  ·  ");
  statusLine.textContent = `rendered in ${resp.elapsed_ms.toFixed(0)} ms`;
}

function submit(): void {
  if (!info || state.image === null) return;
  statusLine.textContent = "denoising…";
  flight.submit(buildRequest(state, info));
}

// ~150 ms quiet period while dragging; release always fires via flush
const debouncedSubmit = debounce(submit, 150);

function onLambdaInput(): void {
  state.lambda = Number(lambdaSlider.value);
  lambdaReadout.textContent = state.lambda.toFixed(2);
  debouncedSubmit();
}

function populateControls(model: ModelInfo): void {
  stageSelect.replaceChildren(
    ...model.available_stages.map((s) => new Option(`e${s}`, String(s))),
  );
  layerSelect.replaceChildren(
    ...model.available_layers.map((l) => new Option(`layer ${l}`, String(l))),
  );
  const [lo, hi] = model.lambda_range;
  lambdaSlider.min = String(lo);
  lambdaSlider.max = String(hi);
  lambdaSlider.step = "0.05";
  const ticks = document.createElement("datalist");
  ticks.id = "lambda-ticks";
  for (const v of lambdaTicks(model.lambda_range)) {
    ticks.appendChild(new Option("", String(v)));
  }
  document.body.appendChild(ticks);
  lambdaSlider.setAttribute("list", "lambda-ticks");

  state = conformToModel(state, model);
  lambdaSlider.value = String(state.lambda);
  stageSelect.value = String(state.stage);
  layerSelect.value = String(state.layer);
  modelLine.textContent =
    `${model.c_in === 1 ? "grayscale" : "color"} model · ${model.depth} gated layer(s) · ` +
    `${model.stages} stages · ${model.gate} gate · ${model.params.toLocaleString()} params`;
}

function updateInputLabel(): void {
  inputLabel.textContent =
    state.sigma > 0 ? `input (clean, σ=${state.sigma} added server-side)` : "input (noisy)";
}

async function onFile(file: File): Promise<void> {
  if (!info) return;
  const bitmap = await createImageBitmap(file);
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const samples = rgbaToSamples(rgba, info.c_in);
  const pnm = { width: bitmap.width, height: bitmap.height, channels: info.c_in, samples };
  state.image = bytesToBase64(encodePnm(pnm));

  inputCanvas.width = bitmap.width;
  inputCanvas.height = bitmap.height;
  inputCanvas
    .getContext("2d")!
    .putImageData(new ImageData(samplesToRgba(pnm), bitmap.width, bitmap.height), 0, 0);
  setControlsEnabled(true);
  updateInputLabel();
  submit();
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (file) {
    onFile(file).catch((err) => showToast(`cannot load image: ${err}`));
  }
});
lambdaSlider.addEventListener("input", onLambdaInput);
lambdaSlider.addEventListener("change", () => debouncedSubmit.flush());
sigmaSelect.addEventListener("change", () => {
  state.sigma = Number(sigmaSelect.value);
  updateInputLabel();
  submit();
});
stageSelect.addEventListener("change", () => {
  state.stage = Number(stageSelect.value);
  submit();
});
layerSelect.addEventListener("change", () => {
  state.layer = Number(layerSelect.value);
  submit();
});
seedInput.addEventListener("change", () => {
  state.seed = Number(seedInput.value) || 0;
  submit();
});

setControlsEnabled(false);
fetchModelInfo()
  .then((model) => {
    info = model;
    populateControls(model);
    statusLine.textContent = "load an image to begin";
  })
  .catch((err) => {
    statusLine.textContent = "service unavailable";
    showToast(err instanceof Error ? err.message : String(err));
  });
