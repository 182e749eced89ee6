"""Stateless HTTP facade over a loaded model for interactive texture control.

Endpoints: POST /api/denoise, GET /api/model, GET /api/health, plus static
UI assets at /. Images travel as base64-encoded binary PNM inside JSON.
Responses are deterministic for a given (request, seed); nothing mutates the
model, so concurrent requests are independent.
"""

from __future__ import annotations

import base64
import binascii
import time
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field

from gtcnn.model import GtcnnModel, Modulation, param_count
from gtcnn.pnm import PnmError, PnmImage, encode_pnm, parse_pnm
from gtcnn.training import add_awgn, clamp01, psnr

DEFAULT_MAX_PIXELS = 1_048_576
DEFAULT_UI_DIR = Path(__file__).resolve().parents[2] / "frontend" / "dist"


class DenoiseRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    image: str = Field(description="base64 of a binary P5/P6 file")
    sigma: Optional[float] = Field(default=None, ge=0)
    lam: float = Field(default=0.0, alias="lambda")
    stage: int = 2
    layer: int = 0
    seed: int = 0


class DenoiseResponse(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    image: str
    psnr_noisy: Optional[float] = None
    psnr_denoised: Optional[float] = None
    elapsed_ms: float


def _bad_request(field: str, message: str) -> HTTPException:
    return HTTPException(status_code=400, detail={"field": field, "message": message})


def _finite_or_none(value: float) -> Optional[float]:
    return value if np.isfinite(value) else None


def create_app(
    model: Optional[GtcnnModel] = None,
    max_pixels: int = DEFAULT_MAX_PIXELS,
    ui_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="gtcnn modulation service")
    app.state.model = model
    app.state.max_pixels = max_pixels

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def validation_to_400(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", ()) if p != "body") or "body"
        return JSONResponse(
            status_code=400,
            content={"detail": {"field": field, "message": first.get("msg", "invalid")}},
        )

    def require_model() -> GtcnnModel:
        if app.state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return app.state.model

    @app.get("/api/health")
    async def health() -> PlainTextResponse:
        return PlainTextResponse("ok")

    @app.get("/api/model")
    async def model_info():
        m = require_model()
        cfg = m.config
        return {
            "c_in": cfg.c_in,
            "c": cfg.c,
            "depth": cfg.depth,
            "stages": cfg.stages,
            "gate": cfg.gate.value,
            "use_1x1": cfg.use_1x1,
            "params": param_count(cfg),
            "available_stages": list(range(cfg.stages)),
            "available_layers": list(range(cfg.depth)),
            "lambda_range": [-0.5, 0.5],
        }

    @app.post("/api/denoise")
    async def denoise(req: DenoiseRequest) -> DenoiseResponse:
        m = require_model()
        if not -0.5 <= req.lam <= 0.5:
            raise _bad_request("lambda", f"{req.lam} outside [-0.5, 0.5]")
        if req.lam != 0.0:
            # stage/layer only matter when a shift is actually applied
            if not 0 <= req.stage < m.config.stages:
                raise _bad_request("stage", f"{req.stage} outside [0, {m.config.stages})")
            if not 0 <= req.layer < m.config.depth:
                raise _bad_request("layer", f"{req.layer} outside [0, {m.config.depth})")
        try:
            raw = base64.b64decode(req.image, validate=True)
        except (binascii.Error, ValueError) as e:
            raise _bad_request("image", f"invalid base64: {e}") from e
        try:
            image = parse_pnm(raw)
        except PnmError as e:
            raise _bad_request("image", str(e)) from e
        if image.width * image.height > app.state.max_pixels:
            raise HTTPException(
                status_code=413,
                detail=f"image has {image.width * image.height} pixels, "
                f"limit is {app.state.max_pixels}",
            )
        clean = image.to_tensor()
        if clean.c != m.config.c_in:
            raise _bad_request(
                "image", f"{clean.c} channel(s), model expects {m.config.c_in}"
            )

        t0 = time.perf_counter()
        if req.sigma is not None and req.sigma > 0:
            noisy = add_awgn(clean, req.sigma, np.random.default_rng(req.seed))
        else:
            noisy = clean
        mod = Modulation(req.lam, stage=req.stage, layer=req.layer) if req.lam != 0.0 else None
        y_hat, _ = m.forward(noisy, mod=mod)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0

        out_b64 = base64.b64encode(encode_pnm(PnmImage.from_tensor(clamp01(y_hat)))).decode()
        resp = DenoiseResponse(image=out_b64, elapsed_ms=elapsed_ms)
        if req.sigma is not None and req.sigma > 0:
            # None instead of +inf: JSON has no Infinity
            resp.psnr_noisy = _finite_or_none(psnr(clamp01(noisy), clean))
            resp.psnr_denoised = _finite_or_none(psnr(clamp01(y_hat), clean))
        return resp

    static_dir = Path(ui_dir) if ui_dir else DEFAULT_UI_DIR
    if static_dir.is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
