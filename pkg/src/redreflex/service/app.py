"""FastAPI screening service.

Endpoints:
    GET  /health  liveness + loaded model version
    GET  /model   bundle metadata
    POST /screen  raw PNG/JPEG body or multipart 'file'; query eye=left|right|auto

Unusable images are 200 responses with a structured verdict; only protocol
failures (undecodable body, missing bundle) map to HTTP errors. Uploads are
never written to disk unless retain_uploads is enabled.
"""
from __future__ import annotations

import time
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from ..classifier.bundle import ModelBundle, load_bundle
from ..config import AppConfig
from ..errors import ConfigurationError
from ..pipeline import ChainedDetector, FallbackDetector, RemoteEyeDetector
from .schemas import (
    ErrorResponse,
    FeedbackItemModel,
    HealthResponse,
    ModelInfoResponse,
    ScreeningResponse,
)
from .screening import Screener, ScreeningResult


def build_detector(config: AppConfig):
    kind = config.service.detector
    if kind == "fallback":
        return FallbackDetector()
    if kind == "remote":
        return RemoteEyeDetector()
    if kind == "auto":
        try:
            return ChainedDetector(RemoteEyeDetector(), FallbackDetector())
        except Exception:
            return FallbackDetector()
    raise ConfigurationError(f"unknown detector {kind!r}")


def _to_response(result: ScreeningResult) -> ScreeningResponse:
    return ScreeningResponse(
        usable=result.usable,
        verdict=result.verdict,
        label=result.label,
        probabilities=list(result.probabilities) if result.probabilities else None,
        confidence=result.confidence,
        feedback=[FeedbackItemModel(**f.to_dict()) for f in result.feedback],
        timings_ms=dict(result.timings_ms),
        total_ms=result.total_ms,
        model_version=result.model_version,
    )


def create_app(config: AppConfig | None = None,
               bundle: ModelBundle | None = None) -> FastAPI:
    config = config or AppConfig()
    if bundle is None and config.service.bundle_path:
        bundle = load_bundle(config.service.bundle_path)
    screener = Screener(bundle, config, build_detector(config)) if bundle else None

    app = FastAPI(title="redreflex screening service", version="0.1.0")
    app.state.screener = screener
    app.state.config = config
    app.state.started = time.time()

    def _ready() -> Screener:
        if app.state.screener is None:
            raise HTTPException(status_code=503, detail="model bundle not loaded")
        return app.state.screener

    @app.get("/health", response_model=HealthResponse)
    def health():
        if app.state.screener is None:
            return HealthResponse(status="loading", model_version=None)
        return HealthResponse(status="ok", model_version=app.state.screener.bundle.version)

    @app.get("/model", response_model=ModelInfoResponse,
             responses={503: {"model": ErrorResponse}})
    def model_info():
        screener = _ready()
        bundle = screener.bundle
        return ModelInfoResponse(
            version=bundle.version,
            format=bundle.config.get("format", ""),
            classes=bundle.config.get("classes", []),
            providers=list(bundle.provider_names),
            members=len(bundle.members),
            augment_mix=bundle.config.get("augment_mix", "none"),
            confidence_threshold=config.feedback.confidence_threshold,
            feedback_rules=bundle.feedback_rules,
        )

    @app.post("/screen", response_model=ScreeningResponse,
              responses={400: {"model": ErrorResponse}, 413: {"model": ErrorResponse},
                         503: {"model": ErrorResponse}})
    async def screen(request: Request, eye: str = "auto"):
        screener = _ready()
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("file")
            if upload is None:
                raise HTTPException(status_code=400, detail="multipart body missing 'file'")
            data = await upload.read()
        else:
            data = await request.body()
        if len(data) > config.service.max_body_bytes:
            raise HTTPException(status_code=413, detail="image exceeds the 10 MB limit")
        if not data:
            raise HTTPException(status_code=400, detail="empty request body")
        if eye not in ("left", "right", "auto"):
            raise HTTPException(status_code=400, detail=f"bad eye flag {eye!r}")
        if config.service.retain_uploads:
            updir = Path(config.service.upload_dir)
            updir.mkdir(parents=True, exist_ok=True)
            (updir / f"{uuid.uuid4().hex}.bin").write_bytes(data)
        try:
            result = screener.screen_bytes(data, eye=eye)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return _to_response(result)

    @app.exception_handler(ConfigurationError)
    def config_error(_request, exc):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    return app


def serve(config: AppConfig, host: str | None = None, port: int | None = None):
    """Run the service with uvicorn; drains in-flight requests on shutdown."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=host or config.service.host, port=port or config.service.port)
