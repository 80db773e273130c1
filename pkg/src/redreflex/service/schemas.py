"""Pydantic request/response models for the HTTP API."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    model_version: Optional[str] = None


class FeedbackItemModel(BaseModel):
    property: str
    measured: Optional[float] = None
    threshold: Optional[float] = None
    suggestion: str


class ScreeningResponse(BaseModel):
    usable: bool
    verdict: str
    label: Optional[str] = None
    probabilities: Optional[list[float]] = None
    confidence: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    feedback: list[FeedbackItemModel] = []
    timings_ms: dict[str, float] = {}
    total_ms: float = 0.0
    model_version: str


class ModelInfoResponse(BaseModel):
    version: str
    format: str
    classes: list[str]
    providers: list[str]
    members: int
    augment_mix: str
    confidence_threshold: float
    feedback_rules: list[dict] = []


class ErrorResponse(BaseModel):
    detail: str
