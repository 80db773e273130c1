"""The screening pipeline behind both the HTTP service and the CLI client.

One immutable Screener owns the loaded bundle, providers, and detector;
screen_bytes() is a pure function of (bundle, image bytes, options) apart
from the wall-clock timings it reports.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from ..classifier.bundle import ModelBundle
from ..classifier.ensemble import validate_providers
from ..classifier.head import CLASSES, confidence_of, predict_label_index
from ..classifier.metrics import predict_probabilities
from ..classifier.providers import get_provider, resize_to_input
from ..config import AppConfig
from ..core import RgbImage, decode_image
from ..errors import PipelineError
from ..imaging import compute_properties
from ..interpret import FeedbackItem, FeedbackRule, generate_feedback, verdict_feedback
from ..pipeline import (
    Detector,
    FallbackDetector,
    crop_pupil,
    detect_reflexes,
    select_and_gate,
    whiteness_map,
)


@dataclass(frozen=True)
class ScreeningResult:
    usable: bool
    verdict: str
    label: Optional[str]
    probabilities: Optional[tuple[float, float]]
    confidence: Optional[float]
    feedback: tuple[FeedbackItem, ...]
    timings_ms: dict = field(compare=False)
    total_ms: float
    model_version: str

    def to_dict(self) -> dict:
        return {
            "usable": self.usable,
            "verdict": self.verdict,
            "label": self.label,
            "probabilities": list(self.probabilities) if self.probabilities else None,
            "confidence": self.confidence,
            "feedback": [f.to_dict() for f in self.feedback],
            "timings_ms": dict(self.timings_ms),
            "total_ms": self.total_ms,
            "model_version": self.model_version,
        }


class _StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def stage(self, name: str):
        clock = self

        class _Ctx:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                clock.timings[name] = clock.timings.get(name, 0.0) \
                    + (time.perf_counter() - self.start) * 1000.0

        return _Ctx()

    def total_ms(self) -> float:
        return (time.perf_counter() - self._t0) * 1000.0


class Screener:
    def __init__(self, bundle: ModelBundle, config: AppConfig | None = None,
                 detector: Detector | None = None):
        self.bundle = bundle
        self.config = config or AppConfig()
        self.detector = detector or FallbackDetector()
        self.providers = {name: get_provider(name) for name in bundle.provider_names}
        validate_providers(bundle.model, self.providers)
        self.rules = [FeedbackRule.from_dict(d) for d in bundle.feedback_rules]

    def screen_bytes(self, data: bytes, eye: str = "auto") -> ScreeningResult:
        """Decode and screen one image. Raises ValueError for undecodable
        input; unusable images are structured results, not errors."""
        clock = _StageClock()
        with clock.stage("decode"):
            image = decode_image(data)
        return self._screen(image, eye, clock)

    def screen_image(self, image: RgbImage, eye: str = "auto") -> ScreeningResult:
        return self._screen(image, eye, _StageClock())

    def _screen(self, image: RgbImage, eye: str, clock: _StageClock) -> ScreeningResult:
        if eye not in ("left", "right", "auto"):
            raise ValueError(f"eye must be left, right, or auto, got {eye!r}")

        with clock.stage("detect_eye"):
            boxes = self.detector.detect_eyes(image)
            if not boxes:
                return self._unusable("no_eye", clock)
            box = boxes[0] if eye in ("auto", "left") else boxes[-1]
            eye_img = box.extract(image)
            if eye == "left":
                eye_img = eye_img.mirrored()

        with clock.stage("properties"):
            eye_properties = compute_properties(eye_img)

        with clock.stage("detect_pupil"):
            found = self.detector.detect_pupil(eye_img)
            if found is None:
                return self._unusable("no_pupil", clock)
            center, radius = found
            try:
                crop = crop_pupil(eye_img, center, radius)
            except PipelineError:
                return self._unusable("no_pupil", clock)

        with clock.stage("reflex_gate"):
            report = select_and_gate(detect_reflexes(whiteness_map(crop)), crop,
                                     self.config.gate)
            if report.verdict != "usable":
                return self._unusable(report.verdict, clock)

        with clock.stage("classify"):
            probs = predict_probabilities(self.bundle.model, [resize_to_input(crop.image)],
                                          self.providers)[0]
            label = CLASSES[predict_label_index(probs)]
            confidence = confidence_of(probs)

        with clock.stage("feedback"):
            items = generate_feedback(self.rules, eye_properties, confidence,
                                      self.config.feedback.confidence_threshold)

        return ScreeningResult(
            usable=True, verdict="usable", label=label,
            probabilities=(float(probs[0]), float(probs[1])),
            confidence=confidence, feedback=tuple(items),
            timings_ms=clock.timings, total_ms=clock.total_ms(),
            model_version=self.bundle.version)

    def _unusable(self, verdict: str, clock: _StageClock) -> ScreeningResult:
        with clock.stage("feedback"):
            items = verdict_feedback(verdict)
        return ScreeningResult(
            usable=False, verdict=verdict, label=None, probabilities=None,
            confidence=None, feedback=tuple(items), timings_ms=clock.timings,
            total_ms=clock.total_ms(), model_version=self.bundle.version)
