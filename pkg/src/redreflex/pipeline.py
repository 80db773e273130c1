"""Pupil localization, reflex detection, and the usability gate.

The external eye/pupil detectors are hidden behind a small interface so the
rest of the pipeline neither knows nor cares whether boxes came from a remote
vision service or the built-in fallback. The reflex detector itself is fully
specified: whiteness = min(R, G, B) inside the pupil disk, seeds at the
maximum whiteness, hysteresis growth down to one standard deviation below it.
"""
from __future__ import annotations

import base64
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

import cv2
import numpy as np
from scipy import ndimage

from .config import GateConfig
from .core import PupilCrop, RgbImage
from .errors import DetectorTimeout, PipelineError, RemoteDetectorError
from .imaging import EIGHT_CONN, to_grayscale

CROP_MARGIN = 0.15
CROP_SIZE = 128

FALLBACK_DARK_PERCENTILE = 20.0
FALLBACK_MIN_AREA_FRAC = 0.01


@dataclass(frozen=True)
class EyeBox:
    x: int
    y: int
    width: int
    height: int

    def clamp(self, img_w: int, img_h: int) -> "EyeBox":
        x0 = max(0, min(self.x, img_w - 1))
        y0 = max(0, min(self.y, img_h - 1))
        x1 = max(x0 + 1, min(self.x + self.width, img_w))
        y1 = max(y0 + 1, min(self.y + self.height, img_h))
        return EyeBox(x0, y0, x1 - x0, y1 - y0)

    def extract(self, image: RgbImage) -> RgbImage:
        b = self.clamp(image.width, image.height)
        return RgbImage(image.array[b.y:b.y + b.height, b.x:b.x + b.width])


class Detector(Protocol):
    """Contract for eye / pupil localization backends."""

    def detect_eyes(self, image: RgbImage) -> list[EyeBox]: ...

    def detect_pupil(self, eye: RgbImage) -> Optional[tuple[tuple[float, float], float]]: ...


def _dark_components(image: RgbImage):
    gray = to_grayscale(image).values
    # strictly below the 20th percentile: a constant image yields an empty
    # mask (no dark region) instead of selecting everything
    mask = gray < np.percentile(gray, FALLBACK_DARK_PERCENTILE)
    labeled, count = ndimage.label(mask, structure=EIGHT_CONN)
    comps = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labeled == idx)
        comps.append((len(ys), float(xs.mean()), float(ys.mean())))
    comps.sort(key=lambda c: -c[0])
    return comps


class FallbackDetector:
    """Threshold-based detector: the pupil is the largest dark, roughly
    circular blob (darkest 20% of gray levels, largest 8-connected component).
    """

    def detect_pupil(self, eye: RgbImage):
        comps = _dark_components(eye)
        if not comps:
            return None
        area, cx, cy = comps[0]
        if area < FALLBACK_MIN_AREA_FRAC * eye.width * eye.height:
            return None
        return (cx, cy), math.sqrt(area / math.pi)

    def detect_eyes(self, image: RgbImage) -> list[EyeBox]:
        min_area = FALLBACK_MIN_AREA_FRAC * image.width * image.height
        boxes = []
        for area, cx, cy in _dark_components(image)[:2]:
            if area < min_area:
                continue
            r = math.sqrt(area / math.pi)
            half = 2.4 * r
            box = EyeBox(int(round(cx - half)), int(round(cy - half)),
                         int(round(2 * half)), int(round(2 * half)))
            boxes.append(box.clamp(image.width, image.height))
        boxes.sort(key=lambda b: b.x)
        return boxes


class RemoteEyeDetector:
    """HTTP client for an external eye-detection service.

    Endpoint and credential come from VISION_ENDPOINT / VISION_API_KEY unless
    passed explicitly. The response format is the one stored under
    tests/data/vision_response.json: {"faces": [{"eyes": [{"side", "x", "y",
    "width", "height"}, ...]}]}.
    """

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 timeout: float = 10.0, client=None):
        self.endpoint = endpoint or os.environ.get("VISION_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("VISION_API_KEY", "")
        self.timeout = timeout
        self._client = client
        if not self.endpoint:
            raise RemoteDetectorError("no VISION_ENDPOINT configured")

    def _post(self, payload: dict) -> dict:
        import httpx

        client = self._client or httpx
        try:
            resp = client.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except httpx.TimeoutException as exc:
            raise DetectorTimeout(f"eye detection timed out after {self.timeout}s") from exc
        except httpx.HTTPError as exc:
            raise RemoteDetectorError(f"eye detection request failed: {exc}") from exc
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After")
            raise RemoteDetectorError("eye detection rate-limited",
                                      retry_after=float(retry) if retry else None)
        if resp.status_code != 200:
            raise RemoteDetectorError(f"eye detection returned HTTP {resp.status_code}")
        return resp.json()

    def detect_eyes(self, image: RgbImage) -> list[EyeBox]:
        import io

        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(image.array, mode="RGB").save(buf, format="PNG")
        payload = {"image": base64.b64encode(buf.getvalue()).decode("ascii")}
        data = self._post(payload)
        return parse_eye_response(data, image.width, image.height)

    def detect_pupil(self, eye: RgbImage):
        # the remote service only locates eyes; pupil localization stays local
        return FallbackDetector().detect_pupil(eye)


def parse_eye_response(data: dict, img_w: int, img_h: int) -> list[EyeBox]:
    boxes = []
    for face in data.get("faces", []):
        for eye in face.get("eyes", []):
            box = EyeBox(int(eye["x"]), int(eye["y"]), int(eye["width"]), int(eye["height"]))
            boxes.append(box.clamp(img_w, img_h))
    boxes.sort(key=lambda b: b.x)
    return boxes


class ChainedDetector:
    """Remote detector with a local fallback when the remote call fails."""

    def __init__(self, primary: Detector, fallback: Detector):
        self.primary = primary
        self.fallback = fallback

    def detect_eyes(self, image: RgbImage) -> list[EyeBox]:
        try:
            return self.primary.detect_eyes(image)
        except RemoteDetectorError:
            return self.fallback.detect_eyes(image)

    def detect_pupil(self, eye: RgbImage):
        try:
            return self.primary.detect_pupil(eye)
        except RemoteDetectorError:
            return self.fallback.detect_pupil(eye)


def crop_window_side(radius: float, margin: float = CROP_MARGIN) -> int:
    """floor(2 * radius * (1 + margin)), rounded up to even."""
    side = int(math.floor(2.0 * radius * (1.0 + margin)))
    return side + 1 if side % 2 == 1 else side


def crop_pupil(eye: RgbImage, center: tuple[float, float], radius: float,
               margin: float = CROP_MARGIN, out_size: int = CROP_SIZE,
               source_id: str = "") -> PupilCrop:
    """Cut a square window of side 2*radius*(1+margin) around the pupil
    (floor, rounded up to even), clamp it into the image, and resample to
    out_size x out_size.
    """
    if radius <= 1.0:
        raise PipelineError(f"degenerate pupil radius {radius:.2f}px")
    cx, cy = center
    side = min(crop_window_side(radius, margin), eye.width, eye.height)
    side = max(side, 2)

    x0 = int(round(cx)) - side // 2
    y0 = int(round(cy)) - side // 2
    x0 = max(0, min(x0, eye.width - side))
    y0 = max(0, min(y0, eye.height - side))
    window = eye.array[y0:y0 + side, x0:x0 + side]

    scale = out_size / side
    resized = cv2.resize(window, (out_size, out_size), interpolation=cv2.INTER_LINEAR)
    new_cx = (cx - x0) * scale
    new_cy = (cy - y0) * scale
    new_r = radius * scale
    # keep the stored disk inside the crop even when clamping cut into it
    new_r = min(new_r, new_cx + 0.5, new_cy + 0.5,
                out_size - new_cx + 0.5, out_size - new_cy + 0.5)
    return PupilCrop(source_id=source_id, image=RgbImage(resized),
                     pupil_center=(new_cx, new_cy), pupil_radius=new_r)


@dataclass(frozen=True)
class WhitenessMap:
    """Per-pixel min(R,G,B) scores over the pupil disk."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("whiteness values and mask must share a shape")
        if not self.mask.any():
            raise ValueError("empty pupil mask")


def whiteness_map(crop: PupilCrop) -> WhitenessMap:
    scores = crop.image.array.min(axis=2).astype(np.float64)
    return WhitenessMap(values=scores, mask=crop.pupil_mask())


@dataclass(frozen=True)
class ReflexComponent:
    pixels: np.ndarray           # (N, 2) array of (y, x) coordinates
    area: int
    centroid: tuple[float, float]  # (x, y)
    elongation: float


VERDICTS = ("usable", "too_big", "too_small", "too_elongated", "no_reflex")


@dataclass(frozen=True)
class ReflexReport:
    components: tuple[ReflexComponent, ...]
    selected: Optional[int] = None
    verdict: Optional[str] = None


def _component_stats(ys: np.ndarray, xs: np.ndarray) -> ReflexComponent:
    area = len(ys)
    cx, cy = float(xs.mean()), float(ys.mean())
    # second central moments with the 1/12 unit-square term so single pixels
    # and straight lines stay finite
    vx = float(((xs - cx) ** 2).mean()) + 1.0 / 12.0
    vy = float(((ys - cy) ** 2).mean()) + 1.0 / 12.0
    vxy = float(((xs - cx) * (ys - cy)).mean())
    tr, det = vx + vy, vx * vy - vxy * vxy
    disc = max(0.0, (tr / 2.0) ** 2 - det)
    lam1 = tr / 2.0 + math.sqrt(disc)
    lam2 = max(tr / 2.0 - math.sqrt(disc), 1e-12)
    return ReflexComponent(
        pixels=np.column_stack([ys, xs]),
        area=area,
        centroid=(cx, cy),
        elongation=math.sqrt(lam1 / lam2),
    )


def detect_reflexes(wmap: WhitenessMap, seed_delta: float = 1e-9) -> ReflexReport:
    """Hysteresis segmentation of reflex candidates.

    Seeds are the pixels at the maximum whiteness (within seed_delta); regions
    grow 8-connected through every pixel within one population standard
    deviation of that maximum. Components are reported largest-first.
    """
    w, mask = wmap.values, wmap.mask
    inside = w[mask]
    w_max = float(inside.max())
    sigma = float(inside.std())
    seeds = mask & (w >= w_max - seed_delta)
    grow = mask & (w >= w_max - sigma)
    labeled, count = ndimage.label(grow, structure=EIGHT_CONN)
    seed_labels = np.unique(labeled[seeds])
    comps = []
    for lab in seed_labels:
        if lab == 0:
            continue
        ys, xs = np.nonzero(labeled == lab)
        comps.append(_component_stats(ys, xs))
    comps.sort(key=lambda c: (-c.area, c.pixels[0, 0], c.pixels[0, 1]))
    return ReflexReport(components=tuple(comps))


def select_and_gate(report: ReflexReport, pupil: PupilCrop,
                    gates: GateConfig | None = None) -> ReflexReport:
    """Pick the reflex nearest the pupil center and fill in the verdict.

    Ties on distance go to the larger component, then the smaller (y, x)
    centroid. Verdict order: no_reflex, too_small, too_big, too_elongated,
    usable.
    """
    gates = gates or GateConfig()
    if not report.components:
        return replace(report, selected=None, verdict="no_reflex")
    cx, cy = pupil.pupil_center
    ranked = sorted(
        range(len(report.components)),
        key=lambda i: (
            math.hypot(report.components[i].centroid[0] - cx,
                       report.components[i].centroid[1] - cy),
            -report.components[i].area,
            report.components[i].centroid[1],
            report.components[i].centroid[0],
        ),
    )
    sel = ranked[0]
    comp = report.components[sel]
    pupil_area = math.pi * pupil.pupil_radius ** 2
    if comp.area < gates.min_area_frac * pupil_area:
        verdict = "too_small"
    elif comp.area > gates.max_area_frac * pupil_area:
        verdict = "too_big"
    elif comp.elongation > gates.max_elongation:
        verdict = "too_elongated"
    else:
        verdict = "usable"
    return replace(report, selected=sel if verdict == "usable" else None, verdict=verdict)


@dataclass(frozen=True)
class ProcessedEye:
    """Everything the ingestion step knows about one eye image."""

    crop: Optional[PupilCrop]
    report: Optional[ReflexReport]
    verdict: str
    reflex_mask: Optional[np.ndarray] = field(default=None, compare=False)


def process_eye(eye: RgbImage, detector: Detector | None = None,
                gates: GateConfig | None = None, source_id: str = "") -> ProcessedEye:
    """Localize the pupil, crop it, and run the reflex usability gate.

    Verdict 'no_pupil' means localization failed before any reflex analysis.
    """
    detector = detector or FallbackDetector()
    found = detector.detect_pupil(eye)
    if found is None:
        return ProcessedEye(crop=None, report=None, verdict="no_pupil")
    center, radius = found
    try:
        crop = crop_pupil(eye, center, radius, source_id=source_id)
    except PipelineError:
        return ProcessedEye(crop=None, report=None, verdict="no_pupil")
    report = select_and_gate(detect_reflexes(whiteness_map(crop)), crop, gates)
    mask = None
    if report.selected is not None:
        comp = report.components[report.selected]
        mask = np.zeros((crop.side, crop.side), dtype=bool)
        mask[comp.pixels[:, 0], comp.pixels[:, 1]] = True
    return ProcessedEye(crop=crop, report=report, verdict=report.verdict, reflex_mask=mask)
