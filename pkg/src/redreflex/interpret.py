"""Model interpretability: occlusion attention maps with radial-focus
statistics, t-SNE boundary analysis, and the confidence-driven capture
feedback rules.

Attention uses gradient-free occlusion sensitivity (mid-gray patches slid
over the input; the heatmap is the drop in winner probability), since the
embedding providers expose no internal gradients. Externally produced
heatmaps can be fed into the same radial analysis.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

from .classifier.head import predict_label_index
from .classifier.metrics import predict_probabilities
from .classifier.providers import INPUT_SIZE, resize_to_input
from .core import RgbImage
from .errors import DataError, DegenerateMapError, InsufficientDataError
from .imaging import PropertyVector, ks_two_sample

OCCLUSION_PATCH = 16
OCCLUSION_STRIDE = 8
OCCLUSION_FILL = 128


@dataclass(frozen=True)
class AttentionMap:
    heatmap: np.ndarray
    source: str = "occlusion"            # occlusion | external
    grid_shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        h = np.asarray(self.heatmap, dtype=np.float64)
        if h.ndim != 2:
            raise ValueError("heatmap must be 2-D")
        if not np.all(np.isfinite(h)):
            raise ValueError("non-finite heatmap values")
        if np.any(h < 0):
            raise ValueError("heatmap values must be >= 0")
        h.setflags(write=False)
        object.__setattr__(self, "heatmap", h)


def occlusion_map(model, providers: dict, crop: RgbImage,
                  patch: int = OCCLUSION_PATCH, stride: int = OCCLUSION_STRIDE) -> AttentionMap:
    """Slide a mid-gray patch over the 224x224 input; each cell records
    max(0, p_winner(original) - p_winner(occluded)), bilinearly upsampled to
    the input size. A completely insensitive model yields a uniform epsilon
    map rather than all zeros.
    """
    img = resize_to_input(crop)
    base = predict_probabilities(model, [img], providers)[0]
    winner = predict_label_index(base)
    xs = list(range(0, INPUT_SIZE, stride))
    grid = np.zeros((len(xs), len(xs)))
    occluded = []
    for gy, y0 in enumerate(xs):
        for gx, x0 in enumerate(xs):
            arr = img.array.copy()
            arr[y0:min(y0 + patch, INPUT_SIZE), x0:min(x0 + patch, INPUT_SIZE)] = OCCLUSION_FILL
            occluded.append(RgbImage(arr))
    probs = predict_probabilities(model, occluded, providers)
    grid = np.maximum(0.0, base[winner] - probs[:, winner]).reshape(len(xs), len(xs))
    if grid.max() <= 0.0:
        grid = np.full_like(grid, 1e-8)
    heat = cv2.resize(grid, (INPUT_SIZE, INPUT_SIZE), interpolation=cv2.INTER_LINEAR)
    heat = np.maximum(heat, 0.0)
    return AttentionMap(heatmap=heat, source="occlusion", grid_shape=grid.shape)


@dataclass(frozen=True)
class RadialFocus:
    r_norm: float
    peak: tuple[int, int]       # (x, y)

    def __post_init__(self):
        if not 0.0 <= self.r_norm <= 1.0:
            raise ValueError(f"r_norm {self.r_norm} outside [0, 1]")


def radial_focus(amap: AttentionMap, method: str = "argmax") -> RadialFocus:
    """Normalized radial distance of the most attended point from the center:
    0 at the exact center, 1 at the (0, 0) corner.

    method="argmax" (default) uses the peak pixel, ties resolving to the
    smallest (y, x); method="region_centroid" uses the centroid of the
    half-maximum region instead.
    """
    h = amap.heatmap
    if h.max() <= 0.0:
        raise DegenerateMapError("all-zero attention map has no peak")
    if method == "argmax":
        flat = int(np.argmax(h))        # first occurrence = smallest (y, x)
        py, px = divmod(flat, h.shape[1])
    elif method == "region_centroid":
        ys, xs = np.nonzero(h >= 0.5 * h.max())
        px, py = float(xs.mean()), float(ys.mean())
    else:
        raise ValueError(f"unknown focus method {method!r}")
    cy, cx = h.shape[0] / 2.0, h.shape[1] / 2.0
    half_diag = math.hypot(cx, cy)
    return RadialFocus(r_norm=math.hypot(px - cx, py - cy) / half_diag,
                       peak=(int(px), int(py)))


@dataclass(frozen=True)
class RadialGroup:
    label: str
    correct: bool
    r_values: np.ndarray
    histogram: np.ndarray       # 20 bins over [0, 1]


@dataclass(frozen=True)
class RadialReport:
    groups: dict
    ks_tests: dict              # (group_key_a, group_key_b) -> KsResult


def radial_report(maps, labels, correctness, bins: int = 20) -> RadialReport:
    """Radial-focus distributions for the four (label x correctness) groups,
    plus pairwise KS tests. Empty groups are omitted with a warning."""
    keyed: dict[tuple[str, bool], list[float]] = {}
    for amap, label, correct in zip(maps, labels, correctness):
        keyed.setdefault((label, bool(correct)), []).append(radial_focus(amap).r_norm)
    groups = {}
    for (label, correct) in ((l, c) for l in ("normal", "abnormal") for c in (True, False)):
        vals = keyed.get((label, correct))
        if not vals:
            warnings.warn(f"radial report: empty group {(label, correct)}")
            continue
        arr = np.asarray(vals)
        hist, _ = np.histogram(arr, bins=bins, range=(0.0, 1.0))
        groups[(label, correct)] = RadialGroup(label=label, correct=correct,
                                               r_values=arr, histogram=hist)
    if len(groups) < 2:
        return RadialReport(groups=groups, ks_tests={})
    keys = sorted(groups, key=str)
    tests = {}
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            tests[(a, b)] = ks_two_sample(groups[a].r_values, groups[b].r_values)
    return RadialReport(groups=groups, ks_tests=tests)


@dataclass(frozen=True)
class BoundaryDistanceReport:
    signed_distances: np.ndarray
    median_abs_correct: float
    median_abs_incorrect: float


def boundary_distance_report(embedding: np.ndarray, labels, correctness) -> BoundaryDistanceReport:
    """Signed distance of each embedded point to the perpendicular bisector
    of the two class centroids (positive side = abnormal centroid)."""
    y = np.asarray(embedding, dtype=np.float64)
    labs = np.asarray(labels)
    correct = np.asarray(correctness, dtype=bool)
    normal = y[labs == "normal"]
    abnormal = y[labs == "abnormal"]
    if len(normal) == 0 or len(abnormal) == 0:
        raise DataError("boundary analysis needs both classes")
    c0, c1 = normal.mean(axis=0), abnormal.mean(axis=0)
    axis = c1 - c0
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise DataError("class centroids coincide; no boundary direction")
    axis = axis / norm
    midpoint = (c0 + c1) / 2.0
    signed = (y - midpoint) @ axis
    med_c = float(np.median(np.abs(signed[correct]))) if correct.any() else math.nan
    med_i = float(np.median(np.abs(signed[~correct]))) if (~correct).any() else math.nan
    return BoundaryDistanceReport(signed_distances=signed,
                                  median_abs_correct=med_c,
                                  median_abs_incorrect=med_i)


# capture-quality properties and the direction in which confident images
# differ: higher contrast, lower brightness, lower redness, higher intensity
# ratio
FEEDBACK_DIRECTIONS = {
    "contrast": "higher_is_confident",
    "brightness": "lower_is_confident",
    "redness": "lower_is_confident",
    "intensity_ratio": "higher_is_confident",
}

FEEDBACK_SUGGESTIONS = {
    "contrast": "increase contrast: move closer and use the flash in a darker room",
    "brightness": "lower the overall brightness: dim ambient lighting",
    "redness": "reduce ambient red light / use a darker background",
    "intensity_ratio": "boost the reflex highlight: enable the flash and darken the room",
}

GENERIC_SUGGESTION = "retake with a darker background and the flash enabled"


@dataclass(frozen=True)
class FeedbackRule:
    property_name: str
    direction: str
    threshold: float

    def to_dict(self) -> dict:
        return {"property": self.property_name, "direction": self.direction,
                "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackRule":
        return cls(property_name=d["property"], direction=d["direction"],
                   threshold=float(d["threshold"]))

    def violated_by(self, value: float) -> bool:
        if self.direction == "higher_is_confident":
            return value < self.threshold
        return value > self.threshold


@dataclass(frozen=True)
class FeedbackItem:
    property_name: str
    measured: Optional[float]
    threshold: Optional[float]
    suggestion: str

    def to_dict(self) -> dict:
        return {"property": self.property_name, "measured": self.measured,
                "threshold": self.threshold, "suggestion": self.suggestion}


def fit_feedback_rules(confidences, properties: list[PropertyVector],
                       p_threshold: float = 0.001, low_quantile: float = 25.0,
                       high_quantile: float = 75.0, min_samples: int = 20) -> list[FeedbackRule]:
    """Split at the median confidence into confident / not-confident halves
    and emit one rule per capture property whose distributions differ at
    p < p_threshold. Thresholds are quantiles of the confident group: the
    25th percentile when higher values mean confident, the 75th otherwise.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    if len(conf) != len(properties):
        raise ValueError("confidences and properties must align one-to-one")
    if len(conf) < min_samples:
        raise InsufficientDataError(
            f"need at least {min_samples} samples to fit feedback rules, got {len(conf)}")
    order = np.argsort(conf, kind="mergesort")
    confident_idx = set(order[len(conf) // 2:].tolist())   # top half by rank
    rules = []
    for name, direction in FEEDBACK_DIRECTIONS.items():
        vals = np.array([p.scalars()[name] for p in properties])
        confident = vals[[i in confident_idx for i in range(len(vals))]]
        rest = vals[[i not in confident_idx for i in range(len(vals))]]
        ks = ks_two_sample(confident, rest)
        if ks.p_value < p_threshold:
            q = low_quantile if direction == "higher_is_confident" else high_quantile
            rules.append(FeedbackRule(property_name=name, direction=direction,
                                      threshold=float(np.percentile(confident, q))))
    return rules


def generate_feedback(rules: list[FeedbackRule], properties: PropertyVector,
                      confidence: float, confidence_threshold: float = 0.8) -> list[FeedbackItem]:
    """Actionable retake guidance; empty when the model is already confident.
    When no fitted rule is violated, a generic capture suggestion is emitted
    instead of silence."""
    if confidence >= confidence_threshold:
        return []
    scalars = properties.scalars()
    items = [FeedbackItem(property_name=r.property_name,
                          measured=float(scalars[r.property_name]),
                          threshold=r.threshold,
                          suggestion=FEEDBACK_SUGGESTIONS[r.property_name])
             for r in rules if r.violated_by(scalars[r.property_name])]
    if not items:
        items = [FeedbackItem(property_name="capture", measured=None, threshold=None,
                              suggestion=GENERIC_SUGGESTION)]
    return items


def verdict_feedback(verdict: str) -> list[FeedbackItem]:
    """Retake guidance for images that failed the usability gate."""
    messages = {
        "no_pupil": "no pupil found: center one eye in the frame about 1 m away",
        "no_eye": "no eye found: center the face in the frame about 1 m away",
        "no_reflex": "no flash reflex visible: retake with the flash on in a darker room",
        "too_small": "reflex too small: move slightly closer and keep the flash on",
        "too_big": "reflex floods the pupil: move back or dim ambient light",
        "too_elongated": "reflex is smeared: hold the camera steady and retake",
    }
    return [FeedbackItem(property_name="usability", measured=None, threshold=None,
                         suggestion=messages.get(verdict, GENERIC_SUGGESTION))]
