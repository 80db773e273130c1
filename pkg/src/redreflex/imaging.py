"""Grayscale raster math: the image property battery and the two-sample
Kolmogorov-Smirnov test used for the class/confidence comparisons.

All properties operate on Rec.601 luma (0.299 R + 0.587 G + 0.114 B) except
redness, which reads the red channel directly. Conventions the textbook
definitions leave open are pinned here so results are bit-reproducible:

* GLCM: right-neighbor offset (1, 0), 32 uniform gray levels, symmetric,
  normalized.
* LBP: raw 8-bit codes on the radius-1 ring (neighbor >= center), averaged
  over interior pixels; neighbor bit order E, NE, N, NW, W, SW, S, SE.
* Laplacian: 3x3 kernel [[0,1,0],[1,-4,1],[0,1,0]] with replicate padding.
* Entropy: base-2, histogram over the 256 raw 8-bit levels.
* Region perimeter: crack length, i.e. the number of unit edges between a
  region pixel and a non-region pixel (image border included), which makes a
  filled s x s square score exactly 4*pi*s^2/(4s)^2 = pi/4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import RgbImage
from .errors import DataError

EIGHT_CONN = np.ones((3, 3), dtype=bool)

LBP_OFFSETS = ((1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1))

PROPERTY_ORDER = (
    "contrast", "brightness", "redness", "energy", "entropy", "sharpness",
    "homogeneity", "fourier_energy", "compactness", "lbp", "intensity_ratio",
)


@dataclass(frozen=True)
class GrayImage:
    """Luminance raster with real values in [0, 255]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"expected (H, W) array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite gray values")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PropertyVector:
    contrast: float
    brightness: float
    redness: float
    energy: float
    entropy: float
    sharpness: float
    homogeneity: float
    fourier_energy: float
    compactness: float
    lbp: float
    intensity_ratio: float
    image_size: tuple[int, int]

    def scalars(self) -> dict[str, float]:
        d = {name: getattr(self, name) for name in PROPERTY_ORDER}
        w, h = self.image_size
        d["image_area"] = float(w * h)
        d["image_max_dim"] = float(max(w, h))
        return d


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    m: int
    n: int


def to_grayscale(image: RgbImage) -> GrayImage:
    a = image.array.astype(np.float64)
    r, g, b = a[:, :, 0], a[:, :, 1], a[:, :, 2]
    # algebraically 0.299 R + 0.587 G + 0.114 B, arranged so channel-equal
    # inputs map to exactly that value (the three coefficients do not sum to
    # 1.0 in floating point)
    return GrayImage(g + 0.299 * (r - g) + 0.114 * (b - g))


def laplacian(gray: GrayImage) -> np.ndarray:
    p = np.pad(gray.values, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * gray.values


def _entropy_bits(gray: GrayImage) -> float:
    hist, _ = np.histogram(gray.values, bins=256, range=(0.0, 256.0))
    p = hist[hist > 0] / gray.values.size
    return float(-np.sum(p * np.log2(p)))


def _glcm_homogeneity(gray: GrayImage, levels: int = 32) -> float:
    if gray.width < 2:
        return 1.0  # no horizontal pairs; degenerate image is perfectly uniform
    q = np.clip(np.floor(gray.values / (256.0 / levels)).astype(np.intp), 0, levels - 1)
    left, right = q[:, :-1].ravel(), q[:, 1:].ravel()
    m = np.zeros((levels, levels), dtype=np.float64)
    np.add.at(m, (left, right), 1.0)
    m = m + m.T
    m /= m.sum()
    i, j = np.indices((levels, levels))
    return float(np.sum(m / (1.0 + np.abs(i - j))))


def _lbp_mean(gray: GrayImage) -> float:
    g = gray.values
    if g.shape[0] < 3 or g.shape[1] < 3:
        return 0.0
    center = g[1:-1, 1:-1]
    code = np.zeros_like(center)
    for bit, (dx, dy) in enumerate(LBP_OFFSETS):
        neigh = g[1 + dy: g.shape[0] - 1 + dy, 1 + dx: g.shape[1] - 1 + dx]
        code += (neigh >= center) * float(1 << bit)
    return float(code.mean())


def crack_perimeter(mask: np.ndarray) -> int:
    """Unit edges between region and non-region (image border counts)."""
    m = mask.astype(bool)
    area = int(m.sum())
    horiz = int(np.logical_and(m[:, :-1], m[:, 1:]).sum())
    vert = int(np.logical_and(m[:-1, :], m[1:, :]).sum())
    return 4 * area - 2 * (horiz + vert)


def region_compactness(mask: np.ndarray) -> float:
    """4*pi*A/P^2 of a pixel region with crack-length perimeter."""
    area = int(np.count_nonzero(mask))
    if area == 0:
        raise ValueError("empty region mask")
    perim = crack_perimeter(mask)
    return 4.0 * math.pi * area / float(perim) ** 2


def bright_region_mask(gray: GrayImage) -> np.ndarray:
    """Largest 8-connected component at or above the 90th-percentile level."""
    thresh = np.percentile(gray.values, 90)
    mask = gray.values >= thresh
    labeled, count = ndimage.label(mask, structure=EIGHT_CONN)
    if count == 0:
        return mask
    sizes = ndimage.sum_labels(np.ones_like(labeled), labeled, index=range(1, count + 1))
    return labeled == (1 + int(np.argmax(sizes)))


def compute_properties(image: RgbImage, region_mask: np.ndarray | None = None) -> PropertyVector:
    """Evaluate the full property battery on one image.

    The compactness region is `region_mask` when given (e.g. the detected
    reflex component on a pupil crop), otherwise the thresholded bright
    region of the grayscale image.
    """
    gray = to_grayscale(image)
    g = gray.values
    if region_mask is not None:
        region_mask = np.asarray(region_mask, dtype=bool)
        if region_mask.shape != g.shape:
            raise ValueError(f"mask shape {region_mask.shape} != image shape {g.shape}")
        if not region_mask.any():
            raise ValueError("empty region mask")
    else:
        region_mask = bright_region_mask(gray)

    lap = laplacian(gray)
    g_max, g_min = float(g.max()), float(g.min())
    # both sides floored at 1 so an all-black image still satisfies ratio >= 1
    intensity_ratio = max(g_max, 1.0) / max(g_min, 1.0)

    return PropertyVector(
        contrast=float(g.std()),
        brightness=float(g.mean()),
        redness=float(image.array[:, :, 0].mean()),
        energy=float(np.abs(lap).mean()),
        entropy=_entropy_bits(gray),
        sharpness=float(lap.var()),
        homogeneity=_glcm_homogeneity(gray),
        fourier_energy=float(np.abs(np.fft.fftshift(np.fft.fft2(g))).sum()),
        compactness=region_compactness(region_mask),
        lbp=_lbp_mean(gray),
        intensity_ratio=intensity_ratio,
        image_size=(image.width, image.height),
    )


def _kolmogorov_sf(lam: float) -> float:
    """Asymptotic two-sided KS survival function 2*sum (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0.04:  # series is 1.0 to double precision below this point
        return 1.0
    total, sign, k = 0.0, 1.0, 1
    while k <= 1000:
        term = math.exp(-2.0 * k * k * lam * lam)
        if term < 1e-12:
            break
        total += sign * term
        sign = -sign
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS statistic D = sup |ECDF_a - ECDF_b| with the asymptotic
    p-value under the small-sample correction lam = (sqrt(e)+0.12+0.11/sqrt(e))*D,
    e = m*n/(m+n).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs at least one observation per sample")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("KS test requires finite values")
    m, n = a.size, b.size
    a_sorted, b_sorted = np.sort(a), np.sort(b)
    pts = np.concatenate([a_sorted, b_sorted])
    cdf_a = np.searchsorted(a_sorted, pts, side="right") / m
    cdf_b = np.searchsorted(b_sorted, pts, side="right") / n
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    e = m * n / (m + n)
    lam = (math.sqrt(e) + 0.12 + 0.11 / math.sqrt(e)) * d
    return KsResult(statistic=d, p_value=_kolmogorov_sf(lam), m=m, n=n)


@dataclass(frozen=True)
class PropertyStat:
    ks: KsResult
    mean_normal: float
    mean_abnormal: float
    significant: bool


@dataclass(frozen=True)
class PropertyClassReport:
    stats: dict[str, PropertyStat]
    p_threshold: float

    def significant_properties(self) -> list[str]:
        return [name for name, s in self.stats.items() if s.significant]

    def to_json(self) -> dict:
        return {
            name: {
                "D": s.ks.statistic,
                "p": s.ks.p_value,
                "mean_normal": s.mean_normal,
                "mean_abnormal": s.mean_abnormal,
                "significant": s.significant,
            }
            for name, s in self.stats.items()
        }


def property_class_report(vectors_and_labels, p_threshold: float = 0.001) -> PropertyClassReport:
    """Per-property KS comparison of the normal vs abnormal classes.

    Scalarizes image size as both total area and max dimension, since either
    reading of "size" may be wanted downstream.
    """
    normal = [v for v, lab in vectors_and_labels if lab == "normal"]
    abnormal = [v for v, lab in vectors_and_labels if lab == "abnormal"]
    if not normal or not abnormal:
        raise DataError("property report needs both classes present")
    names = list(normal[0].scalars().keys())
    stats = {}
    for name in names:
        a = [v.scalars()[name] for v in normal]
        b = [v.scalars()[name] for v in abnormal]
        ks = ks_two_sample(a, b)
        stats[name] = PropertyStat(
            ks=ks,
            mean_normal=float(np.mean(a)),
            mean_abnormal=float(np.mean(b)),
            significant=ks.p_value < p_threshold,
        )
    return PropertyClassReport(stats=stats, p_threshold=p_threshold)
