"""On-the-fly training augmentations.

Nine kinds are supported: color_jitter, gaussian_blur, equalize, contrast,
sharpness, mirroring, translation, perspective, rotation. Parameter ranges
default to the published defaults of the common vision-transforms library,
transcribed as explicit numbers so behavior is pinned here:

* color_jitter: brightness/contrast/saturation factors in [0.75, 1.25],
  hue shift in [-0.05, 0.05] turns
* gaussian_blur: 3x3 kernel, sigma in [0.1, 2.0]
* equalize: per-channel histogram equalization
* contrast: factor in [0.5, 1.5] around the mean gray level
* sharpness: factor in [0.5, 1.5] blending against a 3x3 smoothed copy
* mirroring: horizontal flip
* translation: integer shift up to 10% of each side, vacated pixels filled 0
* perspective: corner distortion scale 0.2
* rotation: angle in [-15, 15] degrees

Geometric ops interpolate bilinearly with black fill. Every op applies with
its spec's probability (default 0.5) and is a pure function of
(spec, image, seed); mixes split the seed per stage.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .core import RgbImage
from .errors import ConfigurationError

KINDS = ("color_jitter", "gaussian_blur", "equalize", "contrast", "sharpness",
         "mirroring", "translation", "perspective", "rotation")

_DEFAULT_PARAMS = {
    "color_jitter": {"brightness": (0.75, 1.25), "contrast": (0.75, 1.25),
                     "saturation": (0.75, 1.25), "hue": (-0.05, 0.05)},
    "gaussian_blur": {"sigma": (0.1, 2.0)},
    "equalize": {},
    "contrast": {"factor": (0.5, 1.5)},
    "sharpness": {"factor": (0.5, 1.5)},
    "mirroring": {},
    "translation": {"max_frac": 0.1},
    "perspective": {"distortion": 0.2},
    "rotation": {"angle": (-15.0, 15.0)},
}

# hard caps; a spec outside these is a configuration error
_PARAM_BOUNDS = {
    "brightness": (0.0, 4.0), "contrast": (0.0, 4.0), "saturation": (0.0, 4.0),
    "hue": (-0.5, 0.5), "sigma": (0.01, 10.0), "factor": (0.0, 4.0),
    "max_frac": (0.0, 0.5), "distortion": (0.0, 1.0), "angle": (-180.0, 180.0),
}


def _check_range(name, value):
    lo, hi = _PARAM_BOUNDS[name]
    vals = value if isinstance(value, (tuple, list)) else (value,)
    for v in vals:
        if not lo <= float(v) <= hi:
            raise ConfigurationError(f"augment param {name}={value} outside [{lo}, {hi}]")
    if isinstance(value, (tuple, list)) and len(vals) == 2 and vals[0] > vals[1]:
        raise ConfigurationError(f"augment param {name}: empty range {value}")


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    params: dict = field(default_factory=dict)
    probability: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigurationError(f"probability {self.probability} outside [0, 1]")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise ConfigurationError(f"unknown param {key!r} for {self.kind}")
            if isinstance(value, list):
                value = tuple(value)
            merged[key] = value
        for key, value in merged.items():
            _check_range(key, value)
        object.__setattr__(self, "params", merged)


@dataclass(frozen=True)
class AugmentationMix:
    specs: tuple[AugmentationSpec, ...] = ()

    def __len__(self):
        return len(self.specs)


def mix_none() -> AugmentationMix:
    return AugmentationMix(())


def mix_best() -> AugmentationMix:
    """The best-performing mixture: color jitter, equalize, sharpness,
    translation, perspective, and rotation."""
    return AugmentationMix(tuple(
        AugmentationSpec(kind)
        for kind in ("color_jitter", "equalize", "sharpness",
                     "translation", "perspective", "rotation")))


def mix_all() -> AugmentationMix:
    return AugmentationMix(tuple(AugmentationSpec(kind) for kind in KINDS))


PRESETS = {"none": mix_none, "mix-best": mix_best, "mix-all": mix_all}


def mix_from_config(name: str, mixes: dict) -> AugmentationMix:
    if name in PRESETS:
        return PRESETS[name]()
    if name not in mixes:
        raise ConfigurationError(f"unknown augmentation mix {name!r}")
    specs = []
    for entry in mixes[name]:
        entry = dict(entry)
        kind = entry.pop("kind", None)
        prob = entry.pop("probability", 0.5)
        if kind is None:
            raise ConfigurationError(f"mix {name!r}: entry without 'kind'")
        specs.append(AugmentationSpec(kind, params=entry, probability=prob))
    return AugmentationMix(tuple(specs))


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from integer components."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def _uniform(rng, rang):
    lo, hi = rang
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def _rgb_to_hsv(arr):
    return cv2.cvtColor(arr.astype(np.float32) / 255.0, cv2.COLOR_RGB2HSV)


def _hsv_to_rgb(hsv):
    rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(np.rint(rgb.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)


def _gray_of(arr):
    a = arr.astype(np.float64)
    return 0.299 * a[:, :, 0] + 0.587 * a[:, :, 1] + 0.114 * a[:, :, 2]


def _blend(img, degenerate, factor):
    """degenerate + factor*(img - degenerate): factor 1 is identity, 0 fully degenerate."""
    out = degenerate + factor * (img - degenerate)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _apply_color_jitter(arr, params, rng):
    # fixed sub-op order: brightness, contrast, saturation, hue
    f = _uniform(rng, params["brightness"])
    arr = np.clip(np.rint(arr.astype(np.float64) * f), 0, 255).astype(np.uint8)
    f = _uniform(rng, params["contrast"])
    pivot = _gray_of(arr).mean()
    arr = _blend(arr.astype(np.float64), pivot, f)
    f = _uniform(rng, params["saturation"])
    gray = _gray_of(arr)[:, :, None]
    arr = _blend(arr.astype(np.float64), gray, f)
    shift = _uniform(rng, params["hue"])
    if shift != 0.0:
        hsv = _rgb_to_hsv(arr)
        hsv[:, :, 0] = (hsv[:, :, 0] + shift * 360.0) % 360.0
        arr = _hsv_to_rgb(hsv)
    return arr


def _gaussian_kernel3(sigma):
    xs = np.array([-1.0, 0.0, 1.0])
    k = np.exp(-xs * xs / (2.0 * sigma * sigma))
    return k / k.sum()


def _separable3(arr, k):
    """3-tap separable convolution with replicate padding."""
    padded = np.pad(arr, ((1, 1), (0, 0), (0, 0)), mode="edge")
    out = padded[:-2] * k[0] + padded[1:-1] * k[1] + padded[2:] * k[2]
    padded = np.pad(out, ((0, 0), (1, 1), (0, 0)), mode="edge")
    return padded[:, :-2] * k[0] + padded[:, 1:-1] * k[1] + padded[:, 2:] * k[2]


def _apply_gaussian_blur(arr, params, rng):
    sigma = _uniform(rng, params["sigma"])
    out = _separable3(arr.astype(np.float64), _gaussian_kernel3(sigma))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def equalize_channel(channel: np.ndarray) -> np.ndarray:
    """Classic cumulative-histogram equalization of one uint8 channel."""
    hist = np.bincount(channel.ravel(), minlength=256)
    cdf = hist.cumsum()
    nonzero = cdf[hist > 0]
    if len(nonzero) == 0:
        return channel
    cdf_min = int(nonzero[0])
    total = int(cdf[-1])
    if total == cdf_min:
        return channel  # single gray level
    lut = np.rint((cdf - cdf_min) / (total - cdf_min) * 255.0).astype(np.uint8)
    return lut[channel]


def _apply_equalize(arr, params, rng):
    return np.stack([equalize_channel(arr[:, :, c]) for c in range(3)], axis=2)


def _apply_contrast(arr, params, rng):
    f = _uniform(rng, params["factor"])
    pivot = _gray_of(arr).mean()
    return _blend(arr.astype(np.float64), pivot, f)


def _apply_sharpness(arr, params, rng):
    f = _uniform(rng, params["factor"])
    smooth = _separable3(arr.astype(np.float64), _gaussian_kernel3(1.0))
    return _blend(arr.astype(np.float64), smooth, f)


def _apply_mirroring(arr, params, rng):
    return arr[:, ::-1, :].copy()


def _apply_translation(arr, params, rng):
    h, w = arr.shape[:2]
    max_frac = float(params["max_frac"])
    dx = int(round(rng.uniform(-max_frac, max_frac) * w))
    dy = int(round(rng.uniform(-max_frac, max_frac) * h))
    return translate_pixels(arr, dx, dy)


def translate_pixels(arr: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer shift; pixel (x, y) lands at (x+dx, y+dy), fill value 0."""
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    xs0, xs1 = max(0, dx), min(w, w + dx)
    ys0, ys1 = max(0, dy), min(h, h + dy)
    if xs1 > xs0 and ys1 > ys0:
        out[ys0:ys1, xs0:xs1] = arr[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx]
    return out


def _apply_perspective(arr, params, rng):
    h, w = arr.shape[:2]
    d = float(params["distortion"])
    half_w, half_h = d * w / 2.0, d * h / 2.0
    # each corner pulled inward by up to distortion * side / 2
    tl = (rng.uniform(0, half_w), rng.uniform(0, half_h))
    tr = (w - 1 - rng.uniform(0, half_w), rng.uniform(0, half_h))
    br = (w - 1 - rng.uniform(0, half_w), h - 1 - rng.uniform(0, half_h))
    bl = (rng.uniform(0, half_w), h - 1 - rng.uniform(0, half_h))
    src = np.float32([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]])
    dst = np.float32([tl, tr, br, bl])
    if np.allclose(src, dst):
        return arr.copy()
    mat = cv2.getPerspectiveTransform(src, dst)
    return cv2.warpPerspective(arr, mat, (w, h), flags=cv2.INTER_LINEAR,
                               borderMode=cv2.BORDER_CONSTANT, borderValue=0)


def _apply_rotation(arr, params, rng):
    angle = _uniform(rng, params["angle"])
    if angle == 0.0:
        return arr.copy()
    h, w = arr.shape[:2]
    mat = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
    return cv2.warpAffine(arr, mat, (w, h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=0)


_APPLY = {
    "color_jitter": _apply_color_jitter,
    "gaussian_blur": _apply_gaussian_blur,
    "equalize": _apply_equalize,
    "contrast": _apply_contrast,
    "sharpness": _apply_sharpness,
    "mirroring": _apply_mirroring,
    "translation": _apply_translation,
    "perspective": _apply_perspective,
    "rotation": _apply_rotation,
}


def apply(spec: AugmentationSpec, image: RgbImage, rng_seed: int) -> RgbImage:
    """Apply one augmentation; a pure function of (spec, image, rng_seed)."""
    rng = np.random.default_rng(rng_seed)
    if spec.probability < 1.0 and rng.random() >= spec.probability:
        return image
    out = _APPLY[spec.kind](image.array, spec.params, rng)
    return RgbImage(out)


def apply_mix(mix: AugmentationMix, image: RgbImage, rng_seed: int) -> RgbImage:
    for stage, spec in enumerate(mix.specs):
        image = apply(spec, image, derive_seed(rng_seed, stage))
    return image


def sample_seed(base_seed: int, epoch: int, index: int) -> int:
    """Per-sample augmentation seed, stable across loader parallelism."""
    return derive_seed(base_seed, epoch, index)
