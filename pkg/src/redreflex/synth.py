"""Deterministic synthetic red-reflex imagery with exact ground truth.

Each subject gets two eyes that share base colors and pupil size. A normal
eye carries a bright, colorless reflex spot near the pupil center; abnormal
eyes render one of four stylized archetypes:

* diffuse_white      - broad low-intensity white haze over much of the pupil
* off_center_crescent - crescent-shaped reflex displaced from the center
* asymmetric_dim     - reflex dimmed well below the sibling eye's intensity
* absent_reflex      - no reflex at all

The reflex profile is a near-flat plateau with a small peaked cap at its
anchor pixel, so the whiteness argmax identifies the stored center even under
pixel noise, while hysteresis growth still recovers the full spot area.
Every byte of output is a pure function of (config, seed).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .augment import derive_seed
from .core import DatasetManifest, EyeRecord, ManifestEntry, RgbImage, save_manifest, save_png
from .errors import ConfigurationError
from .pipeline import ProcessedEye

KINDS = ("diffuse_white", "off_center_crescent", "asymmetric_dim", "absent_reflex")

# additive white intensities of the rendered reflex
PLATEAU = 205.0
CAP = 20.0
CAP_SIGMA = 1.2
EDGE_SIGMA = 1.0


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int
    abnormal_fraction: float = 0.28
    image_size: int = 128
    noise_sigma: float = 2.0
    seed: int = 0
    kinds: tuple[str, ...] = KINDS

    def __post_init__(self):
        if not 0.0 <= self.abnormal_fraction <= 1.0:
            raise ConfigurationError("abnormal_fraction must be in [0, 1]")
        if self.image_size < 64:
            raise ConfigurationError("image_size must be >= 64")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise ConfigurationError(f"unknown abnormality kinds {bad}")
        if self.abnormal_fraction > 0 and not self.kinds:
            raise ConfigurationError("abnormal_fraction > 0 needs at least one kind")


@dataclass(frozen=True)
class SynthRecord:
    record: EyeRecord
    kind: Optional[str]                      # None for normal eyes
    pupil_center: tuple[float, float]
    pupil_radius: float
    reflex_center: Optional[tuple[int, int]] = None    # whiteness argmax anchor
    reflex_centroid: Optional[tuple[float, float]] = None
    reflex_radius: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)


def _disk_profile(dist, radius):
    """Plateau inside `radius`, Gaussian shoulder beyond it."""
    out = np.ones_like(dist)
    beyond = dist > radius
    out[beyond] = np.exp(-((dist[beyond] - radius) ** 2) / (2.0 * EDGE_SIGMA ** 2))
    return out


def _nearest_mask_pixel(mask, point):
    ys, xs = np.nonzero(mask)
    d2 = (xs - point[0]) ** 2 + (ys - point[1]) ** 2
    i = int(np.argmin(d2))
    return int(xs[i]), int(ys[i])


class _EyeRenderer:
    """Geometry shared by both eyes of one subject."""

    def __init__(self, config: SynthConfig, subject_idx: int):
        rng = np.random.default_rng(derive_seed(config.seed, 1, subject_idx))
        s = config.image_size
        self.config = config
        self.subject_idx = subject_idx
        self.size = s
        self.field_color = np.array([95, 82, 72], dtype=np.float64) + rng.uniform(-8, 8, 3)
        self.pupil_color = (np.array([150, 30, 30], dtype=np.float64)
                            + rng.uniform((-15, -6, -6), (15, 6, 6)))
        self.pupil_radius = rng.uniform(0.26, 0.34) * s

    def render(self, eye_idx: int, kind: Optional[str]):
        rng = np.random.default_rng(
            derive_seed(self.config.seed, 2, self.subject_idx, eye_idx))
        s = self.size
        cx = s / 2.0 + rng.uniform(-0.03, 0.03) * s
        cy = s / 2.0 + rng.uniform(-0.03, 0.03) * s
        r_p = self.pupil_radius * rng.uniform(0.97, 1.03)

        yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
        img = np.tile(self.field_color, (s, s, 1))
        pupil_dist = np.hypot(xx - cx, yy - cy)
        inside = pupil_dist <= r_p
        # gentle radial falloff toward the rim keeps the noise-free render
        # from being a degenerate two-level image
        shade = 1.0 - 0.05 * (pupil_dist[inside] / r_p) ** 2
        img[inside] = self.pupil_color[None, :] * shade[:, None]

        spot, anchor, centroid, radius = self._reflex(rng, xx, yy, cx, cy, r_p, kind)
        if spot is not None:
            img = img + spot[:, :, None]

        sigma = self.config.noise_sigma
        if sigma > 0:
            img = img + rng.normal(0.0, sigma, (s, s, 3))
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        return RgbImage(img), (cx, cy), r_p, anchor, centroid, radius

    def _reflex(self, rng, xx, yy, cx, cy, r_p, kind):
        if kind == "absent_reflex":
            return None, None, None, None

        # cap heights balance two needs: tall enough that the anchor pixel
        # stays the whiteness argmax under noise, short enough that the
        # hysteresis band (one sigma below max) still reaches the plateau
        if kind == "diffuse_white":
            # area capped at 0.40 so the darkened ring the pupil detector
            # sees still yields a whiteness mask reaching base-pupil pixels
            area_frac = rng.uniform(0.30, 0.40)
            intensity = rng.uniform(80.0, 100.0)
            cap = 25.0
            center = (cx, cy)
        elif kind == "off_center_crescent":
            area_frac = rng.uniform(0.06, 0.10)
            intensity = PLATEAU
            cap = CAP
            angle = rng.uniform(0, 2 * math.pi)
            shift = rng.uniform(0.32, 0.42) * r_p
            center = (cx + shift * math.cos(angle), cy + shift * math.sin(angle))
        elif kind == "asymmetric_dim":
            area_frac = rng.uniform(0.05, 0.09)
            intensity = PLATEAU / rng.uniform(2.2, 3.0)
            cap = 15.0
            jit = 0.05 * r_p
            center = (cx + rng.uniform(-jit, jit), cy + rng.uniform(-jit, jit))
        else:  # normal: centered spot covering 3-8% of the pupil area
            area_frac = rng.uniform(0.03, 0.08)
            intensity = PLATEAU
            cap = CAP
            jit = 0.05 * r_p
            center = (cx + rng.uniform(-jit, jit), cy + rng.uniform(-jit, jit))

        radius = math.sqrt(area_frac) * r_p
        dist = np.hypot(xx - center[0], yy - center[1])
        shape = _disk_profile(dist, radius)
        if kind == "off_center_crescent":
            # carve an offset disk out of the spot, leaving a moon sliver
            toward = np.array([cx - center[0], cy - center[1]])
            toward = toward / max(np.linalg.norm(toward), 1e-9)
            carve_c = np.array(center) + 0.85 * radius * toward
            carve_dist = np.hypot(xx - carve_c[0], yy - carve_c[1])
            shape = shape * (1.0 - _disk_profile(carve_dist, 0.9 * radius))

        mask = shape > 0.5
        if not mask.any():
            return None, None, None, None
        ys, xs = np.nonzero(mask)
        centroid = (float(xs.mean()), float(ys.mean()))
        ax, ay = _nearest_mask_pixel(mask, centroid)
        cap_dist = np.hypot(xx - ax, yy - ay)
        spot = intensity * shape + cap * np.exp(
            -cap_dist ** 2 / (2.0 * CAP_SIGMA ** 2)) * (shape > 0.05)
        return spot, (ax, ay), centroid, radius


def _assign_labels(config: SynthConfig):
    n_eyes = 2 * config.n_subjects
    n_abnormal = int(round(config.abnormal_fraction * n_eyes))
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    order = rng.permutation(n_eyes)
    abnormal = np.zeros(n_eyes, dtype=bool)
    abnormal[order[:n_abnormal]] = True
    return abnormal


def generate(config: SynthConfig) -> tuple[list[SynthRecord], DatasetManifest]:
    """Render the full dataset. Manifest paths follow the '<id>.png' convention
    used by write_dataset."""
    abnormal = _assign_labels(config)
    records: list[SynthRecord] = []
    entries: list[ManifestEntry] = []
    for subject_idx in range(config.n_subjects):
        renderer = _EyeRenderer(config, subject_idx)
        subject_id = f"s{subject_idx:05d}"
        kind_rng = np.random.default_rng(derive_seed(config.seed, 3, subject_idx))
        kinds: list[Optional[str]] = []
        for eye_idx in range(2):
            if abnormal[2 * subject_idx + eye_idx]:
                kind = str(kind_rng.choice(config.kinds))
                # two dim eyes cannot be mutually asymmetric; re-kind the second
                if (kind == "asymmetric_dim" and kinds
                        and kinds[0] == "asymmetric_dim" and len(config.kinds) > 1):
                    alternatives = [k for k in config.kinds if k != "asymmetric_dim"]
                    kind = str(kind_rng.choice(alternatives))
                kinds.append(kind)
            else:
                kinds.append(None)
        for eye_idx, side in enumerate(("left", "right")):
            kind = kinds[eye_idx]
            image, p_center, p_radius, anchor, centroid, radius = renderer.render(
                eye_idx, kind)
            eye_id = f"{subject_id}_{side[0]}"
            label = "abnormal" if kind else "normal"
            rec = EyeRecord(id=eye_id, subject_id=subject_id, side=side,
                            image=image, label=label)
            records.append(SynthRecord(
                record=rec, kind=kind, pupil_center=p_center, pupil_radius=p_radius,
                reflex_center=anchor, reflex_centroid=centroid, reflex_radius=radius))
            entries.append(ManifestEntry(
                id=eye_id, subject_id=subject_id, path=f"{eye_id}.png",
                side=side, label=label, split="unassigned"))
    return records, DatasetManifest(tuple(entries))


def write_dataset(records: list[SynthRecord], manifest: DatasetManifest,
                  out_dir) -> Path:
    """Write PNGs, manifest.jsonl, and ground_truth.jsonl; returns the
    manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        save_png(rec.record.image, out_dir / f"{rec.record.id}.png")
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(DatasetManifest(manifest.entries, root=out_dir), manifest_path)
    with open(out_dir / "ground_truth.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "id": rec.record.id,
                "kind": rec.kind,
                "pupil_center": list(rec.pupil_center),
                "pupil_radius": rec.pupil_radius,
                "reflex_center": list(rec.reflex_center) if rec.reflex_center else None,
                "reflex_centroid": list(rec.reflex_centroid) if rec.reflex_centroid else None,
                "reflex_radius": rec.reflex_radius,
            }) + "\n")
    return manifest_path


EXPECTED_VERDICTS = {
    None: {"usable"},
    "off_center_crescent": {"usable"},
    "asymmetric_dim": {"usable"},
    "diffuse_white": {"too_big"},
    "absent_reflex": {"no_reflex", "too_small"},
}


@dataclass(frozen=True)
class OracleResult:
    passed: bool
    verdict_ok: bool
    centroid_ok: Optional[bool]          # None when no centroid check applies
    deviation_frac: Optional[float]      # |offset error| in pupil radii


def oracle_check(record: SynthRecord, processed: ProcessedEye,
                 mirrored: bool = False, tolerance: float = 0.10) -> OracleResult:
    """Compare a pipeline run against the renderer's ground truth.

    The centroid check is done in pupil-relative coordinates (offset from
    pupil center in units of pupil radius) so it is independent of crop
    geometry; `mirrored` flips the ground-truth x offset for records that
    went through left-eye mirroring.
    """
    expected = EXPECTED_VERDICTS[record.kind]
    verdict_ok = processed.verdict in expected
    centroid_ok = None
    deviation = None
    if record.kind == "off_center_crescent":
        # hysteresis recovers an extended sliver only approximately; compare
        # against its mask centroid with a proportionally looser bound
        tolerance = 3.0 * tolerance
    if record.kind in (None, "off_center_crescent", "asymmetric_dim"):
        if processed.crop is not None and processed.report is not None \
                and processed.report.selected is not None:
            comp = processed.report.components[processed.report.selected]
            px, py = processed.crop.pupil_center
            pr = processed.crop.pupil_radius
            got = ((comp.centroid[0] - px) / pr, (comp.centroid[1] - py) / pr)
            gx = (record.reflex_centroid[0] - record.pupil_center[0]) / record.pupil_radius
            gy = (record.reflex_centroid[1] - record.pupil_center[1]) / record.pupil_radius
            if mirrored:
                gx = -gx
            deviation = math.hypot(got[0] - gx, got[1] - gy)
            centroid_ok = deviation <= tolerance
        else:
            centroid_ok = False
    passed = verdict_ok and centroid_ok is not False
    return OracleResult(passed=passed, verdict_ok=verdict_ok,
                        centroid_ok=centroid_ok, deviation_frac=deviation)
