"""Domain types, dataset manifests, and the deterministic split.

Images are 8-bit RGB throughout. Eye records are the unit of the dataset:
the two eyes of one subject are distinct records, and left eyes are stored
mirrored so that every image shares the right-eye orientation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import ConfigurationError, DataError, ManifestIntegrityError, ManifestParseError

SIDES = ("left", "right")
LABELS = ("normal", "abnormal", "unlabeled")
SPLITS = ("train", "validation", "test", "unassigned")


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster, stored as an (H, W, 3) uint8 array."""

    array: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.array)
        if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"expected (H, W, 3) pixel array, got shape {a.shape}")
        if a.dtype != np.uint8:
            if np.issubdtype(a.dtype, np.floating):
                a = np.clip(np.rint(a), 0, 255)
            a = a.astype(np.uint8)
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "array", a)

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    def mirrored(self) -> "RgbImage":
        """Horizontal flip (left-right)."""
        return RgbImage(self.array[:, ::-1, :])

    def tobytes(self) -> bytes:
        return self.array.tobytes()


def load_png(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def save_png(image: RgbImage, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.array, mode="RGB").save(path, format="PNG")


def decode_image(data: bytes) -> RgbImage:
    """Decode PNG or JPEG bytes. Raises ValueError on anything else."""
    import io

    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ValueError(f"unsupported image format {im.format!r}")
            return RgbImage(np.asarray(im.convert("RGB")))
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"undecodable image: {exc}") from exc


@dataclass(frozen=True)
class EyeRecord:
    id: str
    subject_id: str
    side: str
    image: RgbImage
    label: str = "unlabeled"
    split: str = "unassigned"
    mirrored: bool = False

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"bad side {self.side!r}")
        if self.label not in LABELS:
            raise ValueError(f"bad label {self.label!r}")
        if self.split not in SPLITS:
            raise ValueError(f"bad split {self.split!r}")


@dataclass(frozen=True)
class PupilCrop:
    """Square pupil image with the detected disk geometry in crop coordinates."""

    source_id: str
    image: RgbImage
    pupil_center: tuple[float, float]
    pupil_radius: float

    def __post_init__(self):
        if self.image.width != self.image.height:
            raise ValueError("pupil crop must be square")
        if not self.pupil_radius > 0:
            raise ValueError("pupil radius must be positive")
        cx, cy = self.pupil_center
        side = self.image.width
        r = self.pupil_radius
        # disk may touch the border but not extend past it (half-pixel slack
        # for resampling rounding)
        if cx - r < -0.5 or cy - r < -0.5 or cx + r > side + 0.5 or cy + r > side + 0.5:
            raise ValueError("pupil disk not contained in crop")

    @property
    def side(self) -> int:
        return self.image.width

    def pupil_mask(self) -> np.ndarray:
        """Boolean (H, W) disk mask of the pupil."""
        s = self.side
        yy, xx = np.mgrid[0:s, 0:s]
        cx, cy = self.pupil_center
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= self.pupil_radius ** 2


MANIFEST_KEYS = ("id", "subject_id", "path", "side", "label", "split")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    subject_id: str
    path: str
    side: str
    label: str
    split: str
    meta: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in MANIFEST_KEYS}
        d.update(self.meta)
        return d


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    root: Optional[Path] = None

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate manifest ids: {dup[:5]}")

    def __len__(self) -> int:
        return len(self.entries)

    def label_counts(self) -> dict[str, int]:
        counts = {}
        for e in self.entries:
            counts[e.label] = counts.get(e.label, 0) + 1
        return counts

    def split_counts(self) -> dict[str, int]:
        counts = {}
        for e in self.entries:
            counts[e.split] = counts.get(e.split, 0) + 1
        return counts

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest(tuple(e for e in self.entries if e.split == split), self.root)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def load_image(self, entry: ManifestEntry) -> RgbImage:
        return load_png(self.resolve(entry))


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a JSONL manifest; one record per line, relative paths resolved
    against the manifest's directory.

    Raises ManifestParseError naming the offending line, and
    ManifestIntegrityError listing ids whose image files are missing.
    """
    path = Path(path)
    root = path.parent
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ManifestParseError(path, line_no, "expected a JSON object")
            missing = [k for k in MANIFEST_KEYS if k not in obj]
            if missing:
                raise ManifestParseError(path, line_no, f"missing keys {missing}")
            if obj["side"] not in SIDES:
                raise ManifestParseError(path, line_no, f"unknown side {obj['side']!r}")
            if obj["label"] not in LABELS:
                raise ManifestParseError(path, line_no, f"unknown label {obj['label']!r}")
            if obj["split"] not in SPLITS:
                raise ManifestParseError(path, line_no, f"unknown split {obj['split']!r}")
            meta = {k: v for k, v in obj.items() if k not in MANIFEST_KEYS}
            entries.append(ManifestEntry(
                id=str(obj["id"]), subject_id=str(obj["subject_id"]), path=str(obj["path"]),
                side=obj["side"], label=obj["label"], split=obj["split"], meta=meta))
    manifest = DatasetManifest(tuple(entries), root=root)
    if check_files:
        missing_ids = [e.id for e in entries if not manifest.resolve(e).is_file()]
        if missing_ids:
            raise ManifestIntegrityError(missing_ids)
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            fh.write(json.dumps(e.to_json()) + "\n")


def mirror_left_eyes(records: list[EyeRecord]) -> list[EyeRecord]:
    """Flip every left-eye image horizontally, exactly once.

    Right eyes pass through untouched; records already flagged as mirrored
    are not flipped again.
    """
    out = []
    for rec in records:
        if rec.side == "left" and not rec.mirrored:
            out.append(replace(rec, image=rec.image.mirrored(), mirrored=True))
        else:
            out.append(rec)
    return out


def _split_targets(ratios, class_counts):
    return {c: [r * n for r in ratios] for c, n in class_counts.items()}


def _deviation(counts, targets):
    """Total stratification violation beyond the +/-1-record tolerance."""
    v = 0.0
    for c, per_split in targets.items():
        for s in range(3):
            v += max(0.0, abs(counts[c][s] - per_split[s]) - 1.0)
    return v


def split_dataset(manifest: DatasetManifest, ratios: tuple[float, float, float],
                  seed: int) -> DatasetManifest:
    """Assign train/validation/test splits, stratified by label and exclusive
    by subject (both eyes of one subject always land in the same split).

    Deterministic for a fixed seed: subjects are ordered by id, shuffled with
    a seeded generator, placed greedily against the per-class targets, and a
    local repair pass then moves whole subjects until every class count is
    within one record of its target (or no single move improves matters).
    """
    if len(ratios) != 3:
        raise ConfigurationError("ratios must be (train, validation, test)")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios must sum to 1.0, got {sum(ratios)}")
    if any(r < 0 for r in ratios):
        raise ConfigurationError("ratios must be non-negative")
    assigned = [e for e in manifest.entries if e.split != "unassigned"]
    if assigned:
        raise DataError(f"{len(assigned)} entries already carry a split")

    labels = sorted({e.label for e in manifest.entries})
    class_counts = {c: 0 for c in labels}
    subjects: dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries:
        subjects.setdefault(e.subject_id, []).append(e)
        class_counts[e.label] += 1
    targets = _split_targets(ratios, class_counts)

    rng = np.random.default_rng(seed)
    subject_ids = sorted(subjects)
    rng.shuffle(subject_ids)
    # big subjects first so the small ones can patch remainders
    subject_ids.sort(key=lambda sid: -len(subjects[sid]))

    profile = {sid: {c: sum(1 for e in subjects[sid] if e.label == c) for c in labels}
               for sid in subject_ids}
    counts = {c: [0.0, 0.0, 0.0] for c in labels}
    placement: dict[str, int] = {}

    for sid in subject_ids:
        best_s, best_cost = 0, math.inf
        for s in range(3):
            cost = 0.0
            for c in labels:
                after = counts[c][s] + profile[sid][c]
                cost += max(0.0, after - targets[c][s])
                cost -= 0.25 * min(profile[sid][c], max(0.0, targets[c][s] - counts[c][s]))
            if cost < best_cost - 1e-12:
                best_s, best_cost = s, cost
        placement[sid] = best_s
        for c in labels:
            counts[c][best_s] += profile[sid][c]

    # repair: move single subjects while that strictly reduces the violation
    violation = _deviation(counts, targets)
    improved = True
    while violation > 1e-9 and improved:
        improved = False
        for sid in subject_ids:
            cur = placement[sid]
            for s in range(3):
                if s == cur:
                    continue
                for c in labels:
                    counts[c][cur] -= profile[sid][c]
                    counts[c][s] += profile[sid][c]
                cand = _deviation(counts, targets)
                if cand < violation - 1e-9:
                    placement[sid] = s
                    violation = cand
                    improved = True
                    break
                for c in labels:
                    counts[c][s] -= profile[sid][c]
                    counts[c][cur] += profile[sid][c]
            if improved:
                break

    split_names = ("train", "validation", "test")
    new_entries = tuple(replace(e, split=split_names[placement[e.subject_id]])
                        for e in manifest.entries)
    return DatasetManifest(new_entries, manifest.root)
