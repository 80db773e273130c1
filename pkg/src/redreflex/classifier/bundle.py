"""Model bundle: one zip archive holding config JSON and raw weight blobs.

Blobs are little-endian float32, row-major, with shapes declared in the
config, so any runtime can reconstruct the arrays without pickle. The bundle
also carries the fitted feedback rules and quantiles so inference is fully
self-contained.
"""
from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .ensemble import Ensemble
from .head import HeadModel

FORMAT = "redreflex-bundle/1"


def _blob(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _unblob(data: bytes, shape) -> np.ndarray:
    arr = np.frombuffer(data, dtype="<f4").reshape(shape)
    return arr.astype(np.float64)


def _member_spec(model: HeadModel, prefix: str):
    arrays = dict(model.weights)
    arrays["feat_mean"] = model.feat_mean
    arrays["feat_std"] = model.feat_std
    spec = {
        "provider": model.provider_name,
        "dim": model.dim,
        "hidden_units": model.hidden_units,
        "seed": model.seed,
        "best_val_loss": None if np.isnan(model.best_val_loss) else model.best_val_loss,
        "arrays": {name: {"file": f"{prefix}/{name}.bin", "shape": list(a.shape)}
                   for name, a in arrays.items()},
    }
    return spec, arrays


def save_bundle(path, model, *, augment_mix: str = "none",
                feedback_rules: list[dict] | None = None,
                feedback_quantiles: dict | None = None,
                extra: dict | None = None) -> str:
    """Write a head or ensemble plus metadata; returns the version hash."""
    members = list(model.members) if isinstance(model, Ensemble) else [model]
    config = {
        "format": FORMAT,
        "classes": ["normal", "abnormal"],
        "augment_mix": augment_mix,
        "feedback_rules": feedback_rules or [],
        "feedback_quantiles": feedback_quantiles or {},
        "members": [],
    }
    if extra:
        config.update(extra)
    blobs = {}
    for i, m in enumerate(members):
        spec, arrays = _member_spec(m, f"member{i}")
        config["members"].append(spec)
        for name, arr in arrays.items():
            blobs[f"member{i}/{name}.bin"] = _blob(arr)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("config.json", json.dumps(config, indent=2))
        for name, data in sorted(blobs.items()):
            zf.writestr(name, data)
    return bundle_hash(path)


@dataclass(frozen=True)
class ModelBundle:
    model: object                 # HeadModel or Ensemble
    config: dict = field(compare=False)
    version: str = ""
    path: str = ""

    @property
    def members(self) -> tuple[HeadModel, ...]:
        return self.model.members if isinstance(self.model, Ensemble) else (self.model,)

    @property
    def provider_names(self) -> tuple[str, ...]:
        return tuple(sorted({m.provider_name for m in self.members}))

    @property
    def feedback_rules(self) -> list[dict]:
        return list(self.config.get("feedback_rules", []))


def bundle_hash(path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:12]


def load_bundle(path) -> ModelBundle:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"model bundle not found: {path}")
    with zipfile.ZipFile(path, "r") as zf:
        try:
            config = json.loads(zf.read("config.json"))
        except KeyError as exc:
            raise ConfigurationError(f"{path}: no config.json in bundle") from exc
        if config.get("format") != FORMAT:
            raise ConfigurationError(f"{path}: unsupported bundle format "
                                     f"{config.get('format')!r}")
        members = []
        for spec in config["members"]:
            arrays = {name: _unblob(zf.read(meta["file"]), meta["shape"])
                      for name, meta in spec["arrays"].items()}
            feat_mean = arrays.pop("feat_mean")
            feat_std = arrays.pop("feat_std")
            members.append(HeadModel(
                provider_name=spec["provider"], feat_mean=feat_mean, feat_std=feat_std,
                weights=arrays, seed=spec.get("seed", 0),
                best_val_loss=spec.get("best_val_loss") or float("nan")))
    model = members[0] if len(members) == 1 else Ensemble(tuple(members))
    return ModelBundle(model=model, config=config, version=bundle_hash(path),
                       path=str(path))


def update_bundle_rules(path, feedback_rules: list[dict],
                        feedback_quantiles: dict | None = None) -> str:
    """Rewrite the bundle in place with new feedback rules; returns the new
    version hash."""
    path = Path(path)
    with zipfile.ZipFile(path, "r") as zf:
        config = json.loads(zf.read("config.json"))
        blobs = {n: zf.read(n) for n in zf.namelist() if n != "config.json"}
    config["feedback_rules"] = feedback_rules
    if feedback_quantiles is not None:
        config["feedback_quantiles"] = feedback_quantiles
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("config.json", json.dumps(config, indent=2))
        for name, data in sorted(blobs.items()):
            zf.writestr(name, data)
    return bundle_hash(path)
