"""Model ensembling: average the member softmax outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RgbImage
from ..errors import ConfigurationError
from .head import HeadModel, confidence_of, forward, predict_label_index


@dataclass(frozen=True)
class Ensemble:
    members: tuple[HeadModel, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ConfigurationError("an ensemble needs at least two members")


def validate_providers(model, providers: dict) -> None:
    members = model.members if isinstance(model, Ensemble) else (model,)
    for m in members:
        if m.provider_name not in providers:
            raise ConfigurationError(f"no provider registered for {m.provider_name!r}")
        if providers[m.provider_name].dim != m.dim:
            raise ConfigurationError(
                f"provider {m.provider_name!r} produces {providers[m.provider_name].dim} "
                f"features but the head expects {m.dim}")


def ensemble_predict(ensemble: Ensemble, crop: RgbImage, providers: dict):
    """(mean probabilities, confidence) for one 224x224 crop; exact ties on
    the mean go to the abnormal class downstream via predict_label_index."""
    validate_providers(ensemble, providers)
    probs = []
    for member in ensemble.members:
        feats = providers[member.provider_name].embed(crop)
        probs.append(forward(member, feats)[1])
    mean = np.mean(probs, axis=0)
    return mean, confidence_of(mean)


def predict_class(probs: np.ndarray) -> str:
    from .head import CLASSES

    return CLASSES[predict_label_index(probs)]
