"""Classifier-head training loop and the multi-seed sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..augment import AugmentationMix, apply_mix, sample_seed
from ..config import TrainConfig
from ..errors import DataError, TrainingError
from .head import AdamWState, HeadModel, adamw_step, cross_entropy_loss, init_head, loss_and_grads
from .metrics import EvalReport, evaluate, label_to_index
from .providers import EmbeddingProvider, resize_to_input


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class TrainingLog:
    epochs: tuple[EpochStats, ...]
    best_epoch: int
    best_val_loss: float


def _embed_images(provider, images) -> np.ndarray:
    try:
        return np.stack([provider.embed(img) for img in images])
    except Exception as exc:
        raise TrainingError(f"embedding provider {provider.name!r} failed: {exc}") from exc


def train_head(provider: EmbeddingProvider, train_samples, val_samples,
               config: TrainConfig, mix: AugmentationMix | None = None
               ) -> tuple[HeadModel, TrainingLog]:
    """Train the head on (image, label) pairs, keeping the epoch with the
    lowest validation loss.

    Images are resized to the 224x224 provider input; augmentations (train
    split only) run at native crop resolution before that resize, with
    per-sample seeds derived from (seed, epoch, index).
    """
    if not train_samples or not val_samples:
        raise DataError("training and validation sets must be nonempty")
    y_train = np.array([label_to_index(lab) for _, lab in train_samples], dtype=np.intp)
    y_val = np.array([label_to_index(lab) for _, lab in val_samples], dtype=np.intp)
    if len(set(y_train.tolist())) < 2:
        raise DataError("training set contains a single class")

    train_images = [img for img, _ in train_samples]
    base_train = _embed_images(provider, [resize_to_input(im) for im in train_images])
    feats_val = _embed_images(provider, [resize_to_input(im) for im, _ in val_samples])
    augmenting = mix is not None and len(mix) > 0

    head = init_head(provider.name, provider.dim,
                     feat_mean=base_train.mean(axis=0), feat_std=base_train.std(axis=0),
                     hidden_units=config.hidden_units, seed=config.seed)
    params = head.weights
    state = AdamWState.zeros_like(params)
    rng = np.random.default_rng(config.seed)

    n = len(train_samples)
    best_val = math.inf
    best_epoch = 0
    best_params = params
    log: list[EpochStats] = []
    t = 0
    for epoch in range(1, config.max_epochs + 1):
        if augmenting:
            augmented = [apply_mix(mix, img, sample_seed(config.seed, epoch, i))
                         for i, img in enumerate(train_images)]
            feats_train = _embed_images(provider, [resize_to_input(im) for im in augmented])
        else:
            feats_train = base_train
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            t += 1
            loss, grads = loss_and_grads(head.with_weights(params),
                                         feats_train[idx], y_train[idx])
            params, state = adamw_step(params, grads, state, config, t)
            total_loss += loss * len(idx)
        val_loss = cross_entropy_loss(head.with_weights(params), feats_val, y_val)
        log.append(EpochStats(epoch=epoch, train_loss=total_loss / n, val_loss=val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}

    model = replace(head.with_weights(best_params), best_val_loss=best_val)
    return model, TrainingLog(epochs=tuple(log), best_epoch=best_epoch,
                              best_val_loss=best_val)


@dataclass(frozen=True)
class SweepSummary:
    seeds: tuple[int, ...]
    reports: tuple[EvalReport, ...]
    logs: tuple[TrainingLog, ...] = field(compare=False, default=())

    def metric_stats(self) -> dict[str, tuple[float, float]]:
        """Per metric: (sample mean, population std) across seeds."""
        stats = {}
        for name in self.reports[0].metric_dict():
            vals = np.array([r.metric_dict()[name] for r in self.reports])
            stats[name] = (float(vals.mean()), float(vals.std()))
        return stats

    def format_rows(self) -> dict[str, str]:
        return {name: f"{mean:.2f} ± {std:.2f}"
                for name, (mean, std) in self.metric_stats().items()}


def seed_sweep(n_seeds: int, provider: EmbeddingProvider, train_samples, val_samples,
               test_samples, config: TrainConfig, mix: AugmentationMix | None = None
               ) -> SweepSummary:
    """Repeat training for n_seeds consecutive seeds starting at config.seed
    and summarize test metrics as mean +/- population std."""
    if n_seeds < 2:
        raise ValueError("a sweep needs at least two seeds")
    seeds = tuple(config.seed + i for i in range(n_seeds))
    reports, logs = [], []
    for s in seeds:
        model, log = train_head(provider, train_samples, val_samples,
                                replace(config, seed=s), mix)
        reports.append(evaluate(model, [(resize_to_input(im), lab) for im, lab in test_samples],
                                {provider.name: provider}))
        logs.append(log)
    return SweepSummary(seeds=seeds, reports=tuple(reports), logs=tuple(logs))
