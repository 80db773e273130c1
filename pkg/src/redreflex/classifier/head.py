"""The two-layer classifier head and its hand-rolled training math.

Architecture: normalized features -> 512 ReLU units -> 2 logits -> softmax.
A linear baseline (no hidden layer) is available through hidden_units=0.
Everything is float64 numpy; gradients are derived analytically and verified
against central finite differences by gradient_check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..config import TrainConfig
from ..errors import TrainingError

CLASSES = ("normal", "abnormal")  # abnormal is the positive class, index 1


@dataclass(frozen=True)
class HeadModel:
    provider_name: str
    feat_mean: np.ndarray
    feat_std: np.ndarray
    weights: dict            # w1, b1 (absent for a linear head), w2, b2
    seed: int = 0
    best_val_loss: float = math.nan

    @property
    def dim(self) -> int:
        return self.feat_mean.shape[0]

    @property
    def hidden_units(self) -> int:
        return self.weights["w1"].shape[1] if "w1" in self.weights else 0

    def with_weights(self, weights: dict) -> "HeadModel":
        return replace(self, weights=weights)


def init_head(provider_name: str, dim: int, feat_mean: np.ndarray, feat_std: np.ndarray,
              hidden_units: int = 512, seed: int = 0) -> HeadModel:
    rng = np.random.default_rng(seed)
    feat_std = np.where(feat_std > 1e-6, feat_std, 1.0)
    if hidden_units > 0:
        weights = {
            "w1": rng.normal(0.0, math.sqrt(2.0 / dim), (dim, hidden_units)),
            "b1": np.zeros(hidden_units),
            "w2": rng.normal(0.0, math.sqrt(2.0 / hidden_units), (hidden_units, 2)),
            "b2": np.zeros(2),
        }
    else:
        weights = {
            "w2": rng.normal(0.0, math.sqrt(2.0 / dim), (dim, 2)),
            "b2": np.zeros(2),
        }
    return HeadModel(provider_name=provider_name, feat_mean=np.asarray(feat_mean, float),
                     feat_std=feat_std, weights=weights, seed=seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(head: HeadModel, features: np.ndarray):
    """Returns (logits, probabilities, hidden activations) for an (N, d) batch."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != head.dim:
        raise ValueError(f"feature dim {x.shape[1]} != model dim {head.dim}")
    xn = (x - head.feat_mean) / head.feat_std
    if head.hidden_units > 0:
        h = np.maximum(0.0, xn @ head.weights["w1"] + head.weights["b1"])
        logits = h @ head.weights["w2"] + head.weights["b2"]
    else:
        h = xn
        logits = xn @ head.weights["w2"] + head.weights["b2"]
    return logits, softmax(logits), h


def forward(head: HeadModel, features: np.ndarray):
    """Single-vector forward pass: (logits, probabilities)."""
    logits, probs, _ = forward_batch(head, features)
    return logits[0], probs[0]


def predict_label_index(probs: np.ndarray) -> int:
    """Argmax with exact ties resolved to the abnormal class."""
    return 1 if probs[1] >= probs[0] else 0


def confidence_of(probs: np.ndarray) -> float:
    return float(probs.max(axis=-1))


def cross_entropy_loss(head: HeadModel, features: np.ndarray, labels: np.ndarray) -> float:
    _, probs, _ = forward_batch(head, features)
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def loss_and_grads(head: HeadModel, features: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its analytic gradients."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.intp)
    n = len(y)
    xn = (x - head.feat_mean) / head.feat_std
    logits, probs, h = forward_batch(head, x)
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300))))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    if head.hidden_units > 0:
        dh = dlogits @ head.weights["w2"].T
        dh[h <= 0.0] = 0.0
        grads["w1"] = xn.T @ dh
        grads["b1"] = dh.sum(axis=0)
    return loss, grads


@dataclass
class AdamWState:
    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamWState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: dict, grads: dict, state: AdamWState, config: TrainConfig,
               t: int) -> tuple[dict, AdamWState]:
    """One decoupled-weight-decay Adam update (step index t starts at 1):

        m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
    """
    if t < 1:
        raise ValueError("step index t starts at 1")
    b1, b2 = config.betas
    new_params, new_m, new_v = {}, {}, {}
    for key, theta in params.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter block {key!r}")
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[key] = (theta - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
                           - config.lr * config.weight_decay * theta)
        new_m[key], new_v[key] = m, v
    return new_params, AdamWState(m=new_m, v=new_v)


def gradient_check(head: HeadModel, features: np.ndarray, labels: np.ndarray,
                   n_samples: int = 200, step: float = 1e-4, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients
    over up to n_samples randomly chosen weights.

    Entries where both gradients are below 1e-7 are compared absolutely (the
    finite difference itself is noise at that scale).
    """
    if len(np.atleast_2d(features)) == 0:
        raise ValueError("gradient check needs a nonempty batch")
    rng = np.random.default_rng(seed)
    _, analytic = loss_and_grads(head, features, labels)
    sites = [(k, i) for k, p in head.weights.items() for i in range(p.size)]
    if len(sites) > n_samples:
        chosen = rng.choice(len(sites), size=n_samples, replace=False)
        sites = [sites[i] for i in chosen]
    max_rel = 0.0
    for key, flat_idx in sites:
        w = {k: p.copy() for k, p in head.weights.items()}
        w[key].ravel()[flat_idx] += step
        loss_hi = cross_entropy_loss(head.with_weights(w), features, labels)
        w[key].ravel()[flat_idx] -= 2.0 * step
        loss_lo = cross_entropy_loss(head.with_weights(w), features, labels)
        numeric = (loss_hi - loss_lo) / (2.0 * step)
        a = analytic[key].ravel()[flat_idx]
        scale = max(abs(a), abs(numeric))
        if scale < 1e-7:
            rel = abs(a - numeric)  # both effectively zero
        else:
            rel = abs(a - numeric) / scale
        max_rel = max(max_rel, rel)
    return max_rel
