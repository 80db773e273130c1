"""Exact (O(N^2)) t-SNE for latent-space visualization.

Per-row Gaussian bandwidths are found by bisection so each conditional
distribution's entropy matches log2(perplexity) in bits; the low-dimensional
kernel is Student-t with one degree of freedom. Optimization is plain
gradient descent with momentum 0.5 (0.8 after iteration 250), learning rate
200, and 12x early exaggeration for the first 250 iterations. The embedding
is re-centered every iteration, so results are deterministic for a fixed
seed up to the recorded KL trace.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_SWITCH = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
LEARNING_RATE = 200.0


@dataclass(frozen=True)
class TsneResult:
    coords: np.ndarray          # (N, 2)
    entropies_bits: np.ndarray  # achieved conditional entropy per row
    kl_trace: np.ndarray        # KL(P || Q) against the un-exaggerated P


def _squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _row_affinities(d2_row: np.ndarray, beta: float) -> np.ndarray:
    p = np.exp(-d2_row * beta)
    s = p.sum()
    if s <= 0.0:
        out = np.full_like(p, 1.0 / len(p))
        return out
    return p / s


def _entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def conditional_affinities(features: np.ndarray, perplexity: float,
                           tol_bits: float = 1e-6, max_iter: int = 200):
    """Per-row bisection for the bandwidth beta = 1/(2 sigma^2) matching
    H(P_i) = log2(perplexity). Returns (P_conditional, achieved entropies)."""
    n = len(features)
    d2 = _squared_distances(features)
    target = np.log2(perplexity)
    p_cond = np.zeros((n, n))
    entropies = np.zeros(n)
    for i in range(n):
        row = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        p = _row_affinities(row, beta)
        h = _entropy_bits(p)
        for _ in range(max_iter):
            if abs(h - target) <= tol_bits:
                break
            if h > target:      # too spread out: sharpen
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
            p = _row_affinities(row, beta)
            h = _entropy_bits(p)
        p_cond[i, np.arange(n) != i] = p
        entropies[i] = h
    return p_cond, entropies


def _q_matrix(y: np.ndarray):
    num = 1.0 / (1.0 + _squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, 1e-12), num


def tsne_embed(features: np.ndarray, perplexity: float = 30.0,
               iterations: int = 1000, seed: int = 0) -> TsneResult:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("need an (N, d) feature matrix with N >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    n = len(x)
    if perplexity >= n:
        raise ValueError(f"perplexity {perplexity} must be below N={n}")
    if perplexity < 1.0:
        raise ValueError("perplexity must be >= 1")

    p_cond, entropies = conditional_affinities(x, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)

    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, (n, 2))
    update = np.zeros_like(y)
    kl_trace = np.empty(iterations)
    for it in range(1, iterations + 1):
        p_eff = p * EXAGGERATION if it <= EXAGGERATION_ITERS else p
        q, num = _q_matrix(y)
        w = (p_eff - q) * num
        grad = 4.0 * ((np.diag(w.sum(axis=1)) - w) @ y)
        momentum = MOMENTUM_EARLY if it <= MOMENTUM_SWITCH else MOMENTUM_LATE
        update = momentum * update - LEARNING_RATE * grad
        y = y + update
        y = y - y.mean(axis=0)
        kl_trace[it - 1] = float(np.sum(p * (np.log(p) - np.log(q))))
    return TsneResult(coords=y, entropies_bits=entropies, kl_trace=kl_trace)
