"""Dense numeric primitives: softmax, entropy, L1 distance, and a
central-difference gradient oracle used to validate analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

PROB_SUM_TOL = 1e-6


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis.

    Subtracts the running maximum so large logits never overflow.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax requires a non-empty input")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax requires finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with the convention 0*ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("entropy expects a non-empty 1-D probability vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise ValueError("entropy expects a normalized probability vector")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def l1_dist(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of elementwise absolute differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b)))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], w: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function at w.

    Second-order accurate: (f(w + h e_i) - f(w - h e_i)) / 2h per coordinate.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    w = np.asarray(w, dtype=np.float64)
    grad = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e.flat[i] = h
        fp = f(w + e)
        fm = f(w - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("function returned a non-finite value")
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad
