"""Two-layer patch network with analytic gradients.

Inputs are P patches of dimension d.  The hidden layer applies m shared
filters with ReLU and averages activations over patches; a linear read-out
produces one logit per class.  The same architecture serves both as the
K+1 distinguisher and the K-way target model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import softmax


@dataclass
class ModelParams:
    """first_layer: (m, d) filters; second_layer: (C, m) class read-out."""

    first_layer: np.ndarray
    second_layer: np.ndarray

    def __post_init__(self):
        self.first_layer = np.asarray(self.first_layer, dtype=np.float64)
        self.second_layer = np.asarray(self.second_layer, dtype=np.float64)
        if self.first_layer.ndim != 2 or self.second_layer.ndim != 2:
            raise ValueError("layer weights must be 2-D matrices")
        if self.second_layer.shape[1] != self.first_layer.shape[0]:
            raise ValueError(
                "second_layer columns must match first_layer rows "
                f"({self.second_layer.shape} vs {self.first_layer.shape})"
            )
        if not (
            np.all(np.isfinite(self.first_layer))
            and np.all(np.isfinite(self.second_layer))
        ):
            raise ValueError("model weights must be finite")

    @property
    def width(self) -> int:
        return self.first_layer.shape[0]

    @property
    def dim(self) -> int:
        return self.first_layer.shape[1]

    @property
    def num_classes(self) -> int:
        return self.second_layer.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.first_layer.copy(), self.second_layer.copy())


def init_params(
    num_classes: int,
    width: int,
    dim: int,
    rng: np.random.Generator,
    sigma0: float = 0.05,
) -> ModelParams:
    """Gaussian init: filters ~ N(0, sigma0^2), read-out ~ N(0, 1/m)."""
    w = rng.normal(0.0, sigma0, size=(width, dim))
    a = rng.normal(0.0, 1.0 / np.sqrt(width), size=(num_classes, width))
    return ModelParams(w, a)


def _check_input(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ValueError(
            f"input must have shape (P, {params.dim}), got {x.shape}"
        )
    return x


def embed(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Hidden representation: patch-mean of ReLU filter responses, length m."""
    x = _check_input(params, x)
    return np.maximum(x @ params.first_layer.T, 0.0).mean(axis=0)


def embed_batch(params: ModelParams, xs: np.ndarray) -> np.ndarray:
    """Hidden representations for a (B, P, d) batch, shape (B, m)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[2] != params.dim:
        raise ValueError(f"batch must have shape (B, P, {params.dim})")
    return np.maximum(xs @ params.first_layer.T, 0.0).mean(axis=1)


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Logits for one input, length C."""
    return embed(params, x) @ params.second_layer.T


def forward_batch(params: ModelParams, xs: np.ndarray) -> np.ndarray:
    """Logits for a (B, P, d) batch, shape (B, C)."""
    return embed_batch(params, xs) @ params.second_layer.T


def predict_proba(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return softmax(forward(params, x))


def predict_proba_batch(params: ModelParams, xs: np.ndarray) -> np.ndarray:
    return softmax(forward_batch(params, xs))


def predicted_class(params: ModelParams, x: np.ndarray) -> int:
    # np.argmax breaks exact ties toward the lowest index.
    return int(np.argmax(forward(params, x)))


def loss_and_grad(
    params: ModelParams, xs: np.ndarray, ys: np.ndarray
) -> tuple[float, ModelParams]:
    """Mean cross-entropy over the batch and its exact gradients.

    xs: (B, P, d) inputs; ys: (B,) integer labels in [0, C).
    Returns (loss, grads) with grads shaped like the parameters.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    if xs.ndim != 3 or xs.shape[0] == 0:
        raise ValueError("batch must be non-empty with shape (B, P, d)")
    if ys.shape != (xs.shape[0],):
        raise ValueError("labels must be a vector matching the batch size")
    if np.any(ys < 0) or np.any(ys >= params.num_classes):
        raise ValueError("label out of range")

    batch = xs.shape[0]
    num_patches = xs.shape[1]
    pre = xs @ params.first_layer.T            # (B, P, m)
    hidden = np.maximum(pre, 0.0).mean(axis=1)  # (B, m)
    logits = hidden @ params.second_layer.T     # (B, C)
    probs = softmax(logits)
    loss = float(-np.mean(np.log(probs[np.arange(batch), ys])))

    dlogits = probs.copy()
    dlogits[np.arange(batch), ys] -= 1.0
    dlogits /= batch
    d_second = dlogits.T @ hidden               # (C, m)
    dhidden = dlogits @ params.second_layer     # (B, m)
    dpre = (dhidden[:, None, :] / num_patches) * (pre > 0)  # (B, P, m)
    d_first = np.einsum("bpm,bpd->md", dpre, xs)
    return loss, ModelParams(d_first, d_second)
