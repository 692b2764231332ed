"""SGD with momentum and weight decay, the two-step sharpness-aware
variant, and a step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import ModelParams, loss_and_grad

GRAD_NORM_FLOOR = 1e-12


@dataclass
class SgdHyper:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class SamHyper:
    rho: float = 0.05

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be non-negative")


@dataclass
class LrSchedule:
    initial_lr: float = 0.01
    step_size: int = 60
    gamma: float = 0.5

    def __post_init__(self):
        if self.step_size < 1:
            raise ValueError("step_size must be at least 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")


@dataclass
class OptState:
    """Momentum buffer, shaped like the parameters being optimized."""

    velocity: ModelParams

    @staticmethod
    def zeros_like(params: ModelParams) -> "OptState":
        return OptState(
            ModelParams(
                np.zeros_like(params.first_layer),
                np.zeros_like(params.second_layer),
            )
        )


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """initial_lr decayed by gamma every step_size epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return schedule.initial_lr * schedule.gamma ** (epoch // schedule.step_size)


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    state: OptState,
    hyper: SgdHyper,
) -> tuple[ModelParams, OptState]:
    """One momentum step: v' = mu*v + (g + wd*w); w' = w - lr*v'."""
    if (
        grads.first_layer.shape != params.first_layer.shape
        or grads.second_layer.shape != params.second_layer.shape
    ):
        raise ValueError("gradient shape does not match parameters")
    new_first_v = (
        hyper.momentum * state.velocity.first_layer
        + grads.first_layer
        + hyper.weight_decay * params.first_layer
    )
    new_second_v = (
        hyper.momentum * state.velocity.second_layer
        + grads.second_layer
        + hyper.weight_decay * params.second_layer
    )
    new_params = ModelParams(
        params.first_layer - hyper.lr * new_first_v,
        params.second_layer - hyper.lr * new_second_v,
    )
    return new_params, OptState(ModelParams(new_first_v, new_second_v))


def _grad_norm(grads: ModelParams) -> float:
    return float(
        np.sqrt(
            np.sum(grads.first_layer**2) + np.sum(grads.second_layer**2)
        )
    )


def sam_step(
    params: ModelParams,
    xs: np.ndarray,
    ys: np.ndarray,
    state: OptState,
    sgd_hyper: SgdHyper,
    sam_hyper: SamHyper,
    loss_fn: Callable[..., tuple[float, ModelParams]] = loss_and_grad,
) -> tuple[ModelParams, OptState, float]:
    """Ascend along the normalized gradient, re-evaluate the gradient at
    the perturbed point, then descend at the original parameters.

    Returns the loss at the perturbed point.  When rho is zero or the
    gradient is (numerically) zero the step degenerates to plain SGD.
    """
    loss0, g1 = loss_fn(params, xs, ys)
    norm = _grad_norm(g1)
    if sam_hyper.rho == 0.0 or norm < GRAD_NORM_FLOOR:
        new_params, new_state = sgd_step(params, g1, state, sgd_hyper)
        return new_params, new_state, loss0
    scale = sam_hyper.rho / norm
    perturbed = ModelParams(
        params.first_layer + scale * g1.first_layer,
        params.second_layer + scale * g1.second_layer,
    )
    loss_adv, g2 = loss_fn(perturbed, xs, ys)
    new_params, new_state = sgd_step(params, g2, state, sgd_hyper)
    return new_params, new_state, loss_adv


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    optimizer: str = "sgd"  # "sgd" or "sam"
    sgd: SgdHyper = field(default_factory=SgdHyper)
    sam: SamHyper = field(default_factory=SamHyper)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    loss_tol: float | None = None  # stop early once full-data loss drops below


def train(
    params: ModelParams,
    xs: np.ndarray,
    ys: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[ModelParams, float]:
    """Shuffled mini-batch training; deterministic for a given rng seed.

    Returns the final parameters and the final full-data training loss.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    if xs.shape[0] == 0:
        raise ValueError("dataset must be non-empty")
    if cfg.optimizer not in ("sgd", "sam"):
        raise ValueError(f"unknown optimizer: {cfg.optimizer!r}")

    n = xs.shape[0]
    params = params.copy()
    state = OptState.zeros_like(params)
    loss, _ = loss_and_grad(params, xs, ys)
    for epoch in range(cfg.epochs):
        lr = lr_at(cfg.schedule, epoch)
        hyper = SgdHyper(lr, cfg.sgd.momentum, cfg.sgd.weight_decay)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cfg.optimizer == "sam":
                params, state, _ = sam_step(
                    params, xs[idx], ys[idx], state, hyper, cfg.sam
                )
            else:
                _, grads = loss_and_grad(params, xs[idx], ys[idx])
                params, state = sgd_step(params, grads, state, hyper)
        loss, _ = loss_and_grad(params, xs, ys)
        if cfg.loss_tol is not None and loss <= cfg.loss_tol:
            break
    return params, loss
