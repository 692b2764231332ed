"""Synthetic patch data: one signal patch per example, Gaussian noise in
the rest.  Classes carry orthogonal signal directions; each class splits
into a frequent high-signal (typical) and a rare low-signal (atypical)
subclass.  Also simulates the annotation oracle, including label flips."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TYPICAL = "typical"
ATYPICAL = "atypical"


@dataclass
class GenConfig:
    num_known: int = 4
    num_unknown: int = 6
    n_per_class: int = 200
    atypical_frac: float = 0.1
    patches: int = 4
    dim: int = 500
    sigma_p: float = 2.0
    alpha: float = 1.0
    beta: float = 0.22
    mu_norm: float = 32.0

    def __post_init__(self):
        if self.num_known < 2:
            raise ValueError("num_known must be at least 2")
        if self.num_unknown < 0:
            raise ValueError("num_unknown must be non-negative")
        if not 0 < self.atypical_frac < 1:
            raise ValueError("atypical_frac must be in (0, 1)")
        if not self.alpha > self.beta > 0:
            raise ValueError("alpha must exceed beta and both must be positive")
        if self.patches < 1 or self.dim < 1 or self.n_per_class < 1:
            raise ValueError("patches, dim and n_per_class must be positive")
        if self.num_classes > self.dim:
            raise ValueError("dim too small for orthogonal class signals")
        if self.sigma_p < 0 or self.mu_norm <= 0:
            raise ValueError("sigma_p must be >= 0 and mu_norm > 0")

    @property
    def num_classes(self) -> int:
        return self.num_known + self.num_unknown


@dataclass
class OracleConfig:
    flip_prob: float = 0.0

    def __post_init__(self):
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be in [0, 1]")


@dataclass
class Example:
    x: np.ndarray          # (P, d)
    true_class: int
    subclass: str          # TYPICAL or ATYPICAL
    is_known: bool
    id: int


@dataclass
class PatchDataset:
    """Immutable pool of generated examples, indexed by stable id 0..N-1."""

    x: np.ndarray          # (N, P, d)
    true_class: np.ndarray  # (N,) int
    atypical: np.ndarray   # (N,) bool
    is_known: np.ndarray   # (N,) bool
    signals: np.ndarray    # (num_classes, d) scaled class directions

    def __len__(self) -> int:
        return self.x.shape[0]

    def subclass_name(self, i: int) -> str:
        return ATYPICAL if self.atypical[i] else TYPICAL


def make_signal_vectors(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """Mutually orthogonal class directions, each scaled to mu_norm."""
    gauss = rng.normal(size=(cfg.dim, cfg.num_classes))
    q, _ = np.linalg.qr(gauss)
    return q.T * cfg.mu_norm


def gen_example(
    cfg: GenConfig,
    c: int,
    subclass: str,
    rng: np.random.Generator,
    signals: np.ndarray | None = None,
    example_id: int = 0,
) -> Example:
    """One example: a random patch carries the (scaled) class signal, all
    other patches are independent N(0, sigma_p^2 I) draws."""
    if not 0 <= c < cfg.num_classes:
        raise ValueError(f"invalid class {c}")
    if subclass not in (TYPICAL, ATYPICAL):
        raise ValueError(f"invalid subclass {subclass!r}")
    if signals is None:
        signals = make_signal_vectors(cfg, rng)
    scale = cfg.alpha if subclass == TYPICAL else cfg.beta
    x = rng.normal(0.0, cfg.sigma_p, size=(cfg.patches, cfg.dim))
    slot = rng.integers(cfg.patches)
    x[slot] = scale * signals[c]
    return Example(
        x=x,
        true_class=c,
        subclass=subclass,
        is_known=c < cfg.num_known,
        id=example_id,
    )


def generate_pool(cfg: GenConfig, rng: np.random.Generator) -> PatchDataset:
    """Full pool: n_per_class examples per class, the first
    round(atypical_frac * n) of each class drawn atypical."""
    signals = make_signal_vectors(cfg, rng)
    n_aty = round(cfg.atypical_frac * cfg.n_per_class)
    xs, classes, atypical = [], [], []
    next_id = 0
    for c in range(cfg.num_classes):
        for i in range(cfg.n_per_class):
            sub = ATYPICAL if i < n_aty else TYPICAL
            ex = gen_example(cfg, c, sub, rng, signals, next_id)
            xs.append(ex.x)
            classes.append(c)
            atypical.append(sub == ATYPICAL)
            next_id += 1
    classes_arr = np.array(classes, dtype=np.int64)
    return PatchDataset(
        x=np.stack(xs),
        true_class=classes_arr,
        atypical=np.array(atypical, dtype=bool),
        is_known=classes_arr < cfg.num_known,
        signals=signals,
    )


def build_openset_pool(
    cfg: GenConfig,
    mismatch_ratio: float,
    init_labeled_frac: float,
    test_frac: float,
    rng: np.random.Generator,
):
    """Generate a pool and split it into the four disjoint working sets.

    The first ceil(mismatch_ratio * num_classes) classes are known; the
    initial labeled set and the test set are drawn from known classes
    only, everything else (known remainder plus all unknown) starts
    unlabeled.  Returns (dataset, PoolState).
    """
    from .alcore import PoolState

    if not 0 < mismatch_ratio <= 1:
        raise ValueError("mismatch_ratio must be in (0, 1]")
    if not 0 < init_labeled_frac < 1:
        raise ValueError("init_labeled_frac must be in (0, 1)")
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must be in (0, 1)")

    total = cfg.num_classes
    num_known = math.ceil(mismatch_ratio * total)
    if num_known < 2:
        raise ValueError("mismatch_ratio leaves fewer than 2 known classes")
    gen_cfg = GenConfig(
        num_known=num_known,
        num_unknown=total - num_known,
        n_per_class=cfg.n_per_class,
        atypical_frac=cfg.atypical_frac,
        patches=cfg.patches,
        dim=cfg.dim,
        sigma_p=cfg.sigma_p,
        alpha=cfg.alpha,
        beta=cfg.beta,
        mu_norm=cfg.mu_norm,
    )
    dataset = generate_pool(gen_cfg, rng)

    known_ids = np.flatnonzero(dataset.is_known)
    n_test = round(test_frac * known_ids.size)
    n_init = round(init_labeled_frac * (known_ids.size - n_test))
    if n_test < 1 or n_init < 1:
        raise ValueError("per-class counts too small for requested fractions")
    perm = rng.permutation(known_ids)
    test_ids = np.sort(perm[:n_test])
    init_ids = np.sort(perm[n_test : n_test + n_init])
    in_test = np.zeros(len(dataset), dtype=bool)
    in_test[test_ids] = True
    in_labeled = np.zeros(len(dataset), dtype=bool)
    in_labeled[init_ids] = True
    unlabeled_ids = np.flatnonzero(~in_test & ~in_labeled)

    # Seed labels are clean; annotation noise applies to queried samples.
    observed = {int(i): int(dataset.true_class[i]) for i in init_ids}
    state = PoolState(
        labeled_ids=[int(i) for i in init_ids],
        observed_labels=observed,
        unlabeled_ids=[int(i) for i in unlabeled_ids],
        invalid_ids=[],
        test_ids=[int(i) for i in test_ids],
        n_known=int(known_ids.size - n_test),
        num_known_classes=num_known,
    )
    return dataset, state


def oracle_label(
    example_true_class: int,
    oc: OracleConfig,
    num_known: int,
    rng: np.random.Generator,
) -> int:
    """Annotator response for a known-class query: the true label, or with
    probability flip_prob a uniformly random different known class."""
    if not 0 <= example_true_class < num_known:
        raise ValueError("oracle_label expects a known-class example")
    if oc.flip_prob > 0 and rng.random() < oc.flip_prob:
        offset = int(rng.integers(1, num_known))
        return (example_true_class + offset) % num_known
    return example_true_class
