"""Query selection policies.

All selectors return exactly min(q, pool size) distinct sample ids.
Ties anywhere are broken by ascending sample id for determinism.
Strategy name strings (used by the CLI and in output files):
`samosa`, `samosa-l`, `samosa-b<k>`, `samosa-r`, `disagree3`,
`entropy`, `confidence`, `margin`, `random`.
"""

from __future__ import annotations

import re

import numpy as np

from .model import ModelParams, predict_proba_batch
from .scoring import SampleScore, uncertainty_scores
from .synthdata import PatchDataset

STRATEGY_NAMES = (
    "samosa",
    "samosa-l",
    "samosa-r",
    "disagree3",
    "entropy",
    "confidence",
    "margin",
    "random",
) + tuple(f"samosa-b{k}" for k in range(1, 11))

_BUCKET_RE = re.compile(r"^samosa-b(\d+)$")
NUM_BUCKETS = 10


def parse_strategy(name: str) -> tuple[str, int | None]:
    """Split a strategy string into (kind, bucket index or None)."""
    m = _BUCKET_RE.match(name)
    if m:
        bucket = int(m.group(1))
        if not 1 <= bucket <= NUM_BUCKETS:
            raise ValueError(f"bucket index must be 1..{NUM_BUCKETS}: {name}")
        return "samosa-b", bucket
    if name not in STRATEGY_NAMES:
        raise ValueError(f"unknown strategy: {name!r}")
    return name, None


def _check_budget(q: int) -> None:
    if q < 1:
        raise ValueError("query budget q must be at least 1")


def _split(scores: list[SampleScore]) -> tuple[list[SampleScore], list[SampleScore]]:
    accepted = [s for s in scores if s.accepted]
    rejected = [s for s in scores if not s.accepted]
    return accepted, rejected


def _by_score(samples: list[SampleScore], descending: bool) -> list[SampleScore]:
    sign = -1.0 if descending else 1.0
    return sorted(samples, key=lambda s: (sign * s.score, s.sample_id))


def select_samosa(scores: list[SampleScore], q: int) -> list[int]:
    """Accepted samples by descending score; shortfall filled from the
    rejected samples, also by descending score."""
    _check_budget(q)
    accepted, rejected = _split(scores)
    ranked = _by_score(accepted, descending=True) + _by_score(
        rejected, descending=True
    )
    return [s.sample_id for s in ranked[:q]]


def select_samosa_l(scores: list[SampleScore], q: int) -> list[int]:
    """Mirror of select_samosa with ASCENDING score order throughout."""
    _check_budget(q)
    accepted, rejected = _split(scores)
    ranked = _by_score(accepted, descending=False) + _by_score(
        rejected, descending=False
    )
    return [s.sample_id for s in ranked[:q]]


def select_bucketed(scores: list[SampleScore], q: int, bucket: int) -> list[int]:
    """Select from one rank-decile of the accepted scores.

    Accepted samples are ranked by score and cut into 10 contiguous
    deciles; bucket 1 holds the lowest scores, bucket 10 the highest.
    Within the requested decile selection is by descending score; a
    shortfall spills to the nearest neighboring deciles (preferring the
    higher-index side), then to rejected samples by descending score.
    """
    _check_budget(q)
    if not 1 <= bucket <= NUM_BUCKETS:
        raise ValueError(f"bucket must be in 1..{NUM_BUCKETS}")
    accepted, rejected = _split(scores)
    ascending = _by_score(accepted, descending=False)
    deciles = [list(part) for part in np.array_split(np.arange(len(ascending)), NUM_BUCKETS)]

    # Visit deciles in order of distance from the requested one, ties to
    # the higher index; within each decile take descending score.
    order = sorted(
        range(1, NUM_BUCKETS + 1), key=lambda b: (abs(b - bucket), -b)
    )
    ranked: list[SampleScore] = []
    for b in order:
        members = [ascending[i] for i in deciles[b - 1]]
        ranked.extend(_by_score(members, descending=True))
    ranked.extend(_by_score(rejected, descending=True))
    return [s.sample_id for s in ranked[:q]]


def select_samosa_r(
    scores: list[SampleScore], q: int, rng: np.random.Generator
) -> list[int]:
    """select_samosa, but shortfall picks drawn uniformly from the
    rejected samples instead of by score.  Accepted picks are unchanged."""
    _check_budget(q)
    base = select_samosa(scores, q)
    accepted_ids = {s.sample_id for s in scores if s.accepted}
    kept = [i for i in base if i in accepted_ids]
    shortfall = len(base) - len(kept)
    if shortfall == 0:
        return base
    rejected_ids = sorted(s.sample_id for s in scores if not s.accepted)
    picks = rng.choice(len(rejected_ids), size=shortfall, replace=False)
    return kept + [rejected_ids[i] for i in sorted(picks)]


def select_disagreement(
    dataset: PatchDataset,
    unlabeled_ids: list[int],
    models: list[ModelParams],
    q: int,
    num_known: int,
) -> list[int]:
    """Ensemble-of-3 disagreement with K+1 filtration.

    Samples any model predicts as unknown are rejected.  The rest are
    ranked by (number of distinct argmax predictions, mean pairwise L1
    of the probability vectors) descending; shortfall spills to the
    rejected samples under the same key.
    """
    _check_budget(q)
    if len(models) != 3:
        raise ValueError("disagreement ensemble requires exactly 3 models")
    for m in models:
        if m.num_classes != num_known + 1:
            raise ValueError(f"models must have {num_known + 1} outputs")
    ids = np.asarray(unlabeled_ids, dtype=np.int64)
    probs = [predict_proba_batch(m, dataset.x[ids]) for m in models]
    preds = np.stack([np.argmax(p, axis=1) for p in probs])  # (3, N)
    distinct = np.array(
        [len(set(preds[:, i])) for i in range(ids.size)], dtype=np.float64
    )
    pair_l1 = (
        np.sum(np.abs(probs[0] - probs[1]), axis=1)
        + np.sum(np.abs(probs[0] - probs[2]), axis=1)
        + np.sum(np.abs(probs[1] - probs[2]), axis=1)
    ) / 3.0
    rejected_mask = np.any(preds >= num_known, axis=0)

    def key(i: int):
        return (-distinct[i], -pair_l1[i], int(ids[i]))

    kept = sorted((i for i in range(ids.size) if not rejected_mask[i]), key=key)
    spilled = sorted((i for i in range(ids.size) if rejected_mask[i]), key=key)
    ranked = kept + spilled
    return [int(ids[i]) for i in ranked[:q]]


def select_uncertainty(
    dataset: PatchDataset,
    unlabeled_ids: list[int],
    f_target: ModelParams,
    kind: str,
    q: int,
) -> list[int]:
    """Top-q by uncertainty (ties by ascending id)."""
    _check_budget(q)
    pairs = uncertainty_scores(dataset, unlabeled_ids, f_target, kind)
    ranked = sorted(pairs, key=lambda p: (-p[1], p[0]))
    return [i for i, _ in ranked[:q]]


def select_random(
    unlabeled_ids: list[int], q: int, rng: np.random.Generator
) -> list[int]:
    """Uniform sample without replacement."""
    _check_budget(q)
    ids = sorted(unlabeled_ids)
    take = min(q, len(ids))
    picks = rng.choice(len(ids), size=take, replace=False)
    return [ids[i] for i in sorted(picks)]
