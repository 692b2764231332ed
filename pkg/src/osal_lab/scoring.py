"""Per-sample query scores: the SAM-vs-SGD probability gap, plus the
entropy / confidence / margin uncertainty baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, predict_proba_batch
from .numerics import l1_dist
from .synthdata import PatchDataset

UNCERTAINTY_KINDS = ("entropy", "confidence", "margin")


@dataclass
class SampleScore:
    sample_id: int
    score: float
    accepted: bool   # both distinguishers predict a known class
    sgd_pred: int
    sam_pred: int


def samis_p(p_sam: np.ndarray, p_sgd: np.ndarray) -> float:
    """L1 distance between the two models' probability vectors, in [0, 2]."""
    return l1_dist(p_sam, p_sgd)


def score_pool(
    dataset: PatchDataset,
    unlabeled_ids: list[int],
    f_sgd: ModelParams,
    f_sam: ModelParams,
    num_known: int,
) -> list[SampleScore]:
    """Score every unlabeled sample and flag K+1 rejection.

    A sample is accepted only if BOTH models' argmax lands on a known
    class; a single unknown-class prediction rejects it.
    """
    for name, params in (("f_sgd", f_sgd), ("f_sam", f_sam)):
        if params.num_classes != num_known + 1:
            raise ValueError(
                f"{name} must have {num_known + 1} outputs, "
                f"got {params.num_classes}"
            )
    ids = np.asarray(unlabeled_ids, dtype=np.int64)
    p_sgd = predict_proba_batch(f_sgd, dataset.x[ids])
    p_sam = predict_proba_batch(f_sam, dataset.x[ids])
    sgd_pred = np.argmax(p_sgd, axis=1)
    sam_pred = np.argmax(p_sam, axis=1)
    scores = np.sum(np.abs(p_sam - p_sgd), axis=1)
    accepted = (sgd_pred < num_known) & (sam_pred < num_known)
    return [
        SampleScore(
            sample_id=int(ids[i]),
            score=float(scores[i]),
            accepted=bool(accepted[i]),
            sgd_pred=int(sgd_pred[i]),
            sam_pred=int(sam_pred[i]),
        )
        for i in range(ids.size)
    ]


def uncertainty_scores(
    dataset: PatchDataset,
    ids: list[int],
    f: ModelParams,
    kind: str,
) -> list[tuple[int, float]]:
    """Uncertainty per sample, oriented so that HIGHER means more uncertain.

    entropy: H(p); confidence: 1 - max(p); margin: negated top-two gap.
    """
    if kind not in UNCERTAINTY_KINDS:
        raise ValueError(f"unknown uncertainty kind: {kind!r}")
    if kind == "margin" and f.num_classes < 2:
        raise ValueError("margin requires at least 2 classes")
    idx = np.asarray(ids, dtype=np.int64)
    probs = predict_proba_batch(f, dataset.x[idx])
    if kind == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(probs > 0, probs * np.log(probs), 0.0)
        vals = -terms.sum(axis=1)
    elif kind == "confidence":
        vals = 1.0 - probs.max(axis=1)
    else:
        top2 = np.sort(probs, axis=1)[:, -2:]
        vals = -(top2[:, 1] - top2[:, 0])
    return [(int(idx[i]), float(vals[i])) for i in range(idx.size)]
