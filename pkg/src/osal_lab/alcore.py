"""The open-set active learning driver.

Each round trains the two K+1 distinguishers (SGD and SAM, shared init)
and the K-way target model from scratch, scores the unlabeled pool,
applies the configured query strategy, labels the queried samples via the
oracle, and updates the four disjoint working sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model, optim, scoring, strategies, synthdata
from .model import ModelParams
from .optim import LrSchedule, SamHyper, SgdHyper, TrainConfig
from .synthdata import GenConfig, OracleConfig, PatchDataset

# Stream ids for per-round RNG derivation; each stream is seeded by
# (seed, round, stream) so results depend only on the data sets, not on
# the order in which earlier rounds inserted samples.
_STREAM_GEN = 0
_STREAM_INIT = 1
_STREAM_TRAIN_DIST = 2
_STREAM_TRAIN_TEST = 3
_STREAM_STRATEGY = 4
_STREAM_ORACLE = 5


@dataclass
class PoolState:
    """The four disjoint index sets plus observed labels."""

    labeled_ids: list[int]
    observed_labels: dict[int, int]
    unlabeled_ids: list[int]
    invalid_ids: list[int]
    test_ids: list[int]
    n_known: int            # known-class samples in the initial working pool
    num_known_classes: int

    def check_disjoint(self) -> None:
        sets = [
            set(self.labeled_ids),
            set(self.unlabeled_ids),
            set(self.invalid_ids),
            set(self.test_ids),
        ]
        total = sum(len(s) for s in sets)
        if len(set().union(*sets)) != total:
            raise ValueError("pool sets must be pairwise disjoint")


@dataclass
class QueryRecord:
    sample_id: int
    observed_label: int | None   # None for invalid (unknown-class) queries
    is_valid: bool
    samis: float
    entropy_sgd: float
    test_pred: int
    test_correct: bool


@dataclass
class RoundMetrics:
    round: int
    accuracy: float
    precision: float
    recall: float
    n_valid_queries: int
    n_invalid_queries: int
    n_labeled: int
    n_invalid_total: int
    loss_sgd: float
    loss_sam: float
    loss_test: float
    queries: list[QueryRecord] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    rounds: int = 8
    budget: int = 40
    strategy: str = "samosa"
    seed: int = 0
    gen: GenConfig = field(default_factory=GenConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    mismatch_ratio: float = 0.4
    init_labeled_frac: float = 0.05
    test_frac: float = 0.25
    width: int = 32
    sigma0: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    sgd: SgdHyper = field(default_factory=SgdHyper)
    sam: SamHyper = field(default_factory=SamHyper)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    loss_tol: float | None = 0.01

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")


@dataclass
class RoundArtifacts:
    """Per-round dumps kept for export: scores and target-model embeddings."""

    scores: list[scoring.SampleScore]
    embeddings: np.ndarray   # (N, m) embeddings of every sample under f_test
    split: list[str]         # per-sample split at training time


@dataclass
class RunResult:
    metrics: list[RoundMetrics]
    artifacts: list[RoundArtifacts]
    f_sgd: ModelParams
    f_sam: ModelParams
    f_test: ModelParams


def _rng(cfg: ExperimentConfig, round_idx: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, round_idx, stream])


def precision_recall(
    x_k_count: int, q: int, labeled_known_total: int, n_known: int
) -> tuple[float, float]:
    """Sampling precision (valid queries over budget) and cumulative
    recall (labeled samples over all known-class samples)."""
    if q < 1 or n_known < 1:
        raise ValueError("q and n_known must be at least 1")
    if x_k_count > q:
        raise ValueError("valid query count cannot exceed the budget")
    if labeled_known_total > n_known:
        raise ValueError("labeled count cannot exceed the known-class total")
    return x_k_count / q, labeled_known_total / n_known


def _train_config(cfg: ExperimentConfig, optimizer: str) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        optimizer=optimizer,
        sgd=cfg.sgd,
        sam=cfg.sam,
        schedule=cfg.schedule,
        loss_tol=cfg.loss_tol,
    )


def _train_models(
    dataset: PatchDataset, state: PoolState, cfg: ExperimentConfig, t: int
) -> tuple[ModelParams, ModelParams, ModelParams, float, float, float]:
    k = state.num_known_classes
    labeled = sorted(state.labeled_ids)
    invalid = sorted(state.invalid_ids)

    # Distinguishers: labeled samples with observed labels, invalid
    # queries collapsed onto the extra K+1 output.
    dist_ids = labeled + invalid
    dist_x = dataset.x[np.asarray(dist_ids, dtype=np.int64)]
    dist_y = np.array(
        [state.observed_labels[i] for i in labeled] + [k] * len(invalid),
        dtype=np.int64,
    )
    init_rng = _rng(cfg, t, _STREAM_INIT)
    shared_init = model.init_params(
        k + 1, cfg.width, cfg.gen.dim, init_rng, cfg.sigma0
    )
    f_sgd, loss_sgd = optim.train(
        shared_init,
        dist_x,
        dist_y,
        _train_config(cfg, "sgd"),
        _rng(cfg, t, _STREAM_TRAIN_DIST),
    )
    f_sam, loss_sam = optim.train(
        shared_init,
        dist_x,
        dist_y,
        _train_config(cfg, "sam"),
        _rng(cfg, t, _STREAM_TRAIN_DIST),
    )

    # Target model: labeled known-class samples only, K outputs.
    test_x = dataset.x[np.asarray(labeled, dtype=np.int64)]
    test_y = np.array([state.observed_labels[i] for i in labeled], dtype=np.int64)
    f_test, loss_test = optim.train(
        model.init_params(k, cfg.width, cfg.gen.dim, init_rng, cfg.sigma0),
        test_x,
        test_y,
        _train_config(cfg, "sgd"),
        _rng(cfg, t, _STREAM_TRAIN_TEST),
    )
    return f_sgd, f_sam, f_test, loss_sgd, loss_sam, loss_test


def _select(
    dataset: PatchDataset,
    state: PoolState,
    cfg: ExperimentConfig,
    t: int,
    scores: list[scoring.SampleScore],
    f_sgd: ModelParams,
    f_sam: ModelParams,
    f_test: ModelParams,
) -> list[int]:
    kind, bucket = strategies.parse_strategy(cfg.strategy)
    pool_ids = sorted(state.unlabeled_ids)
    q = min(cfg.budget, len(pool_ids))
    rng = _rng(cfg, t, _STREAM_STRATEGY)
    if kind == "samosa":
        return strategies.select_samosa(scores, q)
    if kind == "samosa-l":
        return strategies.select_samosa_l(scores, q)
    if kind == "samosa-b":
        return strategies.select_bucketed(scores, q, bucket)
    if kind == "samosa-r":
        return strategies.select_samosa_r(scores, q, rng)
    if kind == "disagree3":
        k = state.num_known_classes
        models = []
        for j in range(3):
            member_rng = np.random.default_rng([cfg.seed, t, _STREAM_INIT, 10 + j])
            init = model.init_params(
                k + 1, cfg.width, cfg.gen.dim, member_rng, cfg.sigma0
            )
            labeled = sorted(state.labeled_ids)
            invalid = sorted(state.invalid_ids)
            ids = labeled + invalid
            ys = np.array(
                [state.observed_labels[i] for i in labeled] + [k] * len(invalid),
                dtype=np.int64,
            )
            trained, _ = optim.train(
                init,
                dataset.x[np.asarray(ids, dtype=np.int64)],
                ys,
                _train_config(cfg, "sgd"),
                np.random.default_rng([cfg.seed, t, _STREAM_TRAIN_DIST, 10 + j]),
            )
            models.append(trained)
        return strategies.select_disagreement(
            dataset, pool_ids, models, q, state.num_known_classes
        )
    if kind in scoring.UNCERTAINTY_KINDS:
        return strategies.select_uncertainty(dataset, pool_ids, f_test, kind, q)
    if kind == "random":
        return strategies.select_random(pool_ids, q, rng)
    raise ValueError(f"unknown strategy: {cfg.strategy!r}")


def run_round(
    dataset: PatchDataset, state: PoolState, cfg: ExperimentConfig, t: int
) -> tuple[PoolState, RoundMetrics, RoundArtifacts]:
    """One query round; returns the updated pool, metrics, and dumps."""
    if not state.labeled_ids:
        raise ValueError("labeled set must be non-empty")
    k = state.num_known_classes

    f_sgd, f_sam, f_test, loss_sgd, loss_sam, loss_test = _train_models(
        dataset, state, cfg, t
    )

    pool_ids = sorted(state.unlabeled_ids)
    scores = scoring.score_pool(dataset, pool_ids, f_sgd, f_sam, k)
    selected = _select(dataset, state, cfg, t, scores, f_sgd, f_sam, f_test)

    # Oracle pass in sorted-id order so label flips do not depend on the
    # strategy's internal ordering.
    oracle_rng = _rng(cfg, t, _STREAM_ORACLE)
    score_by_id = {s.sample_id: s for s in scores}
    x_k: list[int] = []
    x_u: list[int] = []
    new_labels: dict[int, int] = {}
    for i in sorted(selected):
        if dataset.is_known[i]:
            x_k.append(i)
            new_labels[i] = synthdata.oracle_label(
                int(dataset.true_class[i]), cfg.oracle, k, oracle_rng
            )
        else:
            x_u.append(i)

    selected_set = set(selected)
    new_state = PoolState(
        labeled_ids=sorted(state.labeled_ids + x_k),
        observed_labels={**state.observed_labels, **new_labels},
        unlabeled_ids=[i for i in pool_ids if i not in selected_set],
        invalid_ids=sorted(state.invalid_ids + x_u),
        test_ids=list(state.test_ids),
        n_known=state.n_known,
        num_known_classes=k,
    )

    # Target-model evaluation on the known-class test set.
    test_ids = np.asarray(state.test_ids, dtype=np.int64)
    test_pred = np.argmax(model.forward_batch(f_test, dataset.x[test_ids]), axis=1)
    accuracy = float(np.mean(test_pred == dataset.true_class[test_ids]))

    precision, recall = precision_recall(
        len(x_k), len(selected), len(new_state.labeled_ids), state.n_known
    )

    # Per-query diagnostics under the round's models.
    sel_arr = np.asarray(sorted(selected), dtype=np.int64)
    sgd_probs = model.predict_proba_batch(f_sgd, dataset.x[sel_arr])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(sgd_probs > 0, sgd_probs * np.log(sgd_probs), 0.0)
    sgd_ent = -terms.sum(axis=1)
    t_pred = np.argmax(model.forward_batch(f_test, dataset.x[sel_arr]), axis=1)
    records = []
    for j, i in enumerate(sel_arr):
        i = int(i)
        records.append(
            QueryRecord(
                sample_id=i,
                observed_label=new_labels.get(i),
                is_valid=bool(dataset.is_known[i]),
                samis=score_by_id[i].score,
                entropy_sgd=float(sgd_ent[j]),
                test_pred=int(t_pred[j]),
                test_correct=bool(t_pred[j] == dataset.true_class[i]),
            )
        )

    metrics = RoundMetrics(
        round=t,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        n_valid_queries=len(x_k),
        n_invalid_queries=len(x_u),
        n_labeled=len(new_state.labeled_ids),
        n_invalid_total=len(new_state.invalid_ids),
        loss_sgd=loss_sgd,
        loss_sam=loss_sam,
        loss_test=loss_test,
        queries=records,
    )
    split = ["unlabeled"] * len(dataset)
    for i in state.labeled_ids:
        split[i] = "labeled"
    for i in state.invalid_ids:
        split[i] = "invalid"
    for i in state.test_ids:
        split[i] = "test"
    artifacts = RoundArtifacts(
        scores=scores,
        embeddings=model.embed_batch(f_test, dataset.x),
        split=split,
    )
    new_state.check_disjoint()
    return new_state, metrics, artifacts


def build_pool(cfg: ExperimentConfig) -> tuple[PatchDataset, PoolState]:
    gen_rng = np.random.default_rng([cfg.seed, 0, _STREAM_GEN])
    return synthdata.build_openset_pool(
        cfg.gen, cfg.mismatch_ratio, cfg.init_labeled_frac, cfg.test_frac, gen_rng
    )


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Full multi-round run; deterministic for a fixed config and seed."""
    dataset, state = build_pool(cfg)
    metrics: list[RoundMetrics] = []
    artifacts: list[RoundArtifacts] = []
    for t in range(cfg.rounds):
        state, m, art = run_round(dataset, state, cfg, t)
        metrics.append(m)
        artifacts.append(art)
    # Re-derive the final-round models for export.
    f_sgd, f_sam, f_test, *_ = _train_models(dataset, state, cfg, cfg.rounds)
    return RunResult(
        metrics=metrics,
        artifacts=artifacts,
        f_sgd=f_sgd,
        f_sam=f_sam,
        f_test=f_test,
    )


def misclassified_entropy_report(
    dataset: PatchDataset,
    queried_ids: list[int],
    f: ModelParams,
    observed_labels: dict[int, int],
    num_known: int | None = None,
) -> list[tuple[int, float, int, int]]:
    """Rows (id, entropy, predicted, observed) for queried samples whose
    known-class argmax under f disagrees with the observed label.

    Only samples with an observed (known-class) label are considered.
    For a K+1 distinguisher pass num_known to restrict the argmax to the
    known-class outputs; for a K-way target model leave it as None.  The
    entropy is that of the full probability vector either way.
    """
    rows = []
    ids = [i for i in queried_ids if i in observed_labels]
    if not ids:
        return rows
    arr = np.asarray(sorted(ids), dtype=np.int64)
    probs = model.predict_proba_batch(f, dataset.x[arr])
    if num_known is None:
        num_known = probs.shape[1]
    known_pred = np.argmax(probs[:, :num_known], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    ent = -terms.sum(axis=1)
    for j, i in enumerate(arr):
        i = int(i)
        if int(known_pred[j]) != observed_labels[i]:
            rows.append((i, float(ent[j]), int(known_pred[j]), observed_labels[i]))
    return rows
