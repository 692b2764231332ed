"""Configuration, experiment orchestration, and file output.

Config files are flat JSON; every key has a documented default and
unknown keys are rejected.  `run_matrix` executes one experiment per
(strategy, seed) cell and writes metrics, per-round score and embedding
dumps, and a manifest echoing the resolved config.  All file writes go
through a temp-then-rename so interrupted runs never leave corrupt CSVs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, strategies
from .alcore import ExperimentConfig, RunResult, run_experiment
from .optim import LrSchedule, SamHyper, SgdHyper
from .synthdata import GenConfig, OracleConfig

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2

METRICS_HEADER = (
    "strategy,seed,round,accuracy,precision,recall,n_labeled,"
    "n_invalid,n_valid_queries,loss_sgd,loss_sam,loss_test"
)

DEFAULT_CONFIG: dict = {
    "rounds": 8,
    "budget": 40,
    "strategies": ["samosa"],
    "seeds": [0],
    "num_known": 4,
    "num_unknown": 6,
    "n_per_class": 200,
    "atypical_frac": 0.1,
    "patches": 4,
    "dim": 500,
    "sigma_p": 2.0,
    "alpha": 1.0,
    "beta": 0.22,
    "mu_norm": 32.0,
    "flip_prob": 0.0,
    "mismatch_ratio": 0.4,
    "init_labeled_frac": 0.05,
    "test_frac": 0.25,
    "width": 32,
    "sigma0": 0.05,
    "epochs": 200,
    "batch_size": 32,
    "lr": 0.01,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "rho": 0.05,
    "lr_step_size": 60,
    "lr_gamma": 0.5,
    "loss_tol": 0.01,
}


class ConfigError(ValueError):
    pass


def validate_config(cfg: dict) -> dict:
    """Apply defaults, reject unknown keys, and check cross-field rules."""
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {**DEFAULT_CONFIG, **cfg}
    if merged["alpha"] <= merged["beta"]:
        raise ConfigError("alpha must exceed beta")
    if not 0 < merged["mismatch_ratio"] <= 1:
        raise ConfigError("mismatch_ratio must be in (0, 1]")
    if merged["rounds"] < 1:
        raise ConfigError("rounds must be at least 1")
    if merged["budget"] < 1:
        raise ConfigError("budget must be at least 1")
    if merged["rho"] < 0:
        raise ConfigError("rho must be non-negative")
    if not merged["strategies"]:
        raise ConfigError("strategies must be non-empty")
    for name in merged["strategies"]:
        strategies.parse_strategy(name)  # raises on unknown names
    if not merged["seeds"]:
        raise ConfigError("seeds must be non-empty")
    return merged


def parse_config(path: str | Path | None) -> dict:
    """Load and validate a JSON config file; None gives pure defaults."""
    if path is None:
        return validate_config({})
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return validate_config(raw)


def write_config(cfg: dict, path: str | Path) -> None:
    _atomic_write(Path(path), json.dumps(validate_config(cfg), indent=2) + "\n")


def experiment_config(cfg: dict, strategy: str, seed: int) -> ExperimentConfig:
    """Build one experiment cell from a resolved flat config."""
    return ExperimentConfig(
        rounds=cfg["rounds"],
        budget=cfg["budget"],
        strategy=strategy,
        seed=seed,
        gen=GenConfig(
            num_known=cfg["num_known"],
            num_unknown=cfg["num_unknown"],
            n_per_class=cfg["n_per_class"],
            atypical_frac=cfg["atypical_frac"],
            patches=cfg["patches"],
            dim=cfg["dim"],
            sigma_p=cfg["sigma_p"],
            alpha=cfg["alpha"],
            beta=cfg["beta"],
            mu_norm=cfg["mu_norm"],
        ),
        oracle=OracleConfig(flip_prob=cfg["flip_prob"]),
        mismatch_ratio=cfg["mismatch_ratio"],
        init_labeled_frac=cfg["init_labeled_frac"],
        test_frac=cfg["test_frac"],
        width=cfg["width"],
        sigma0=cfg["sigma0"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        sgd=SgdHyper(
            lr=cfg["lr"],
            momentum=cfg["momentum"],
            weight_decay=cfg["weight_decay"],
        ),
        sam=SamHyper(rho=cfg["rho"]),
        schedule=LrSchedule(
            initial_lr=cfg["lr"],
            step_size=cfg["lr_step_size"],
            gamma=cfg["lr_gamma"],
        ),
        loss_tol=cfg["loss_tol"],
    )


@dataclass
class RunManifest:
    config: dict
    strategies: list[str]
    seeds: list[int]
    out_dir: Path
    version: str = __version__


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_dir(out_dir: Path, strategy: str, seed: int) -> Path:
    return Path(out_dir) / strategy / f"seed_{seed}"


def write_run_outputs(
    cell_dir: Path, strategy: str, seed: int, result: RunResult, dataset
) -> None:
    lines = [METRICS_HEADER]
    for m in result.metrics:
        lines.append(
            ",".join(
                [
                    strategy,
                    str(seed),
                    str(m.round),
                    _fmt(m.accuracy),
                    _fmt(m.precision),
                    _fmt(m.recall),
                    str(m.n_labeled),
                    str(m.n_invalid_total),
                    str(m.n_valid_queries),
                    _fmt(m.loss_sgd),
                    _fmt(m.loss_sam),
                    _fmt(m.loss_test),
                ]
            )
        )
    _atomic_write(cell_dir / "metrics.csv", "\n".join(lines) + "\n")

    for t, art in enumerate(result.artifacts):
        rows = ["id,score,accepted,sgd_pred,sam_pred"]
        for s in art.scores:
            rows.append(
                f"{s.sample_id},{_fmt(s.score)},{_fmt(s.accepted)},"
                f"{s.sgd_pred},{s.sam_pred}"
            )
        _atomic_write(cell_dir / f"scores_round_{t}.csv", "\n".join(rows) + "\n")

        m_width = art.embeddings.shape[1]
        header = "id,true_class,subclass,is_known,split," + ",".join(
            f"e_{j + 1}" for j in range(m_width)
        )
        rows = [header]
        for i in range(len(dataset)):
            emb = ",".join(_fmt(v) for v in art.embeddings[i])
            rows.append(
                f"{i},{dataset.true_class[i]},{dataset.subclass_name(i)},"
                f"{_fmt(bool(dataset.is_known[i]))},{art.split[i]},{emb}"
            )
        _atomic_write(
            cell_dir / f"embeddings_round_{t}.csv", "\n".join(rows) + "\n"
        )


def run_matrix(manifest: RunManifest) -> int:
    """Execute every (strategy, seed) cell; returns a process exit code."""
    from .alcore import build_pool

    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(
        out / "manifest.json",
        json.dumps(
            {
                "config": manifest.config,
                "strategies": manifest.strategies,
                "seeds": manifest.seeds,
                "out_dir": str(out),
                "version": manifest.version,
            },
            indent=2,
        )
        + "\n",
    )
    failed = False
    for strategy in manifest.strategies:
        for seed in manifest.seeds:
            cell = run_dir(out, strategy, seed)
            cfg = experiment_config(manifest.config, strategy, seed)
            try:
                result = run_experiment(cfg)
                dataset, _ = build_pool(cfg)
                write_run_outputs(cell, strategy, seed, result, dataset)
            except Exception:
                failed = True
                cell.mkdir(parents=True, exist_ok=True)
                (cell / "FAILED").write_text(traceback.format_exc())
    return EXIT_RUN_FAILURE if failed else EXIT_OK


def summarize(out_dir: str | Path) -> str:
    """Per-strategy mean/std of final-round accuracy plus average rank.

    Returns the summary CSV text and writes it to summary.csv in out_dir.
    Rank 1 is the best mean accuracy; ties share the mean rank.
    """
    out = Path(out_dir)
    finals: dict[str, list[float]] = {}
    for metrics_path in sorted(out.glob("*/seed_*/metrics.csv")):
        if (metrics_path.parent / "FAILED").exists():
            continue
        lines = metrics_path.read_text().strip().splitlines()
        if len(lines) < 2:
            continue
        last = lines[-1].split(",")
        finals.setdefault(last[0], []).append(float(last[3]))
    if not finals:
        raise ValueError(f"no completed runs under {out}")

    names = sorted(finals)
    means = {s: float(np.mean(finals[s])) for s in names}
    stds = {
        s: (float(np.std(finals[s], ddof=1)) if len(finals[s]) > 1 else 0.0)
        for s in names
    }
    # Competition rank with ties sharing the mean rank.
    ranks: dict[str, float] = {}
    ordered = sorted(names, key=lambda s: -means[s])
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and means[ordered[j]] == means[ordered[i]]:
            j += 1
        shared = (i + 1 + j) / 2.0
        for s in ordered[i:j]:
            ranks[s] = shared
        i = j
    lines = ["strategy,n_runs,mean_accuracy,std_accuracy,avg_rank"]
    for s in names:
        lines.append(
            f"{s},{len(finals[s])},{_fmt(means[s])},{_fmt(stds[s])},"
            f"{_fmt(ranks[s])}"
        )
    text = "\n".join(lines) + "\n"
    _atomic_write(out / "summary.csv", text)
    return text


def _parse_seeds(spec: str) -> list[int]:
    parts = [p for p in spec.split(",") if p]
    if len(parts) == 1 and "," not in spec:
        # A bare integer n means seeds 0..n-1.
        n = int(parts[0])
        return list(range(n))
    return [int(p) for p in parts]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="osal-lab",
        description="Run open-set active learning experiments on synthetic data.",
    )
    parser.add_argument("--config", type=str, default=None)
    parser.add_argument("--strategy", type=str, default=None,
                        help="comma-separated strategy names")
    parser.add_argument("--seeds", type=str, default=None,
                        help="a count n (seeds 0..n-1) or a comma-separated list")
    parser.add_argument("--out", type=str, default="runs")
    parser.add_argument("--rounds", type=int, default=None)
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--mismatch", type=float, default=None)
    parser.add_argument("--summarize-only", action="store_true",
                        help="only aggregate an existing output directory")
    args = parser.parse_args(argv)

    if args.summarize_only:
        try:
            print(summarize(args.out), end="")
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUN_FAILURE
        return EXIT_OK

    try:
        cfg = parse_config(args.config)
        if args.strategy is not None:
            cfg["strategies"] = args.strategy.split(",")
        if args.seeds is not None:
            cfg["seeds"] = _parse_seeds(args.seeds)
        if args.rounds is not None:
            cfg["rounds"] = args.rounds
        if args.budget is not None:
            cfg["budget"] = args.budget
        if args.mismatch is not None:
            cfg["mismatch_ratio"] = args.mismatch
        cfg = validate_config(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    manifest = RunManifest(
        config=cfg,
        strategies=list(cfg["strategies"]),
        seeds=[int(s) for s in cfg["seeds"]],
        out_dir=Path(args.out),
    )
    status = run_matrix(manifest)
    if status == EXIT_OK:
        print(summarize(manifest.out_dir), end="")
    return status


if __name__ == "__main__":
    sys.exit(main())
