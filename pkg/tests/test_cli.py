"""Unit tests for config handling, output files and the command line."""

import json

import numpy as np
import pytest

from osal_lab import cli
from osal_lab.cli import (
    DEFAULT_CONFIG,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_RUN_FAILURE,
    METRICS_HEADER,
    ConfigError,
    experiment_config,
    main,
    parse_config,
    run_dir,
    summarize,
    validate_config,
    write_config,
)


def tiny_config(**kw):
    base = {
        "rounds": 2,
        "budget": 5,
        "strategies": ["samosa"],
        "seeds": [0],
        "num_known": 2,
        "num_unknown": 2,
        "n_per_class": 30,
        "dim": 50,
        "mismatch_ratio": 0.5,
        "init_labeled_frac": 0.1,
        "width": 8,
        "epochs": 3,
        "loss_tol": None,
    }
    base.update(kw)
    return base


class TestValidateConfig:
    def test_empty_config_gives_documented_defaults(self):
        cfg = validate_config({})
        assert cfg["budget"] == 40
        assert cfg["rounds"] == 8
        assert cfg["rho"] == 0.05
        assert cfg == DEFAULT_CONFIG

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            validate_config({"learning_rate": 0.1})

    def test_alpha_beta_rule(self):
        with pytest.raises(ConfigError, match="alpha must exceed beta"):
            validate_config({"alpha": 0.1, "beta": 0.2})

    def test_bad_strategy_rejected(self):
        with pytest.raises(ValueError):
            validate_config({"strategies": ["coreset"]})

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigError):
            validate_config({"seeds": []})

    def test_partial_override_keeps_other_defaults(self):
        cfg = validate_config({"budget": 7})
        assert cfg["budget"] == 7
        assert cfg["rounds"] == DEFAULT_CONFIG["rounds"]


class TestParseConfig:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        write_config({"budget": 11, "seeds": [3, 4]}, path)
        cfg = parse_config(path)
        assert cfg["budget"] == 11
        assert cfg["seeds"] == [3, 4]

    def test_none_gives_defaults(self):
        assert parse_config(None) == DEFAULT_CONFIG

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(path)

    def test_non_object_rejected(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            parse_config(path)


class TestExperimentConfig:
    def test_fields_are_threaded_through(self):
        cfg = validate_config({"rho": 0.3, "lr": 0.02, "flip_prob": 0.05})
        exp = experiment_config(cfg, "entropy", 7)
        assert exp.strategy == "entropy"
        assert exp.seed == 7
        assert exp.sam.rho == 0.3
        assert exp.sgd.lr == 0.02
        assert exp.schedule.initial_lr == 0.02
        assert exp.oracle.flip_prob == 0.05
        assert exp.gen.beta == cfg["beta"]


class TestSeedParsing:
    def test_bare_count(self):
        assert cli._parse_seeds("5") == [0, 1, 2, 3, 4]

    def test_explicit_list(self):
        assert cli._parse_seeds("0,3,7") == [0, 3, 7]


class TestEndToEnd:
    def test_full_run_writes_all_outputs(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(tiny_config()))
        out = tmp_path / "runs"
        assert main(["--config", str(cfg_path), "--out", str(out)]) == EXIT_OK

        cell = run_dir(out, "samosa", 0)
        metrics = (cell / "metrics.csv").read_text().splitlines()
        assert metrics[0] == METRICS_HEADER
        assert len(metrics) == 3  # header + 2 rounds
        assert (out / "manifest.json").exists()
        assert (out / "summary.csv").exists()
        for t in range(2):
            assert (cell / f"scores_round_{t}.csv").exists()
            emb = (cell / f"embeddings_round_{t}.csv").read_text().splitlines()
            assert emb[0].startswith("id,true_class,subclass,is_known,split,e_1")

    def test_manifest_echoes_resolved_config(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(tiny_config()))
        out = tmp_path / "runs"
        main(["--config", str(cfg_path), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["budget"] == 5
        assert manifest["config"]["rho"] == DEFAULT_CONFIG["rho"]
        assert manifest["seeds"] == [0]

    def test_flag_overrides(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(tiny_config()))
        out = tmp_path / "runs"
        code = main(
            [
                "--config", str(cfg_path),
                "--strategy", "random",
                "--seeds", "2",
                "--rounds", "1",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        for seed in (0, 1):
            assert (run_dir(out, "random", seed) / "metrics.csv").exists()

    def test_config_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus_key": 1}))
        assert main(["--config", str(cfg_path)]) == EXIT_CONFIG_ERROR

    def test_failed_cell_leaves_marker(self, tmp_path):
        # Exhausting the unlabeled pool makes a later round fail, which
        # must produce a FAILED file and a non-zero exit code.
        cfg = tiny_config(
            n_per_class=20, budget=40, rounds=3, init_labeled_frac=0.1
        )
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "runs"
        code = main(["--config", str(cfg_path), "--out", str(out)])
        assert code == EXIT_RUN_FAILURE
        assert (run_dir(out, "samosa", 0) / "FAILED").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(tiny_config()))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["--config", str(cfg_path), "--out", str(out_a)])
        main(["--config", str(cfg_path), "--out", str(out_b)])
        read = lambda o: (run_dir(o, "samosa", 0) / "metrics.csv").read_bytes()
        assert read(out_a) == read(out_b)


class TestSummarize:
    def fake_cell(self, out, strategy, seed, final_acc):
        cell = run_dir(out, strategy, seed)
        cell.mkdir(parents=True)
        lines = [METRICS_HEADER]
        lines.append(
            f"{strategy},{seed},0,{final_acc!r},0.5,0.1,10,2,8,0.1,0.1,0.1"
        )
        (cell / "metrics.csv").write_text("\n".join(lines) + "\n")

    def test_mean_std_and_rank(self, tmp_path):
        out = tmp_path / "runs"
        for seed, acc in enumerate((0.70, 0.72, 0.74)):
            self.fake_cell(out, "samosa", seed, acc)
        self.fake_cell(out, "random", 0, 0.60)
        text = summarize(out)
        rows = {r.split(",")[0]: r.split(",") for r in text.splitlines()[1:]}
        assert float(rows["samosa"][2]) == pytest.approx(0.72)
        assert float(rows["samosa"][3]) == pytest.approx(0.02)
        assert float(rows["samosa"][4]) == 1.0
        assert float(rows["random"][4]) == 2.0
        assert float(rows["random"][3]) == 0.0  # single run has no spread

    def test_tied_means_share_rank(self, tmp_path):
        out = tmp_path / "runs"
        self.fake_cell(out, "samosa", 0, 0.8)
        self.fake_cell(out, "random", 0, 0.8)
        self.fake_cell(out, "entropy", 0, 0.5)
        text = summarize(out)
        rows = {r.split(",")[0]: r.split(",") for r in text.splitlines()[1:]}
        assert float(rows["samosa"][4]) == 1.5
        assert float(rows["random"][4]) == 1.5
        assert float(rows["entropy"][4]) == 3.0

    def test_failed_cells_skipped(self, tmp_path):
        out = tmp_path / "runs"
        self.fake_cell(out, "samosa", 0, 0.8)
        self.fake_cell(out, "samosa", 1, 0.2)
        (run_dir(out, "samosa", 1) / "FAILED").write_text("boom")
        text = summarize(out)
        row = text.splitlines()[1].split(",")
        assert row[1] == "1"  # only the healthy run counted

    def test_empty_directory_raises(self, tmp_path):
        with pytest.raises(ValueError):
            summarize(tmp_path)

    def test_summarize_only_flag(self, tmp_path, capsys):
        out = tmp_path / "runs"
        self.fake_cell(out, "samosa", 0, 0.9)
        assert main(["--summarize-only", "--out", str(out)]) == EXIT_OK
        assert "samosa" in capsys.readouterr().out

    def test_summarize_only_empty_dir_fails(self, tmp_path):
        assert main(["--summarize-only", "--out", str(tmp_path)]) == EXIT_RUN_FAILURE
