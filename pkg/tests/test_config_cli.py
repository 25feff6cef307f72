"""Config validation, preset integrity, and the command-line surface."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from steplab.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from steplab.config import (
    ConfigError,
    build_dataset,
    build_problem,
    build_schedule,
    load_config_file,
    validate_config,
)
from steplab.diagnostics import TrainTrace
from steplab.presets import PRESETS, load_preset, preset_names


def minimal_train_config():
    return {
        "experiment": {"command": "train", "seed": 1},
        "problem": {"kind": "quadratic", "dimension": 4, "condition_number": 10.0},
        "run": {"epochs": 1, "iterations": 20},
        "phase": [{"learning_rate": 0.01}],
    }


class TestValidation:
    def test_minimal_config_passes(self):
        cfg = validate_config(minimal_train_config(), "train", "t")
        assert cfg.command == "train"
        assert cfg.seed == 1
        assert cfg.problem["dimension"] == 4

    def test_unknown_section_rejected(self):
        raw = minimal_train_config()
        raw["extras"] = {}
        with pytest.raises(ConfigError, match="extras"):
            validate_config(raw, "train", "t")

    def test_unknown_key_rejected(self):
        raw = minimal_train_config()
        raw["problem"]["condition"] = 5
        with pytest.raises(ConfigError, match="condition"):
            validate_config(raw, "train", "t")
        raw = minimal_train_config()
        raw["phase"][0]["lr"] = 0.1
        with pytest.raises(ConfigError, match="lr"):
            validate_config(raw, "train", "t")

    def test_command_mismatch(self):
        with pytest.raises(ConfigError, match="declares command"):
            validate_config(minimal_train_config(), "sweep", "t")

    def test_bad_condition_number(self):
        raw = minimal_train_config()
        raw["problem"]["condition_number"] = 0.5
        with pytest.raises(ConfigError, match="condition_number"):
            validate_config(raw, "train", "t")

    def test_bad_types(self):
        raw = minimal_train_config()
        raw["run"]["epochs"] = "fifty"
        with pytest.raises(ConfigError, match="epochs"):
            validate_config(raw, "train", "t")
        raw = minimal_train_config()
        raw["phase"][0]["momentum"] = 1.0
        with pytest.raises(ConfigError, match="momentum"):
            validate_config(raw, "train", "t")

    def test_transition_must_lie_inside_budget(self):
        raw = minimal_train_config()
        raw["run"]["epochs"] = 10
        raw["phase"].append({"learning_rate": 0.001, "momentum": 0.9})
        raw["schedule"] = {"transition_epoch": 10}
        with pytest.raises(ConfigError, match="epoch budget"):
            validate_config(raw, "train", "t")

    def test_minibatch_requires_dataset(self):
        raw = minimal_train_config()
        raw["phase"][0]["batch_size"] = 8
        with pytest.raises(ConfigError, match="dataset"):
            validate_config(raw, "train", "t")

    def test_mlp_requires_dataset(self):
        raw = minimal_train_config()
        raw["problem"] = {"kind": "mlp"}
        with pytest.raises(ConfigError, match="dataset"):
            validate_config(raw, "train", "t")

    def test_builders(self, tmp_path):
        raw = {
            "experiment": {"command": "train", "seed": 2},
            "problem": {"kind": "mlp", "layer_sizes": [2, 8, 2]},
            "dataset": {"kind": "two_moons", "n_samples": 40, "noise": 0.1, "holdout_fraction": 0.25},
            "run": {"epochs": 2},
            "phase": [
                {"learning_rate": 0.5, "weight_decay": 1e-4, "batch_size": 8},
                {"learning_rate": 0.01, "momentum": 0.9, "weight_decay": 1e-4, "batch_size": 8},
            ],
            "schedule": {"transition_epoch": 1, "reset_momentum": False},
        }
        cfg = validate_config(raw, "train", "t")
        problem = build_problem(cfg)
        assert problem.dimension == (2 + 1) * 8 + (8 + 1) * 2
        ds, holdout = build_dataset(cfg)
        assert ds.n_samples == 30
        assert holdout.n_samples == 10
        spec = build_schedule(cfg)
        assert len(spec.phases) == 2
        assert spec.transition_epochs == (1,)
        assert spec.reset_momentum_on_transition is False
        assert spec.phases[0].hyper.learning_rate == 0.5

    def test_schedule_field_names_match_config_convention(self):
        raw = minimal_train_config()
        raw["run"]["epochs"] = 4
        raw["phase"] = [
            {"learning_rate": 0.9236708571873865, "momentum": 0.0, "weight_decay": 1e-4},
            {"learning_rate": 0.005, "momentum": 0.95, "weight_decay": 1e-4},
        ]
        raw["schedule"] = {"transition_epoch": 2}
        cfg = validate_config(raw, "train", "t")
        spec = build_schedule(cfg)
        assert spec.phases[0].hyper.learning_rate == 0.9236708571873865
        assert spec.phases[1].hyper.momentum == 0.95
        assert spec.transition_epochs == (2,)


class TestConfigFiles:
    def test_toml_and_json_agree(self, tmp_path):
        toml_text = (
            '[experiment]\ncommand = "train"\nseed = 3\n'
            '[problem]\nkind = "quadratic"\ndimension = 4\ncondition_number = 10.0\n'
            "[run]\nepochs = 1\niterations = 5\n"
            "[[phase]]\nlearning_rate = 0.01\n"
        )
        toml_path = tmp_path / "c.toml"
        toml_path.write_text(toml_text)
        raw_toml = load_config_file(toml_path)
        json_path = tmp_path / "c.json"
        json_path.write_text(json.dumps(raw_toml))
        raw_json = load_config_file(json_path)
        a = validate_config(raw_toml, "train", "c")
        b = validate_config(raw_json, "train", "c")
        assert a.problem == b.problem
        assert a.phases == b.phases

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_config_file("/nonexistent/config.toml")


class TestPresets:
    def test_all_presets_validate(self):
        for name in preset_names():
            raw = load_preset(name)
            cfg = validate_config(raw, None, name)
            assert cfg.name == name

    def test_load_preset_copies(self):
        a = load_preset("fig2")
        a["experiment"]["seed"] = 999
        assert PRESETS["fig2"]["experiment"]["seed"] != 999

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            load_preset("fig99")

    def test_reference_two_phase_values_preserved(self):
        raw = load_preset("cifar-two-phase")
        assert raw["phase"][0]["learning_rate"] == 0.9236708571873865
        assert raw["phase"][1]["learning_rate"] == 0.005
        assert raw["phase"][1]["momentum"] == 0.95


def tiny_demo_config(tmp_path) -> Path:
    path = tmp_path / "demo.toml"
    path.write_text(
        '[experiment]\ncommand = "quadratic-demo"\nname = "tiny-demo"\nseed = 3\n'
        '[problem]\nkind = "quadratic"\ndimension = 10\ncondition_number = 100.0\nseed = 7\n'
        "[demo]\nmomenta = [0.0, 0.9]\neta_min = 1e-5\neta_max = 1.0\neta_count = 8\n"
        "iterations = 200\n"
    )
    return path


class TestCli:
    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / "runs"
        code = main(["quadratic-demo", "--preset", "fig2", "--out", str(out), "--dry-run"])
        assert code == EXIT_OK
        assert not out.exists()
        assert "tuning rates" in capsys.readouterr().out

    def test_unknown_preset_is_config_error(self, tmp_path):
        assert main(["train", "--preset", "missing", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_config_exits_without_files(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text(
            '[experiment]\ncommand = "quadratic-demo"\n'
            '[problem]\nkind = "quadratic"\ncondition_number = 0.5\n'
        )
        out = tmp_path / "runs"
        assert main(["quadratic-demo", "--config", str(bad), "--out", str(out)]) == EXIT_CONFIG
        assert not out.exists()

    def test_missing_config_file_is_io_error(self, tmp_path):
        code = main(["train", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)])
        assert code == EXIT_IO

    def test_tiny_demo_with_iteration_override(self, tmp_path):
        out = tmp_path / "runs"
        code = main(
            [
                "quadratic-demo",
                "--config",
                str(tiny_demo_config(tmp_path)),
                "--out",
                str(out),
                "--iterations",
                "10",
            ]
        )
        assert code == EXIT_OK
        run_dir = out / "tiny-demo"
        trace = TrainTrace.from_csv(run_dir / "trace_mu0.csv")
        assert trace.rows[-1].step == 10
        for name in ("config.json", "loss.svg", "alignment.svg", "scale.svg", "summary.csv"):
            assert (run_dir / name).exists()
        snapshot = json.loads((run_dir / "config.json").read_text())
        assert snapshot["demo"]["iterations"] == 10

    def test_byte_identical_rerun(self, tmp_path):
        cfg = tiny_demo_config(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["quadratic-demo", "--config", str(cfg), "--out", str(out_a)]) == EXIT_OK
        assert main(["quadratic-demo", "--config", str(cfg), "--out", str(out_b)]) == EXIT_OK
        files = sorted(p.name for p in (out_a / "tiny-demo").iterdir())
        assert files == sorted(p.name for p in (out_b / "tiny-demo").iterdir())
        for name in files:
            assert (out_a / "tiny-demo" / name).read_bytes() == (
                out_b / "tiny-demo" / name
            ).read_bytes(), name

    def test_env_var_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STEPLAB_OUT", str(tmp_path / "env-root"))
        code = main(["quadratic-demo", "--config", str(tiny_demo_config(tmp_path))])
        assert code == EXIT_OK
        assert (tmp_path / "env-root" / "tiny-demo" / "loss.svg").exists()

    def test_two_phase_preset_phase2_monotone(self, tmp_path):
        out = tmp_path / "runs"
        assert main(["train", "--preset", "two-phase-toy", "--out", str(out)]) == EXIT_OK
        trace = TrainTrace.from_csv(out / "two-phase-toy" / "trace.csv")
        losses = trace.losses()
        transition = 25
        phase2 = losses[transition:]
        assert np.all(np.diff(phase2) <= 1e-6)
        # the alignment column is filled by the two-pass annotation
        assert any(r.alignment is not None for r in trace.rows[:-1])

    def test_single_phase_cli_matches_direct_api(self, tmp_path):
        out = tmp_path / "runs"
        assert main(["train", "--preset", "fig1-small", "--out", str(out)]) == EXIT_OK
        from steplab.config import validate_config as vc
        from steplab.optim import train as train_api

        raw = load_preset("fig1-small")
        cfg = vc(raw, "train", "fig1-small")
        problem = build_problem(cfg)
        ds, _ = build_dataset(cfg)
        _, trace = train_api(
            problem,
            build_schedule(cfg),
            cfg.run["epochs"],
            dataset=ds,
            seed=cfg.seed,
            store_snapshots=True,
        )
        from_cli = TrainTrace.from_csv(out / "fig1-small" / "trace.csv")
        assert [r.loss for r in from_cli.rows] == [r.loss for r in trace.rows]

    def test_report_on_missing_file(self, tmp_path):
        code = main(["report", str(tmp_path / "ghost.csv"), "--out", str(tmp_path)])
        assert code == EXIT_IO

    def test_report_renders_trace_and_sweep(self, tmp_path):
        out = tmp_path / "runs"
        main(["quadratic-demo", "--config", str(tiny_demo_config(tmp_path)), "--out", str(out)])
        trace_csv = out / "tiny-demo" / "trace_mu0.csv"
        report_dir = tmp_path / "report"
        code = main(["report", str(trace_csv), "--out", str(report_dir)])
        assert code == EXIT_OK
        assert (report_dir / "trace_mu0_summary.csv").exists()
        assert (report_dir / "trace_mu0_loss.svg").exists()

    def test_report_rejects_unknown_csv(self, tmp_path):
        weird = tmp_path / "weird.csv"
        weird.write_text("alpha,beta\n1,2\n")
        assert main(["report", str(weird), "--out", str(tmp_path)]) == EXIT_IO
