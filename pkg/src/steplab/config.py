"""Declarative experiment configs: strict validation, TOML/JSON loading, and
builders for the objects the commands run.

Configs are validated completely before any computation: unknown sections or
keys are rejected so typos never silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .optim import HyperParams, PhaseSpec, ScheduleSpec
from .problems import (
    ACTIVATIONS,
    DATASET_KINDS,
    Dataset,
    MlpModel,
    make_dataset,
    make_quadratic,
)

COMMANDS = ("quadratic-demo", "train", "equivalence", "sweep", "report")

_MISSING = object()


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _get(section: str, data: dict, key: str, default=_MISSING):
    if key not in data:
        if default is _MISSING:
            raise ConfigError(f"[{section}] is missing required key {key!r}")
        return default
    return data[key]


def _as_int(section: str, key: str, value, lo=None, hi=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"[{section}] {key} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"[{section}] {key} must be <= {hi}, got {value}")
    return value


def _as_float(section: str, key: str, value, lo=None, strict_lo=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
    value = float(value)
    if lo is not None and value < lo:
        raise ConfigError(f"[{section}] {key} must be >= {lo}, got {value}")
    if strict_lo is not None and value <= strict_lo:
        raise ConfigError(f"[{section}] {key} must be > {strict_lo}, got {value}")
    return value


def _as_str(section: str, key: str, value, choices=None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"[{section}] {key} must be a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(
            f"[{section}] {key} must be one of {tuple(choices)}, got {value!r}"
        )
    return value


def _as_bool(section: str, key: str, value) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"[{section}] {key} must be true or false, got {value!r}")
    return value


def _as_number_list(section: str, key: str, value) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"[{section}] {key} must be a non-empty list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"[{section}] {key} must contain only numbers, got {v!r}")
        out.append(float(v))
    return out


def _as_int_list(section: str, key: str, value) -> list[int]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"[{section}] {key} must be a non-empty list of integers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"[{section}] {key} must contain only integers, got {v!r}")
        out.append(v)
    return out


@dataclass
class ExperimentConfig:
    """A validated experiment: everything a command needs to run."""

    command: str
    name: str
    seed: int
    output_dir: str | None
    jobs: int
    problem: dict | None
    dataset: dict | None
    run: dict
    phases: list[dict]
    schedule: dict
    demo: dict
    equivalence: dict
    sweep: dict
    raw: dict = field(repr=False, default_factory=dict)

    def snapshot_json(self) -> str:
        """Canonical JSON of the validated config; written next to artifacts."""
        return json.dumps(self.raw, sort_keys=True, indent=2) + "\n"


def _validate_experiment(data: dict, command: str | None, name_default: str) -> dict:
    _check_keys("experiment", data, ("command", "name", "seed", "output_dir", "jobs"))
    declared = data.get("command")
    if declared is not None:
        declared = _as_str("experiment", "command", declared, COMMANDS)
        if command is not None and declared != command:
            raise ConfigError(
                f"config declares command {declared!r} but was run as {command!r}"
            )
    resolved = command or declared
    if resolved is None:
        raise ConfigError("[experiment] needs a command")
    return {
        "command": resolved,
        "name": _as_str("experiment", "name", _get("experiment", data, "name", name_default)),
        "seed": _as_int("experiment", "seed", _get("experiment", data, "seed", 0)),
        "output_dir": data.get("output_dir"),
        "jobs": _as_int("experiment", "jobs", _get("experiment", data, "jobs", 1), lo=1),
    }


def _validate_problem(data: dict, default_seed: int) -> dict:
    kind = _as_str("problem", "kind", _get("problem", data, "kind"), ("quadratic", "mlp"))
    if kind == "quadratic":
        _check_keys("problem", data, ("kind", "dimension", "condition_number", "seed"))
        return {
            "kind": kind,
            "dimension": _as_int(
                "problem", "dimension", _get("problem", data, "dimension", 100), lo=2
            ),
            "condition_number": _as_float(
                "problem",
                "condition_number",
                _get("problem", data, "condition_number", 1e5),
                lo=1.0,
            ),
            "seed": _as_int("problem", "seed", _get("problem", data, "seed", default_seed)),
        }
    _check_keys("problem", data, ("kind", "layer_sizes", "activation"))
    sizes = _as_int_list(
        "problem", "layer_sizes", _get("problem", data, "layer_sizes", [2, 32, 32, 2])
    )
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError("[problem] layer_sizes needs >= 2 positive integers")
    return {
        "kind": kind,
        "layer_sizes": sizes,
        "activation": _as_str(
            "problem", "activation", _get("problem", data, "activation", "tanh"), ACTIVATIONS
        ),
    }


def _validate_dataset(data: dict, default_seed: int) -> dict:
    _check_keys(
        "dataset", data, ("kind", "n_samples", "noise", "seed", "holdout_fraction")
    )
    fraction = _as_float(
        "dataset", "holdout_fraction", _get("dataset", data, "holdout_fraction", 0.0), lo=0.0
    )
    if fraction >= 1.0:
        raise ConfigError("[dataset] holdout_fraction must be < 1")
    return {
        "kind": _as_str("dataset", "kind", _get("dataset", data, "kind"), DATASET_KINDS),
        "n_samples": _as_int(
            "dataset", "n_samples", _get("dataset", data, "n_samples", 200), lo=2
        ),
        "noise": _as_float("dataset", "noise", _get("dataset", data, "noise", 0.1), lo=0.0),
        "seed": _as_int("dataset", "seed", _get("dataset", data, "seed", default_seed)),
        "holdout_fraction": fraction,
    }


def _validate_run(data: dict) -> dict:
    _check_keys("run", data, ("epochs", "iterations", "log", "store_snapshots"))
    iterations = data.get("iterations")
    if iterations is not None:
        iterations = _as_int("run", "iterations", iterations, lo=1)
    log = data.get("log")
    if log is not None:
        log = _as_str("run", "log", log, ("iteration", "epoch", "final"))
    return {
        "epochs": _as_int("run", "epochs", _get("run", data, "epochs", 1), lo=1),
        "iterations": iterations,
        "log": log,
        "store_snapshots": _as_bool(
            "run", "store_snapshots", _get("run", data, "store_snapshots", True)
        ),
    }


def _validate_phase(index: int, data: dict) -> dict:
    section = f"phase[{index}]"
    _check_keys(section, data, ("learning_rate", "momentum", "weight_decay", "batch_size"))
    lr = _as_float(section, "learning_rate", _get(section, data, "learning_rate"), strict_lo=0.0)
    momentum = _as_float(section, "momentum", _get(section, data, "momentum", 0.0), lo=0.0)
    if momentum >= 1.0:
        raise ConfigError(f"[{section}] momentum must be < 1, got {momentum}")
    batch_size = data.get("batch_size")
    if batch_size is not None:
        batch_size = _as_int(section, "batch_size", batch_size, lo=1)
    return {
        "learning_rate": lr,
        "momentum": momentum,
        "weight_decay": _as_float(
            section, "weight_decay", _get(section, data, "weight_decay", 0.0), lo=0.0
        ),
        "batch_size": batch_size,
    }


def _validate_schedule(data: dict, n_phases: int, epochs: int) -> dict:
    _check_keys("schedule", data, ("transition_epoch", "transition_epochs", "reset_momentum"))
    if "transition_epoch" in data and "transition_epochs" in data:
        raise ConfigError("[schedule] give either transition_epoch or transition_epochs")
    if "transition_epoch" in data:
        transitions = [_as_int("schedule", "transition_epoch", data["transition_epoch"], lo=0)]
    elif "transition_epochs" in data:
        transitions = _as_int_list("schedule", "transition_epochs", data["transition_epochs"])
    else:
        transitions = []
    if len(transitions) != max(0, n_phases - 1):
        raise ConfigError(
            f"{n_phases} phase(s) need {max(0, n_phases - 1)} transition epoch(s), "
            f"got {len(transitions)}"
        )
    if any(b <= a for a, b in zip(transitions, transitions[1:])):
        raise ConfigError("[schedule] transition epochs must be strictly increasing")
    if any(t >= epochs for t in transitions):
        raise ConfigError(
            f"[schedule] transition epochs must be below the epoch budget ({epochs})"
        )
    return {
        "transition_epochs": transitions,
        "reset_momentum": _as_bool(
            "schedule", "reset_momentum", _get("schedule", data, "reset_momentum", True)
        ),
    }


def _validate_demo(data: dict) -> dict:
    _check_keys(
        "demo",
        data,
        ("momenta", "eta_min", "eta_max", "eta_count", "iterations", "weight_decay"),
    )
    momenta = _as_number_list("demo", "momenta", _get("demo", data, "momenta", [0.0, 0.5, 0.9, 0.95]))
    if any(not 0.0 <= m < 1.0 for m in momenta):
        raise ConfigError("[demo] momenta must lie in [0, 1)")
    eta_min = _as_float("demo", "eta_min", _get("demo", data, "eta_min", 1e-7), strict_lo=0.0)
    eta_max = _as_float("demo", "eta_max", _get("demo", data, "eta_max", 5e5), strict_lo=0.0)
    if eta_max <= eta_min:
        raise ConfigError("[demo] eta_max must exceed eta_min")
    return {
        "momenta": momenta,
        "eta_min": eta_min,
        "eta_max": eta_max,
        "eta_count": _as_int("demo", "eta_count", _get("demo", data, "eta_count", 50), lo=2),
        "iterations": _as_int(
            "demo", "iterations", _get("demo", data, "iterations", 10000), lo=1
        ),
        "weight_decay": _as_float(
            "demo", "weight_decay", _get("demo", data, "weight_decay", 0.0), lo=0.0
        ),
    }


def _validate_equivalence(data: dict) -> dict:
    _check_keys(
        "equivalence",
        data,
        (
            "baseline_etas",
            "baseline_eta_min",
            "baseline_eta_max",
            "baseline_count",
            "mus",
            "iterations",
            "epochs",
            "batch_size",
            "points_per_decade",
            "pad_decades",
            "space",
            "weight_decay",
        ),
    )
    if "baseline_etas" in data:
        etas = _as_number_list("equivalence", "baseline_etas", data["baseline_etas"])
    else:
        lo = _as_float(
            "equivalence", "baseline_eta_min", _get("equivalence", data, "baseline_eta_min"),
            strict_lo=0.0,
        )
        hi = _as_float(
            "equivalence", "baseline_eta_max", _get("equivalence", data, "baseline_eta_max"),
            strict_lo=0.0,
        )
        count = _as_int(
            "equivalence", "baseline_count", _get("equivalence", data, "baseline_count", 5), lo=1
        )
        if hi <= lo:
            raise ConfigError("[equivalence] baseline_eta_max must exceed baseline_eta_min")
        etas = [float(e) for e in np.logspace(np.log10(lo), np.log10(hi), count)]
    if any(e <= 0 for e in etas):
        raise ConfigError("[equivalence] baseline learning rates must be positive")
    mus = _as_number_list("equivalence", "mus", _get("equivalence", data, "mus", [0.9, 0.99]))
    if any(not 0.0 <= m < 1.0 for m in mus):
        raise ConfigError("[equivalence] mus must lie in [0, 1)")
    batch_size = data.get("batch_size")
    if batch_size is not None:
        batch_size = _as_int("equivalence", "batch_size", batch_size, lo=1)
    return {
        "baseline_etas": etas,
        "mus": mus,
        "iterations": data.get("iterations")
        and _as_int("equivalence", "iterations", data["iterations"], lo=2),
        "epochs": _as_int("equivalence", "epochs", _get("equivalence", data, "epochs", 1), lo=1),
        "batch_size": batch_size,
        "points_per_decade": _as_int(
            "equivalence",
            "points_per_decade",
            _get("equivalence", data, "points_per_decade", 9),
            lo=1,
        ),
        "pad_decades": _as_float(
            "equivalence", "pad_decades", _get("equivalence", data, "pad_decades", 1.0), lo=0.0
        ),
        "space": _as_str(
            "equivalence", "space", _get("equivalence", data, "space", "raw"), ("raw", "log")
        ),
        "weight_decay": _as_float(
            "equivalence", "weight_decay", _get("equivalence", data, "weight_decay", 0.0), lo=0.0
        ),
    }


def _validate_sweep(data: dict, default_seed: int) -> dict:
    kind = _as_str("sweep", "kind", _get("sweep", data, "kind"), ("grid", "random", "transition"))
    common = ("kind", "iterations", "weight_decay", "max_runs", "allow_large")
    out: dict = {"kind": kind}
    if kind == "grid":
        _check_keys(
            "sweep",
            data,
            common
            + (
                "eta_min",
                "eta_max",
                "eta_count",
                "one_minus_mu_min",
                "one_minus_mu_max",
                "one_minus_mu_count",
                "repetitions",
            ),
        )
        out.update(
            eta_min=_as_float("sweep", "eta_min", _get("sweep", data, "eta_min", 1e-7), strict_lo=0.0),
            eta_max=_as_float("sweep", "eta_max", _get("sweep", data, "eta_max", 5e5), strict_lo=0.0),
            eta_count=_as_int("sweep", "eta_count", _get("sweep", data, "eta_count", 50), lo=1),
            one_minus_mu_min=_as_float(
                "sweep", "one_minus_mu_min", _get("sweep", data, "one_minus_mu_min", 1e-3),
                strict_lo=0.0,
            ),
            one_minus_mu_max=_as_float(
                "sweep", "one_minus_mu_max", _get("sweep", data, "one_minus_mu_max", 1.0),
                strict_lo=0.0,
            ),
            one_minus_mu_count=_as_int(
                "sweep", "one_minus_mu_count", _get("sweep", data, "one_minus_mu_count", 50), lo=1
            ),
            repetitions=_as_int("sweep", "repetitions", _get("sweep", data, "repetitions", 1), lo=1),
            iterations=_as_int("sweep", "iterations", _get("sweep", data, "iterations", 10000), lo=1),
        )
    elif kind == "random":
        _check_keys(
            "sweep", data, common + ("eta_min", "eta_max", "n_samples", "mu", "epochs", "batch_size")
        )
        mu = _as_float("sweep", "mu", _get("sweep", data, "mu", 0.0), lo=0.0)
        if mu >= 1.0:
            raise ConfigError("[sweep] mu must be < 1")
        batch_size = data.get("batch_size")
        if batch_size is not None:
            batch_size = _as_int("sweep", "batch_size", batch_size, lo=1)
        out.update(
            eta_min=_as_float("sweep", "eta_min", _get("sweep", data, "eta_min"), strict_lo=0.0),
            eta_max=_as_float("sweep", "eta_max", _get("sweep", data, "eta_max"), strict_lo=0.0),
            n_samples=_as_int("sweep", "n_samples", _get("sweep", data, "n_samples", 20), lo=1),
            mu=mu,
            epochs=_as_int("sweep", "epochs", _get("sweep", data, "epochs", 1), lo=1),
            batch_size=batch_size,
            iterations=data.get("iterations")
            and _as_int("sweep", "iterations", data["iterations"], lo=1),
        )
        if out["eta_max"] <= out["eta_min"]:
            raise ConfigError("[sweep] eta_max must exceed eta_min")
    else:  # transition
        _check_keys(
            "sweep", data, common + ("candidates", "epochs_total", "seeds", "n_bins")
        )
        out.update(
            candidates=_as_int_list("sweep", "candidates", _get("sweep", data, "candidates")),
            epochs_total=_as_int("sweep", "epochs_total", _get("sweep", data, "epochs_total"), lo=1),
            seeds=_as_int_list("sweep", "seeds", _get("sweep", data, "seeds", [default_seed])),
            n_bins=_as_int("sweep", "n_bins", _get("sweep", data, "n_bins", 10), lo=1),
            iterations=data.get("iterations")
            and _as_int("sweep", "iterations", data["iterations"], lo=1),
        )
        bad = [c for c in out["candidates"] if not 0 <= c < out["epochs_total"]]
        if bad:
            raise ConfigError(f"[sweep] candidates outside [0, epochs_total): {bad}")
    out["weight_decay"] = _as_float(
        "sweep", "weight_decay", _get("sweep", data, "weight_decay", 0.0), lo=0.0
    )
    out["max_runs"] = _as_int("sweep", "max_runs", _get("sweep", data, "max_runs", 2500), lo=1)
    out["allow_large"] = _as_bool(
        "sweep", "allow_large", _get("sweep", data, "allow_large", False)
    )
    return out


_TOP_LEVEL = (
    "experiment",
    "problem",
    "dataset",
    "run",
    "phase",
    "schedule",
    "demo",
    "equivalence",
    "sweep",
)


def validate_config(
    raw: dict, command: str | None = None, name_default: str = "experiment"
) -> ExperimentConfig:
    """Validate a raw config dict into an ExperimentConfig or raise ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table of sections")
    _check_keys("config", raw, _TOP_LEVEL)
    for section in _TOP_LEVEL:
        if section in raw and section != "phase" and not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")

    exp = _validate_experiment(raw.get("experiment", {}), command, name_default)
    seed = exp["seed"]

    problem = _validate_problem(raw["problem"], seed) if "problem" in raw else None
    dataset = _validate_dataset(raw["dataset"], seed) if "dataset" in raw else None
    run = _validate_run(raw.get("run", {}))

    phase_data = raw.get("phase", [])
    if isinstance(phase_data, dict):
        phase_data = [phase_data]
    if not isinstance(phase_data, list):
        raise ConfigError("phase must be a list of tables")
    phases = [_validate_phase(i, dict(p)) for i, p in enumerate(phase_data)]

    cmd_early = exp["command"]
    if cmd_early == "train" or "schedule" in raw:
        schedule = _validate_schedule(raw.get("schedule", {}), len(phases), run["epochs"])
    else:
        # Transition sweeps carry phases without a fixed transition; the
        # sweep's candidate list supplies it per run.
        schedule = {"transition_epochs": [], "reset_momentum": True}
    demo = _validate_demo(raw.get("demo", {}))
    equivalence = _validate_equivalence(raw.get("equivalence", {})) if "equivalence" in raw else {}
    sweep = _validate_sweep(raw["sweep"], seed) if "sweep" in raw else {}

    cmd = exp["command"]
    if cmd == "quadratic-demo":
        if problem is None or problem["kind"] != "quadratic":
            raise ConfigError("quadratic-demo needs a [problem] section with kind = 'quadratic'")
    if cmd == "train":
        if problem is None:
            raise ConfigError("train needs a [problem] section")
        if not phases:
            raise ConfigError("train needs at least one [[phase]] section")
        if problem["kind"] == "mlp" and dataset is None:
            raise ConfigError("an mlp problem needs a [dataset] section")
        if any(p["batch_size"] is not None for p in phases) and dataset is None:
            raise ConfigError("minibatch phases need a [dataset] section")
    if cmd == "equivalence":
        if problem is None:
            raise ConfigError("equivalence needs a [problem] section")
        if not equivalence:
            raise ConfigError("equivalence needs an [equivalence] section")
    if cmd == "sweep":
        if problem is None:
            raise ConfigError("sweep needs a [problem] section")
        if not sweep:
            raise ConfigError("sweep needs a [sweep] section")
        if sweep.get("kind") == "transition":
            if len(phases) != 2:
                raise ConfigError("a transition sweep needs exactly two [[phase]] sections")
            if sweep["candidates"] and max(sweep["candidates"]) >= sweep["epochs_total"]:
                raise ConfigError("[sweep] candidates must lie below epochs_total")
        if sweep.get("kind") in ("random", "transition") and problem["kind"] == "mlp" and dataset is None:
            raise ConfigError("an mlp sweep needs a [dataset] section")

    return ExperimentConfig(
        command=cmd,
        name=exp["name"],
        seed=seed,
        output_dir=exp["output_dir"],
        jobs=exp["jobs"],
        problem=problem,
        dataset=dataset,
        run=run,
        phases=phases,
        schedule=schedule,
        demo=demo,
        equivalence=equivalence,
        sweep=sweep,
        raw=raw,
    )


def load_config_file(path) -> dict:
    """Raw config dict from a TOML or JSON file, by extension."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    with open(path, "rb") as fh:
        return tomllib.load(fh)


# -- builders ---------------------------------------------------------------


def build_problem(cfg: ExperimentConfig):
    p = cfg.problem
    if p is None:
        raise ConfigError("no [problem] section")
    if p["kind"] == "quadratic":
        return make_quadratic(p["dimension"], p["condition_number"], p["seed"])
    return MlpModel(tuple(p["layer_sizes"]), p["activation"])


def build_dataset(cfg: ExperimentConfig) -> tuple[Dataset | None, Dataset | None]:
    d = cfg.dataset
    if d is None:
        return None, None
    ds = make_dataset(d["kind"], d["n_samples"], d["noise"], d["seed"])
    if d["holdout_fraction"] > 0:
        return ds.split(d["holdout_fraction"], seed=d["seed"])
    return ds, None


def build_schedule(cfg: ExperimentConfig) -> ScheduleSpec:
    phases = tuple(
        PhaseSpec(
            HyperParams(p["learning_rate"], p["momentum"], p["weight_decay"]),
            batch_size=p["batch_size"],
        )
        for p in cfg.phases
    )
    return ScheduleSpec(
        phases=phases,
        transition_epochs=tuple(cfg.schedule["transition_epochs"]),
        reset_momentum_on_transition=cfg.schedule["reset_momentum"],
    )
