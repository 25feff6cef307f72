"""Shipped experiment presets.

Each preset is a complete config dict in the same shape a TOML config file
parses to; run them as ``steplab <command> --preset <name>``.
"""

from __future__ import annotations

import copy

PRESETS: dict[str, dict] = {
    # Convex baseline: ill-conditioned quadratic, per-momentum tuned learning
    # rate, loss/alignment/scale panels over 10000 iterations.
    "fig2": {
        "experiment": {"command": "quadratic-demo", "name": "fig2", "seed": 3},
        "problem": {"kind": "quadratic", "dimension": 100, "condition_number": 1e5, "seed": 7},
        "demo": {
            "momenta": [0.0, 0.5, 0.9, 0.95],
            "eta_min": 1e-7,
            "eta_max": 5e5,
            "eta_count": 50,
            "iterations": 10000,
        },
    },
    # Large-step regime on the toy net: biggest learning rate short of
    # divergence; noisy loss, weak momentum alignment.
    "fig1-large": {
        "experiment": {"command": "train", "name": "fig1-large", "seed": 7},
        "problem": {"kind": "mlp", "layer_sizes": [2, 32, 32, 2], "activation": "tanh"},
        "dataset": {"kind": "two_moons", "n_samples": 200, "noise": 0.1, "seed": 2},
        "run": {"epochs": 50},
        "phase": [
            {"learning_rate": 0.5, "momentum": 0.9, "weight_decay": 1e-4, "batch_size": 32}
        ],
    },
    # Small-step regime on the same problem: loss decreases almost every
    # epoch and the momentum buffer aligns with the converged point.
    "fig1-small": {
        "experiment": {"command": "train", "name": "fig1-small", "seed": 7},
        "problem": {"kind": "mlp", "layer_sizes": [2, 32, 32, 2], "activation": "tanh"},
        "dataset": {"kind": "two_moons", "n_samples": 200, "noise": 0.1, "seed": 2},
        "run": {"epochs": 50},
        "phase": [
            {"learning_rate": 0.01, "momentum": 0.9, "weight_decay": 1e-4, "batch_size": 32}
        ],
    },
    # Random learning-rate search at fixed momentum on the toy net.
    "fig4": {
        "experiment": {"command": "sweep", "name": "fig4", "seed": 7},
        "problem": {"kind": "mlp", "layer_sizes": [2, 32, 32, 2], "activation": "tanh"},
        "dataset": {"kind": "two_moons", "n_samples": 200, "noise": 0.1, "seed": 2},
        "phase": [],
        "sweep": {
            "kind": "random",
            "eta_min": 1e-3,
            "eta_max": 10.0,
            "n_samples": 20,
            "mu": 0.0,
            "epochs": 30,
            "batch_size": 32,
            "weight_decay": 1e-4,
        },
    },
    # Learning-rate/momentum equivalence on a small quadratic, matched in
    # log space where the asymptotic rate dominates the distance.
    "fig9": {
        "experiment": {"command": "equivalence", "name": "fig9", "seed": 5},
        "problem": {"kind": "quadratic", "dimension": 20, "condition_number": 100.0, "seed": 11},
        "equivalence": {
            "baseline_eta_min": 1e-4,
            "baseline_eta_max": 5.6e-4,
            "baseline_count": 5,
            "mus": [0.9, 0.99],
            "iterations": 3000,
            "points_per_decade": 9,
            "pad_decades": 1.0,
            "space": "log",
        },
    },
    # Reduced learning-rate x momentum grid on the big quadratic, rendered
    # as a heatmap of final loss.
    "fig11-small": {
        "experiment": {"command": "sweep", "name": "fig11-small", "seed": 3},
        "problem": {"kind": "quadratic", "dimension": 100, "condition_number": 1e5, "seed": 7},
        "sweep": {
            "kind": "grid",
            "eta_min": 1e-7,
            "eta_max": 5e5,
            "eta_count": 10,
            "one_minus_mu_min": 1e-3,
            "one_minus_mu_max": 1.0,
            "one_minus_mu_count": 10,
            "iterations": 10000,
        },
    },
    # Two-phase schedule on the toy net: momentum-free large steps, then
    # small steps with aggressive momentum from a reset buffer.
    "two-phase-toy": {
        "experiment": {"command": "train", "name": "two-phase-toy", "seed": 7},
        "problem": {"kind": "mlp", "layer_sizes": [2, 32, 32, 2], "activation": "tanh"},
        "dataset": {"kind": "two_moons", "n_samples": 200, "noise": 0.1, "seed": 2},
        "run": {"epochs": 50},
        "phase": [
            {"learning_rate": 1.0, "momentum": 0.0, "weight_decay": 1e-4, "batch_size": 32},
            {"learning_rate": 0.002, "momentum": 0.95, "weight_decay": 1e-4, "batch_size": 32},
        ],
        "schedule": {"transition_epoch": 25},
    },
    # Transition-epoch sweep for the two-phase schedule above.
    "transition-toy": {
        "experiment": {"command": "sweep", "name": "transition-toy", "seed": 7},
        "problem": {"kind": "mlp", "layer_sizes": [2, 32, 32, 2], "activation": "tanh"},
        "dataset": {"kind": "two_moons", "n_samples": 200, "noise": 0.1, "seed": 2},
        "phase": [
            {"learning_rate": 1.0, "momentum": 0.0, "weight_decay": 1e-4, "batch_size": 32},
            {"learning_rate": 0.002, "momentum": 0.95, "weight_decay": 1e-4, "batch_size": 32},
        ],
        "sweep": {
            "kind": "transition",
            "candidates": [5, 10, 15, 20, 25, 30, 35, 40],
            "epochs_total": 50,
            "seeds": [7, 8],
            "n_bins": 8,
        },
    },
    # Reference hyperparameters of the full-scale two-phase recipe, kept
    # verbatim for documentation and run here on the toy stand-in.
    "cifar-two-phase": {
        "experiment": {"command": "train", "name": "cifar-two-phase", "seed": 7},
        "problem": {"kind": "mlp", "layer_sizes": [2, 32, 32, 2], "activation": "tanh"},
        "dataset": {"kind": "two_moons", "n_samples": 200, "noise": 0.1, "seed": 2},
        "run": {"epochs": 50},
        "phase": [
            {
                "learning_rate": 0.9236708571873865,
                "momentum": 0.0,
                "weight_decay": 1e-4,
                "batch_size": 256,
            },
            {
                "learning_rate": 0.005,
                "momentum": 0.95,
                "weight_decay": 1e-4,
                "batch_size": 256,
            },
        ],
        "schedule": {"transition_epoch": 25},
    },
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return copy.deepcopy(PRESETS[name])
