"""Command-line front end: every experiment is a subcommand driven by a
declarative config (TOML or JSON) or a shipped preset.

Exit codes: 0 on success, 2 on config errors (nothing is written), 3 on
missing input files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    build_dataset,
    build_problem,
    build_schedule,
    load_config_file,
    validate_config,
)
from .diagnostics import ReferencePoint, TrainTrace, annotate_alignment
from .equivalence import default_candidate_grid, equivalence_sweep
from .optim import HyperParams, PhaseSpec, ScheduleSpec, train
from .presets import load_preset, preset_names
from .problems import accuracy
from .report import PlotSpec, render_heatmap, render_line_chart, render_loss_curves, summarize
from .sweep import SweepGrid, SweepResult, random_search, run_grid, transition_sweep, tune_learning_rate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

OUTPUT_ROOT_ENV = "STEPLAB_OUT"


def _output_root(cli_out: str | None, cfg_out: str | None) -> Path:
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(OUTPUT_ROOT_ENV)
    if env:
        return Path(env)
    if cfg_out:
        return Path(cfg_out)
    return Path("runs")


def _resolve_config(args, command: str) -> ExperimentConfig:
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise ConfigError("give either --preset or --config, not both")
    if getattr(args, "preset", None):
        try:
            raw = load_preset(args.preset)
        except KeyError as err:
            raise ConfigError(str(err.args[0])) from err
        name = args.preset
    elif getattr(args, "config", None):
        raw = load_config_file(args.config)
        name = Path(args.config).stem
    else:
        raise ConfigError("give --preset NAME or --config FILE")

    raw.setdefault("experiment", {})
    if args.seed is not None:
        raw["experiment"]["seed"] = args.seed
    if args.jobs is not None:
        raw["experiment"]["jobs"] = args.jobs
    if getattr(args, "epochs", None) is not None:
        raw.setdefault("run", {})["epochs"] = args.epochs
    if getattr(args, "iterations", None) is not None:
        target = {
            "quadratic-demo": "demo",
            "sweep": "sweep",
            "equivalence": "equivalence",
            "train": "run",
        }[command]
        raw.setdefault(target, {})["iterations"] = args.iterations
    return validate_config(raw, command, name)


def _prepare_dir(cfg: ExperimentConfig, args) -> Path:
    out = _output_root(args.out, cfg.output_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.snapshot_json(), encoding="utf-8")
    return out


# ---------------------------------------------------------------------------
# quadratic-demo
# ---------------------------------------------------------------------------


def cmd_quadratic_demo(args) -> int:
    cfg = _resolve_config(args, "quadratic-demo")
    demo = cfg.demo
    n_tune = demo["eta_count"] * len(demo["momenta"])
    plan = (
        f"quadratic-demo '{cfg.name}': {len(demo['momenta'])} momenta, "
        f"{demo['eta_count']} tuning rates each, {demo['iterations']} iterations "
        f"per run (~{(n_tune + len(demo['momenta'])) * demo['iterations']} steps)"
    )
    if args.dry_run:
        print(plan)
        return EXIT_OK
    print(plan)

    problem = build_problem(cfg)
    out = _prepare_dir(cfg, args)
    etas = np.logspace(np.log10(demo["eta_min"]), np.log10(demo["eta_max"]), demo["eta_count"])

    traces: list[TrainTrace] = []
    labels: list[str] = []
    summary_lines = ["mu,tuned_eta,final_loss,r_last_decile_mean,s_run_mean"]
    for mu in demo["momenta"]:
        tuned_eta, _ = tune_learning_rate(
            problem,
            mu,
            etas,
            demo["iterations"],
            cfg.seed,
            weight_decay=demo["weight_decay"],
            jobs=cfg.jobs,
        )
        spec = ScheduleSpec.single_phase(
            HyperParams(tuned_eta, momentum=mu, weight_decay=demo["weight_decay"])
        )
        _, trace = train(
            problem, spec, epochs=1, iters_per_epoch=demo["iterations"], seed=cfg.seed
        )
        label = f"mu={mu:g} eta={tuned_eta:.3g}"
        traces.append(trace)
        labels.append(label)
        trace.to_csv(out / f"trace_mu{mu:g}.csv")
        trace.to_json(out / f"trace_mu{mu:g}.json")
        summary_lines.append(
            f"{mu!r},{tuned_eta!r},{trace.final_loss!r},"
            f"{trace.scale_tail_mean()!r},{trace.alignment_run_mean()!r}"
        )
        print(f"  {label}: final loss {trace.final_loss:.3e}")

    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    base = dict(series_labels=tuple(labels), x_label="iteration")
    (out / "loss.svg").write_text(
        render_loss_curves(
            traces, PlotSpec(title="training loss", y_label="loss", y_scale="log", **base)
        ),
        encoding="utf-8",
    )
    align_series = [
        (label, [r.step for r in t.rows if r.alignment is not None],
         [r.alignment for r in t.rows if r.alignment is not None])
        for label, t in zip(labels, traces)
    ]
    (out / "alignment.svg").write_text(
        render_line_chart(
            align_series,
            PlotSpec(title="alignment toward optimum", x_label="iteration", y_label="alignment"),
        ),
        encoding="utf-8",
    )
    scale_series = [
        (label, [r.step for r in t.rows if r.scale is not None],
         [r.scale for r in t.rows if r.scale is not None])
        for label, t in zip(labels, traces)
    ]
    (out / "scale.svg").write_text(
        render_line_chart(
            scale_series,
            PlotSpec(title="momentum/gradient scale", x_label="iteration", y_label="scale"),
        ),
        encoding="utf-8",
    )
    print(f"wrote artifacts to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _resolve_config(args, "train")
    run = cfg.run
    plan = (
        f"train '{cfg.name}': {len(cfg.phases)} phase(s), {run['epochs']} epochs, "
        f"iterations/epoch={run['iterations'] or 'auto'}"
    )
    if args.dry_run:
        print(plan)
        return EXIT_OK
    print(plan)

    problem = build_problem(cfg)
    dataset, holdout = build_dataset(cfg)
    spec = build_schedule(cfg)
    out = _prepare_dir(cfg, args)

    state, trace = train(
        problem,
        spec,
        run["epochs"],
        dataset=dataset,
        iters_per_epoch=run["iterations"],
        seed=cfg.seed,
        log=run["log"],
        store_snapshots=run["store_snapshots"],
    )
    if problem.optimum_hint is None and run["store_snapshots"] and not trace.diverged:
        trace = annotate_alignment(trace, ReferencePoint(state.w, "final_iterate"))

    trace.to_csv(out / "trace.csv")
    trace.to_json(out / "trace.json")
    summarize(trace).to_csv(out / "summary.csv")
    if trace.rows:
        (out / "loss.svg").write_text(
            render_loss_curves(
                [trace],
                PlotSpec(
                    title=cfg.name,
                    x_field="epoch" if dataset is not None else "step",
                    x_label="epoch" if dataset is not None else "iteration",
                    y_label="loss",
                    y_scale="log" if min(trace.losses()) > 0 else "linear",
                ),
            ),
            encoding="utf-8",
        )
    if trace.diverged:
        print(f"  run diverged at step {trace.diverged_at_step}")
    else:
        print(f"  final loss {trace.final_loss:.4e}")
        if holdout is not None and hasattr(problem, "predict"):
            print(f"  holdout accuracy {accuracy(problem, state.w, holdout):.3f}")
    print(f"wrote artifacts to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# equivalence
# ---------------------------------------------------------------------------


def cmd_equivalence(args) -> int:
    cfg = _resolve_config(args, "equivalence")
    eq = cfg.equivalence
    n_cand = sum(
        len(default_candidate_grid(eq["baseline_etas"], mu, eq["points_per_decade"], eq["pad_decades"]))
        for mu in eq["mus"]
    )
    plan = (
        f"equivalence '{cfg.name}': {len(eq['baseline_etas'])} baselines, "
        f"mus={eq['mus']}, ~{len(eq['baseline_etas']) * (1 + n_cand)} runs of "
        f"{eq['iterations'] or eq['epochs']} steps"
    )
    if args.dry_run:
        print(plan)
        return EXIT_OK
    print(plan)

    problem = build_problem(cfg)
    dataset, _ = build_dataset(cfg)
    out = _prepare_dir(cfg, args)
    grids = {
        mu: default_candidate_grid(
            eq["baseline_etas"], mu, eq["points_per_decade"], eq["pad_decades"]
        )
        for mu in eq["mus"]
    }
    result = equivalence_sweep(
        problem,
        eq["baseline_etas"],
        eq["mus"],
        candidate_grids=grids,
        epochs=eq["epochs"],
        iters_per_epoch=eq["iterations"],
        dataset=dataset,
        batch_size=eq["batch_size"],
        seed=cfg.seed,
        space=eq["space"],
        weight_decay=eq["weight_decay"],
    )
    (out / "match_table.csv").write_text(result.match_table_csv(), encoding="utf-8")
    (out / "fit_summary.json").write_text(
        json.dumps(result.fit_summary(), indent=2) + "\n", encoding="utf-8"
    )
    fit_series = []
    for mu in eq["mus"]:
        pts = sorted(
            (m.baseline.hyper.learning_rate, m.matched_eta)
            for m in result.matches
            if m.candidate_mu == mu
        )
        if pts:
            fit_series.append((f"mu={mu:g}", [p[0] for p in pts], [p[1] for p in pts]))
    if fit_series:
        (out / "matched_rates.svg").write_text(
            render_line_chart(
                fit_series,
                PlotSpec(
                    title="matched learning rates",
                    x_label="baseline learning rate",
                    y_label="matched learning rate",
                    x_scale="log",
                    y_scale="log",
                ),
            ),
            encoding="utf-8",
        )
    for mu, fit in sorted(result.fits.items()):
        if fit is None:
            print(f"  mu={mu:g}: fit unavailable")
        else:
            print(
                f"  mu={mu:g}: slope={fit.slope:.5f} intercept={fit.intercept:.3e} "
                f"R2={fit.r_squared:.4f} over {fit.n_points} baselines"
            )
    if result.unmatched:
        print(f"  unmatched (all candidates diverged): {result.unmatched}")
    print(f"wrote artifacts to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args, "sweep")
    sw = cfg.sweep
    if sw["kind"] == "grid":
        n_runs = sw["eta_count"] * sw["one_minus_mu_count"] * sw["repetitions"]
        plan = (
            f"sweep '{cfg.name}' (grid): {sw['eta_count']} x {sw['one_minus_mu_count']} "
            f"x {sw['repetitions']} = {n_runs} runs of {sw['iterations']} iterations "
            f"(~{n_runs * sw['iterations']} steps)"
        )
    elif sw["kind"] == "random":
        plan = f"sweep '{cfg.name}' (random): {sw['n_samples']} runs of {sw['epochs']} epochs"
    else:
        n_runs = len(sw["candidates"]) * len(sw["seeds"])
        plan = (
            f"sweep '{cfg.name}' (transition): {len(sw['candidates'])} candidates x "
            f"{len(sw['seeds'])} seeds = {n_runs} runs of {sw['epochs_total']} epochs"
        )
    if args.dry_run:
        print(plan)
        return EXIT_OK
    print(plan)

    problem = build_problem(cfg)
    dataset, holdout = build_dataset(cfg)
    out = _prepare_dir(cfg, args)

    if sw["kind"] == "grid":
        grid = SweepGrid.log_spaced(
            (sw["eta_min"], sw["eta_max"]),
            sw["eta_count"],
            (sw["one_minus_mu_min"], sw["one_minus_mu_max"]),
            sw["one_minus_mu_count"],
            sw["repetitions"],
        )
        result = run_grid(
            problem,
            grid,
            sw["iterations"],
            cfg.seed,
            weight_decay=sw["weight_decay"],
            jobs=cfg.jobs,
            max_runs=sw["max_runs"],
            allow_large=sw["allow_large"],
        )
        (out / "heatmap.svg").write_text(
            render_heatmap(result, spec=PlotSpec(kind="heatmap", title=cfg.name)),
            encoding="utf-8",
        )
    elif sw["kind"] == "random":
        result = random_search(
            problem,
            (sw["eta_min"], sw["eta_max"]),
            sw["mu"],
            sw["n_samples"],
            dataset=dataset,
            epochs=sw["epochs"],
            iters_per_epoch=sw["iterations"],
            batch_size=sw["batch_size"],
            seed=cfg.seed,
            weight_decay=sw["weight_decay"],
            jobs=cfg.jobs,
        )
        pts = sorted((c.eta, c.final_loss) for c in result.completed())
        if pts:
            (out / "loss_vs_eta.svg").write_text(
                render_line_chart(
                    [(f"mu={sw['mu']:g}", [p[0] for p in pts], [p[1] for p in pts])],
                    PlotSpec(
                        title="final loss by learning rate",
                        x_label="learning rate",
                        y_label="final loss",
                        x_scale="log",
                        y_scale="log",
                    ),
                ),
                encoding="utf-8",
            )
    else:
        result = transition_sweep(
            problem,
            dataset,
            build_schedule_template(cfg),
            sw["candidates"],
            sw["epochs_total"],
            sw["seeds"],
            iters_per_epoch=sw["iterations"],
            n_bins=sw["n_bins"],
            holdout=holdout,
            jobs=cfg.jobs,
            max_runs=sw["max_runs"],
            allow_large=sw["allow_large"],
        )
        by_cand: dict[int, list[float]] = {}
        for c in result.completed():
            by_cand.setdefault(c.transition, []).append(c.final_loss)
        pts = sorted((t, float(np.median(v))) for t, v in by_cand.items())
        if pts:
            (out / "transition_curve.svg").write_text(
                render_line_chart(
                    [("median final loss", [p[0] for p in pts], [p[1] for p in pts])],
                    PlotSpec(
                        title="final loss by transition epoch",
                        x_label="transition epoch",
                        y_label="median final loss",
                        y_scale="log",
                    ),
                ),
                encoding="utf-8",
            )

    result.to_csv(out / "sweep.csv")
    result.to_json(out / "sweep_summary.json")
    summarize(result).to_csv(out / "summary.csv")
    best = result.best_cell()
    if best is not None:
        where = f" transition={best.transition}" if best.transition is not None else ""
        print(
            f"  best cell: eta={best.eta:.4g} mu={best.mu:g}{where} "
            f"final loss {best.final_loss:.4e}"
        )
    print(
        f"  {len(result.cells)} runs, {sum(1 for c in result.cells if c.diverged)} diverged"
    )
    print(f"wrote artifacts to {out}")
    return EXIT_OK


def build_schedule_template(cfg: ExperimentConfig):
    """Two-phase template for transition sweeps; the placeholder transition is
    replaced per candidate."""
    phases = tuple(
        PhaseSpec(
            HyperParams(p["learning_rate"], p["momentum"], p["weight_decay"]),
            batch_size=p["batch_size"],
        )
        for p in cfg.phases
    )
    return ScheduleSpec(phases=phases, transition_epochs=(0,) * (len(phases) - 1))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_ROOT_ENV, "report"))
    plans = []
    for raw_path in args.inputs:
        path = Path(raw_path)
        if not path.exists():
            print(f"io error: no such file: {path}", file=sys.stderr)
            return EXIT_IO
        plans.append(path)
    if args.dry_run:
        for path in plans:
            print(f"report: would summarize {path}")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    for path in plans:
        header = path.read_text(encoding="utf-8").split("\n", 1)[0]
        stem = path.stem
        if header.startswith("step,"):
            trace = TrainTrace.from_csv(path)
            summarize(trace).to_csv(out / f"{stem}_summary.csv")
            (out / f"{stem}_loss.svg").write_text(
                render_loss_curves(
                    [trace],
                    PlotSpec(
                        title=stem,
                        y_label="loss",
                        y_scale="log" if min(trace.losses()) > 0 else "linear",
                    ),
                ),
                encoding="utf-8",
            )
            print(f"  {path} -> {stem}_summary.csv, {stem}_loss.svg")
        elif header.startswith("eta,"):
            result = SweepResult.from_csv(path)
            summarize(result).to_csv(out / f"{stem}_summary.csv")
            wrote = [f"{stem}_summary.csv"]
            if result.kind == "grid":
                try:
                    (out / f"{stem}_heatmap.svg").write_text(
                        render_heatmap(result, spec=PlotSpec(kind="heatmap", title=stem)),
                        encoding="utf-8",
                    )
                    wrote.append(f"{stem}_heatmap.svg")
                except ValueError:
                    pass  # incomplete grids summarize without a heatmap
            print(f"  {path} -> {', '.join(wrote)}")
        else:
            print(f"io error: unrecognized CSV header in {path}", file=sys.stderr)
            return EXIT_IO
    print(f"wrote report to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steplab",
        description=(
            "Desk-scale experiments on heavy-ball momentum, step-size regimes, "
            "and two-phase schedules. Presets: " + ", ".join(preset_names())
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, with_run_overrides=True):
        sp.add_argument("--config", help="TOML or JSON config file")
        sp.add_argument("--preset", help="named built-in config")
        sp.add_argument("--seed", type=int, help="override the experiment seed")
        sp.add_argument("--out", help="output root directory")
        sp.add_argument("--jobs", type=int, help="worker processes for sweeps")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
        if with_run_overrides:
            sp.add_argument("--iterations", type=int, help="override iteration count")
            sp.add_argument("--epochs", type=int, help="override epoch count")

    sp = sub.add_parser("quadratic-demo", help="convex baseline with tuned rates per momentum")
    add_common(sp)
    sp.set_defaults(func=cmd_quadratic_demo)

    sp = sub.add_parser("train", help="run one (possibly multi-phase) schedule")
    add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("equivalence", help="match loss curves across momentum values")
    add_common(sp)
    sp.set_defaults(func=cmd_equivalence)

    sp = sub.add_parser("sweep", help="grid, random, or transition-epoch sweep")
    add_common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="summaries and plots from existing CSV artifacts")
    sp.add_argument("inputs", nargs="+", help="trace or sweep CSV files")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--dry-run", action="store_true")
    sp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"io error: no such file: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
