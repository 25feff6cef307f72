"""Publication-style artifacts from traces and sweep results: SVG line charts
and heatmaps plus tabular summaries.

Rendering is a pure function of its inputs.  All numbers are written with
fixed formats, so identical inputs give byte-identical documents, which keeps
golden-file tests stable without any plotting dependency.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .diagnostics import TrainTrace
from .sweep import SweepResult

PLOT_KINDS = ("line", "multi_line", "heatmap")
AXIS_SCALES = ("linear", "log")
HEATMAP_VALUES = ("log_final_loss",)

LINE_COLORS = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)

# Dark-to-light ramp with monotone lightness, so larger values read brighter.
RAMP_STOPS = (
    (68, 1, 84),
    (70, 50, 127),
    (54, 92, 141),
    (39, 127, 142),
    (31, 161, 135),
    (74, 194, 109),
    (159, 218, 58),
    (253, 231, 37),
)

DIVERGED_FILL = "#c8c8c8"


@dataclass
class PlotSpec:
    """What to draw and how the axes behave."""

    kind: str = "line"
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    x_scale: str = "linear"
    y_scale: str = "linear"
    x_field: str = "step"
    series_labels: tuple[str, ...] | None = None
    width: int = 720
    height: int = 440
    output_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"kind must be one of {PLOT_KINDS}, got {self.kind!r}")
        if self.x_scale not in AXIS_SCALES or self.y_scale not in AXIS_SCALES:
            raise ValueError(f"axis scales must be one of {AXIS_SCALES}")
        if self.x_field not in ("step", "epoch"):
            raise ValueError(f"x_field must be 'step' or 'epoch', got {self.x_field!r}")


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _fmt_tick(value: float) -> str:
    return f"{value:.4g}"


class _Axis:
    """Maps data values to pixel coordinates, linearly or in log10 space."""

    def __init__(self, lo: float, hi: float, px_lo: float, px_hi: float, scale: str):
        self.scale = scale
        if scale == "log":
            lo, hi = np.log10(lo), np.log10(hi)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = float(lo), float(hi)
        self.px_lo, self.px_hi = px_lo, px_hi

    def to_px(self, value: float) -> float:
        v = np.log10(value) if self.scale == "log" else value
        t = (v - self.lo) / (self.hi - self.lo)
        return self.px_lo + t * (self.px_hi - self.px_lo)

    def ticks(self, n: int = 5) -> list[tuple[float, str]]:
        if self.scale == "log":
            decades = range(int(np.ceil(self.lo)), int(np.floor(self.hi)) + 1)
            out = [(10.0**d, f"1e{d}") for d in decades]
            if not out:
                out = [(10.0**self.lo, _fmt_tick(10.0**self.lo)),
                       (10.0**self.hi, _fmt_tick(10.0**self.hi))]
            if len(out) > 12:
                keep = max(1, len(out) // 8)
                out = out[::keep]
            return out
        values = np.linspace(self.lo, self.hi, n)
        return [(float(v), _fmt_tick(v)) for v in values]


def _check_positive(label: str, xs, ys, spec: PlotSpec) -> None:
    if spec.y_scale == "log":
        for x, y in zip(xs, ys):
            if y <= 0:
                raise ValueError(
                    f"log-scale y axis rejects non-positive value {y!r} "
                    f"in series {label!r} at {spec.x_field}={x}"
                )
    if spec.x_scale == "log":
        for x in xs:
            if x <= 0:
                raise ValueError(
                    f"log-scale x axis rejects non-positive value {x!r} in series {label!r}"
                )


def render_line_chart(series, spec: PlotSpec) -> str:
    """SVG document with one polyline per (label, xs, ys) series."""
    if not series:
        raise ValueError("need at least one series")
    for label, xs, ys in series:
        if len(xs) != len(ys) or len(xs) == 0:
            raise ValueError(f"series {label!r} needs equal-length non-empty x and y")
        _check_positive(label, xs, ys, spec)

    margin_l, margin_r, margin_t, margin_b = 70, 170, 46, 52
    w, h = spec.width, spec.height
    all_x = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in series])
    x_axis = _Axis(all_x.min(), all_x.max(), margin_l, w - margin_r, spec.x_scale)
    y_axis = _Axis(all_y.min(), all_y.max(), h - margin_b, margin_t, spec.y_scale)

    meta = {
        "kind": "line",
        "series": [label for label, _, _ in series],
        "x_scale": spec.x_scale,
        "y_scale": spec.y_scale,
        "x_range": [float(all_x.min()), float(all_x.max())],
        "y_range": [float(all_y.min()), float(all_y.max())],
    }
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f"<metadata>{json.dumps(meta, sort_keys=True)}</metadata>",
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{w / 2:.1f}" y="26" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{_escape(spec.title)}</text>',
    ]
    # Gridlines and ticks.
    for value, label in y_axis.ticks():
        y = y_axis.to_px(value)
        parts.append(
            f'<line x1="{margin_l}" y1="{y:.2f}" x2="{w - margin_r}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin_l - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{_escape(label)}</text>'
        )
    for value, label in x_axis.ticks():
        x = x_axis.to_px(value)
        parts.append(
            f'<line x1="{x:.2f}" y1="{h - margin_b}" x2="{x:.2f}" '
            f'y2="{h - margin_b + 5}" stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{h - margin_b + 20}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{_escape(label)}</text>'
        )
    # Axes box.
    parts.append(
        f'<line x1="{margin_l}" y1="{h - margin_b}" x2="{w - margin_r}" '
        f'y2="{h - margin_b}" stroke="#000000" stroke-width="1.5"/>'
    )
    parts.append(
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
        f'y2="{h - margin_b}" stroke="#000000" stroke-width="1.5"/>'
    )
    # Series and legend.
    legend_x = w - margin_r + 16
    for i, (label, xs, ys) in enumerate(series):
        color = LINE_COLORS[i % len(LINE_COLORS)]
        points = " ".join(
            f"{x_axis.to_px(float(x)):.2f},{y_axis.to_px(float(y)):.2f}"
            for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{points}"/>'
        )
        ly = margin_t + 14 + i * 18
        parts.append(
            f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 20}" y2="{ly}" '
            f'stroke="{color}" stroke-width="3"/>'
        )
        parts.append(
            f'<text x="{legend_x + 26}" y="{ly + 4}" font-size="11" '
            f'font-family="sans-serif">{_escape(label)}</text>'
        )
    # Axis labels.
    parts.append(
        f'<text x="{(margin_l + w - margin_r) / 2:.1f}" y="{h - 14}" '
        f'text-anchor="middle" font-size="13" font-family="sans-serif">'
        f"{_escape(spec.x_label)}</text>"
    )
    mid_y = (margin_t + h - margin_b) / 2
    parts.append(
        f'<text x="20" y="{mid_y:.1f}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 20 {mid_y:.1f})">'
        f"{_escape(spec.y_label)}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_loss_curves(traces, spec: PlotSpec) -> str:
    """One polyline per trace; legend defaults to config fingerprints."""
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    labels = spec.series_labels
    if labels is None:
        labels = tuple(
            t.config_fingerprint or f"trace-{i}" for i, t in enumerate(traces)
        )
    if len(labels) != len(traces):
        raise ValueError("series_labels must match the number of traces")
    series = []
    for label, trace in zip(labels, traces):
        xs = [getattr(r, spec.x_field) for r in trace.rows]
        ys = [r.loss for r in trace.rows]
        series.append((label, xs, ys))
    return render_line_chart(series, spec)


def ramp_color(t: float) -> str:
    """Hex color at position t in [0, 1] along the value ramp."""
    t = min(1.0, max(0.0, float(t)))
    pos = t * (len(RAMP_STOPS) - 1)
    i = min(int(pos), len(RAMP_STOPS) - 2)
    frac = pos - i
    rgb = [
        round(a + (b - a) * frac)
        for a, b in zip(RAMP_STOPS[i], RAMP_STOPS[i + 1])
    ]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_heatmap(result: SweepResult, value: str = "log_final_loss", spec: PlotSpec | None = None) -> str:
    """Colored cell per (eta, mu) with diverged cells in a distinct style.

    Cell values are log10 of the final loss, medianed over repetitions; the
    color-scale bounds are recorded in the document metadata.
    """
    if value not in HEATMAP_VALUES:
        raise ValueError(f"value must be one of {HEATMAP_VALUES}, got {value!r}")
    if spec is None:
        spec = PlotSpec(kind="heatmap")
    if result.eta_values is None or result.mu_values is None:
        raise ValueError("result carries no grid axes; only grid sweeps render as heatmaps")
    etas = tuple(sorted(result.eta_values))
    mus = tuple(sorted(result.mu_values))

    by_cell: dict[tuple[float, float], list] = {}
    for c in result.cells:
        by_cell.setdefault((c.eta, c.mu), []).append(c)
    values: dict[tuple[float, float], float | None] = {}
    for eta in etas:
        for mu in mus:
            cells = by_cell.get((eta, mu), [])
            if len(cells) != result.repetitions:
                raise ValueError(
                    f"incomplete grid: cell (eta={eta:g}, mu={mu:g}) has "
                    f"{len(cells)} of {result.repetitions} runs"
                )
            finals = [c.final_loss for c in cells if not c.diverged]
            if not finals:
                values[(eta, mu)] = None
            else:
                clamped = np.maximum(np.asarray(finals, dtype=float), 1e-320)
                values[(eta, mu)] = float(np.median(np.log10(clamped)))

    defined = [v for v in values.values() if v is not None]
    vmin = min(defined) if defined else 0.0
    vmax = max(defined) if defined else 0.0

    margin_l, margin_r, margin_t, margin_b = 86, 120, 46, 64
    w, h = spec.width, spec.height
    plot_w = w - margin_l - margin_r
    plot_h = h - margin_t - margin_b
    cell_w = plot_w / len(etas)
    cell_h = plot_h / len(mus)

    meta = {
        "kind": "heatmap",
        "value": value,
        "vmin": vmin,
        "vmax": vmax,
        "n_eta": len(etas),
        "n_mu": len(mus),
        "ramp": [ramp_color(i / (len(RAMP_STOPS) - 1)) for i in range(len(RAMP_STOPS))],
        "diverged_fill": DIVERGED_FILL,
    }
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f"<metadata>{json.dumps(meta, sort_keys=True)}</metadata>",
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{w / 2:.1f}" y="26" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{_escape(spec.title)}</text>',
    ]
    for i, eta in enumerate(etas):
        for j, mu in enumerate(mus):
            x = margin_l + i * cell_w
            y = margin_t + (len(mus) - 1 - j) * cell_h  # larger mu on top
            v = values[(eta, mu)]
            if v is None:
                fill = DIVERGED_FILL
            else:
                t = 0.5 if vmax == vmin else (v - vmin) / (vmax - vmin)
                fill = ramp_color(1.0 - t)  # lower loss shows brighter
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_w:.2f}" '
                f'height="{cell_h:.2f}" fill="{fill}" stroke="#ffffff" stroke-width="0.5"/>'
            )
            if v is None:
                parts.append(
                    f'<text x="{x + cell_w / 2:.2f}" y="{y + cell_h / 2 + 4:.2f}" '
                    f'text-anchor="middle" font-size="{min(cell_w, cell_h) * 0.6:.1f}" '
                    f'font-family="sans-serif" fill="#555555">x</text>'
                )
    # Tick labels on both axes, thinned when dense.
    step_i = max(1, len(etas) // 10)
    for i in range(0, len(etas), step_i):
        x = margin_l + (i + 0.5) * cell_w
        parts.append(
            f'<text x="{x:.2f}" y="{h - margin_b + 16}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{_fmt_tick(etas[i])}</text>'
        )
    step_j = max(1, len(mus) // 10)
    for j in range(0, len(mus), step_j):
        y = margin_t + (len(mus) - 1 - j + 0.5) * cell_h
        parts.append(
            f'<text x="{margin_l - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{_fmt_tick(mus[j])}</text>'
        )
    parts.append(
        f'<text x="{(margin_l + w - margin_r) / 2:.1f}" y="{h - 14}" '
        f'text-anchor="middle" font-size="13" font-family="sans-serif">'
        f"{_escape(spec.x_label or 'learning rate')}</text>"
    )
    mid_y = (margin_t + h - margin_b) / 2
    parts.append(
        f'<text x="20" y="{mid_y:.1f}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 20 {mid_y:.1f})">'
        f"{_escape(spec.y_label or 'momentum')}</text>"
    )
    # Color bar with scale bounds.
    bar_x = w - margin_r + 24
    bar_h = plot_h
    n_seg = 24
    for k in range(n_seg):
        t = 1.0 - (k + 0.5) / n_seg
        y = margin_t + k * bar_h / n_seg
        parts.append(
            f'<rect x="{bar_x}" y="{y:.2f}" width="14" height="{bar_h / n_seg + 0.5:.2f}" '
            f'fill="{ramp_color(1.0 - t)}"/>'
        )
    parts.append(
        f'<text x="{bar_x + 20}" y="{margin_t + 8}" font-size="10" '
        f'font-family="sans-serif">{_fmt_tick(vmin)}</text>'
    )
    parts.append(
        f'<text x="{bar_x + 20}" y="{margin_t + bar_h:.1f}" font-size="10" '
        f'font-family="sans-serif">{_fmt_tick(vmax)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass
class SummaryTable:
    """Named statistics in a stable order."""

    rows: list[tuple[str, object]]

    def get(self, name: str):
        for key, value in self.rows:
            if key == name:
                return value
        raise KeyError(name)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["statistic", "value"])
        for name, value in self.rows:
            if value is None:
                writer.writerow([name, ""])
            elif isinstance(value, float):
                writer.writerow([name, repr(value)])
            else:
                writer.writerow([name, value])
        text = buf.getvalue()
        if path is not None:
            from pathlib import Path

            Path(path).write_text(text, encoding="utf-8")
        return text


def summarize(obj, tail_fraction: float = 0.1) -> SummaryTable:
    """Key statistics of a trace or sweep result.

    For traces: loss milestones, the tail mean of the scale diagnostic, and
    the run mean of the alignment.  For sweeps: counts and the best cell.
    An empty sweep yields an empty table.
    """
    if isinstance(obj, TrainTrace):
        losses = obj.losses()
        rows: list[tuple[str, object]] = [
            ("n_rows", len(obj.rows)),
            ("initial_loss", float(losses[0]) if len(losses) else None),
            ("min_loss", float(losses.min()) if len(losses) else None),
            ("median_loss", float(np.median(losses)) if len(losses) else None),
            ("final_loss", float(losses[-1]) if len(losses) else None),
            ("r_last_decile_mean", obj.scale_tail_mean(tail_fraction) if len(losses) else None),
            ("s_run_mean", obj.alignment_run_mean() if len(losses) else None),
            ("diverged_at_step", obj.diverged_at_step),
        ]
        return SummaryTable(rows)
    if isinstance(obj, SweepResult):
        if not obj.cells:
            return SummaryTable([])
        finals = [c.final_loss for c in obj.completed()]
        best = obj.best_cell()
        rows = [
            ("n_cells", len(obj.cells)),
            ("n_diverged", sum(1 for c in obj.cells if c.diverged)),
            ("min_final_loss", float(min(finals)) if finals else None),
            ("median_final_loss", float(np.median(finals)) if finals else None),
            ("best_eta", best.eta if best else None),
            ("best_mu", best.mu if best else None),
            ("best_transition", best.transition if best else None),
        ]
        return SummaryTable(rows)
    raise TypeError(f"cannot summarize {type(obj)!r}")
