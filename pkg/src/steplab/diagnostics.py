"""Training traces and the two momentum diagnostics: alignment of the descent
direction with the direction to a reference point, and the momentum-to-gradient
scale ratio.

Diagnostics that are undefined at a step (zero gradient norm, zero distance to
the reference) are recorded as ``None``, never NaN, so serialized traces stay
comparable.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

REFERENCE_SOURCES = ("known_optimum", "final_iterate")

TRACE_CSV_COLUMNS = (
    "step",
    "epoch",
    "phase_index",
    "loss",
    "grad_norm",
    "momentum_norm",
    "scale",
    "alignment",
    "eta_effective",
)


def config_fingerprint(config: dict) -> str:
    """Short stable hash of a configuration dict (order-insensitive)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _jsonable(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON-serializable: {type(value)!r}")


@dataclass(frozen=True)
class TraceRow:
    """One logged step: loss, norms, and the momentum diagnostics."""

    step: int
    epoch: int
    phase_index: int
    loss: float
    grad_norm: float
    momentum_norm: float
    scale: float | None
    alignment: float | None
    eta_effective: float | None


@dataclass(frozen=True)
class ReferencePoint:
    """The point the alignment diagnostic is measured against."""

    x_star: np.ndarray
    source: str = "known_optimum"

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))
        if self.source not in REFERENCE_SOURCES:
            raise ValueError(
                f"unknown reference source {self.source!r}; expected one of {REFERENCE_SOURCES}"
            )


def scale(g: np.ndarray, grad: np.ndarray) -> float | None:
    """Ratio of momentum-buffer norm to gradient norm; None if the gradient
    vanishes."""
    g = np.asarray(g, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if g.shape != grad.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {grad.shape}")
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm == 0.0:
        return None
    return float(np.linalg.norm(g)) / grad_norm


def alignment(g: np.ndarray, w: np.ndarray, ref: ReferencePoint) -> float | None:
    """Cosine between the descent direction -g and the direction to the
    reference point.

    The update subtracts the momentum buffer, so -g is where the step
    actually moves; a value of 1 means the buffer points straight at the
    reference.  Returns None when either direction has zero norm.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    if g.shape != w.shape or ref.x_star.shape != w.shape:
        raise ValueError(
            f"shape mismatch: g {g.shape}, w {w.shape}, reference {ref.x_star.shape}"
        )
    to_ref = ref.x_star - w
    g_norm = float(np.linalg.norm(g))
    d_norm = float(np.linalg.norm(to_ref))
    if g_norm == 0.0 or d_norm == 0.0:
        return None
    value = float(-(g @ to_ref) / (g_norm * d_norm))
    return float(np.clip(value, -1.0, 1.0))


@dataclass
class TrainTrace:
    """Ordered trace rows plus optional state snapshots for later annotation."""

    rows: list[TraceRow]
    config_fingerprint: str = ""
    snapshots: list[tuple[int, np.ndarray, np.ndarray]] | None = None
    diverged_at_step: int | None = None
    best_loss: float | None = None
    best_step: int | None = None

    def __post_init__(self) -> None:
        steps = [r.step for r in self.rows]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("trace rows must be strictly increasing in step")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def diverged(self) -> bool:
        return self.diverged_at_step is not None

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.rows])

    @property
    def initial_loss(self) -> float:
        return self.rows[0].loss

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss

    def scale_tail_mean(self, fraction: float = 0.1) -> float | None:
        """Mean of the scale diagnostic over the last ``fraction`` of rows."""
        if not 0.0 < fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        n_tail = max(1, int(round(len(self.rows) * fraction)))
        values = [r.scale for r in self.rows[-n_tail:] if r.scale is not None]
        if not values:
            return None
        return float(np.mean(values))

    def alignment_run_mean(self) -> float | None:
        values = [r.alignment for r in self.rows if r.alignment is not None]
        if not values:
            return None
        return float(np.mean(values))

    # -- serialization ------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.step,
                    r.epoch,
                    r.phase_index,
                    _fmt(r.loss),
                    _fmt(r.grad_norm),
                    _fmt(r.momentum_norm),
                    _fmt(r.scale),
                    _fmt(r.alignment),
                    _fmt(r.eta_effective),
                ]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, source) -> "TrainTrace":
        """Rebuild rows from CSV text or a file path (fingerprint not stored
        in CSV)."""
        text = source
        if "\n" not in str(source):
            text = Path(source).read_text(encoding="utf-8")
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != TRACE_CSV_COLUMNS:
            raise ValueError(f"unexpected trace CSV header: {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(
                TraceRow(
                    step=int(rec[0]),
                    epoch=int(rec[1]),
                    phase_index=int(rec[2]),
                    loss=float(rec[3]),
                    grad_norm=float(rec[4]),
                    momentum_norm=float(rec[5]),
                    scale=_parse(rec[6]),
                    alignment=_parse(rec[7]),
                    eta_effective=_parse(rec[8]),
                )
            )
        return cls(rows=rows)

    def to_json(self, path=None) -> str:
        payload = {
            "version": 1,
            "config_fingerprint": self.config_fingerprint,
            "diverged_at_step": self.diverged_at_step,
            "best_loss": self.best_loss,
            "best_step": self.best_step,
            "rows": [
                {
                    "step": r.step,
                    "epoch": r.epoch,
                    "phase_index": r.phase_index,
                    "loss": r.loss,
                    "grad_norm": r.grad_norm,
                    "momentum_norm": r.momentum_norm,
                    "scale": r.scale,
                    "alignment": r.alignment,
                    "eta_effective": r.eta_effective,
                }
                for r in self.rows
            ],
        }
        text = json.dumps(payload)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, source) -> "TrainTrace":
        text = source
        if "{" not in str(source):
            text = Path(source).read_text(encoding="utf-8")
        data = json.loads(text)
        if data.get("version") != 1:
            raise ValueError(f"unsupported trace format version: {data.get('version')!r}")
        rows = [TraceRow(**rec) for rec in data["rows"]]
        return cls(
            rows=rows,
            config_fingerprint=data.get("config_fingerprint", ""),
            diverged_at_step=data.get("diverged_at_step"),
            best_loss=data.get("best_loss"),
            best_step=data.get("best_step"),
        )


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _parse(text: str) -> float | None:
    return None if text == "" else float(text)


def annotate_alignment(trace: TrainTrace, ref: ReferencePoint) -> TrainTrace:
    """Fill the alignment column of every row from the stored snapshots.

    This is the second pass of the protocol used when the reference point is
    only known after training (typically the final iterate).  The input trace
    is left untouched; annotating twice with the same reference is a no-op.
    """
    if trace.snapshots is None:
        raise ValueError("trace has no snapshots; rerun training with store_snapshots=True")
    by_step = {step: (w, g) for step, w, g in trace.snapshots}
    missing = [r.step for r in trace.rows if r.step not in by_step]
    if missing:
        raise ValueError(f"snapshots missing for steps {missing[:5]}")
    new_rows = []
    for row in trace.rows:
        w, g = by_step[row.step]
        new_rows.append(replace(row, alignment=alignment(g, w, ref)))
    return TrainTrace(
        rows=new_rows,
        config_fingerprint=trace.config_fingerprint,
        snapshots=trace.snapshots,
        diverged_at_step=trace.diverged_at_step,
        best_loss=trace.best_loss,
        best_step=trace.best_step,
    )
