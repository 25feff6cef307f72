"""steplab: a desk-scale lab for heavy-ball momentum dynamics, step-size
regimes, and two-phase training schedules."""

from .diagnostics import (
    ReferencePoint,
    TraceRow,
    TrainTrace,
    alignment,
    annotate_alignment,
    config_fingerprint,
    scale,
)
from .equivalence import (
    EquivalenceMatch,
    LinearFit,
    LossCurve,
    NoMatchError,
    curve_distance,
    equivalence_sweep,
    find_equivalent_lr,
    training_curve,
)
from .optim import (
    DivergenceError,
    HyperParams,
    MomentumState,
    PhaseSpec,
    ScheduleSpec,
    active_phase,
    active_phase_index,
    momentum_step,
    reset_on_transition,
    train,
)
from .problems import (
    Dataset,
    MlpModel,
    QuadraticProblem,
    accuracy,
    make_dataset,
    make_quadratic,
    mlp_eval_grad,
    quadratic_eval_grad,
)
from .report import PlotSpec, render_heatmap, render_line_chart, render_loss_curves, summarize
from .sweep import (
    CellResult,
    SweepGrid,
    SweepResult,
    random_search,
    run_grid,
    transition_sweep,
    tune_learning_rate,
)

__version__ = "0.1.0"
