"""Numerical estimation of quantum speed limits with bang-off controls.

The package searches for time-optimal, amplitude-bounded control fields
of small driven quantum systems by enumerating bang-off switching
patterns, optimizing their segment durations, and bisecting for the
shortest duration that still reaches the target state.
"""

from .analysis import (
    DistanceDistribution,
    LandscapeGrid,
    RobustnessStats,
    distance_distribution,
    landscape,
    loglog_slope,
    robustness,
)
from .controls import (
    BangOffControl,
    CrabControl,
    PiecewiseControl,
    Pruning,
    control_distance,
    enumerate_types,
    format_word,
    negate,
    parse_word,
    random_bangoff,
    sample,
    to_piecewise,
)
from .errors import (
    BangoffError,
    BracketingError,
    InvalidInputError,
    NumericalFailureError,
    OutOfRegimeError,
    ResourceLimitError,
)
from .linalg import apply, eigh_hermitian, expm_hermitian, overlap
from .model import (
    ControlSystem,
    bang_bang_solution,
    bang_off_solution,
    equator_target,
    load_system,
    system_from_dict,
    system_to_dict,
    three_level,
    two_level,
)
from .objective import (
    CompiledSystem,
    EvaluationReport,
    bures_distance,
    evaluate,
    fidelity,
    propagate,
)
from .optimize import (
    OptimizationResult,
    SdConfig,
    crab_optimize,
    multi_start,
    one_flip_sd,
    quasi_newton,
    sd_durations,
)
from .qsl import (
    CriticalTimeReport,
    QslReport,
    SearchBudget,
    best_fidelity_at,
    critical_time,
    estimate_qsl,
    fidelity_vs_total,
    grid_oracle,
    min_duration,
)

__version__ = "0.1.0"
