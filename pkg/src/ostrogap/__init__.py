"""Center-independence experiments for universal Taylor series with
prescribed partial-sum indices."""
from .builder import (
    Arc,
    BuildPlan,
    BuildResult,
    CompactSetSample,
    Segment,
    Stage,
    TargetFunction,
    build_universal_polynomial,
    discretize,
    ls_approximate,
    synthesize_gap_series,
)
from .exceptions import (
    InfeasibleSelectionError,
    NormalizationError,
    NumericalError,
    PlanError,
    RankDeficiencyError,
    SequenceOverflowError,
)
from .gap_engine import (
    GapSelection,
    IndexSequence,
    IndexStream,
    check_gap_conditions,
    detect_ostrowski_gaps,
    materialize,
    select_gaps_geometric,
    select_gaps_polynomial,
    verify_decay_chain,
)
from .harness import (
    ConvergenceTrace,
    ExperimentConfig,
    probe_factorial,
    run_center_independence,
    run_transport_experiment,
)
from .poly_core import (
    LogMag,
    TaylorPoly,
    circle_norm,
    evaluate,
    partial_sum,
    partial_sum_at,
    recenter,
)

__version__ = "0.1.0"
