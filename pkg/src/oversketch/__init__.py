"""Straggler-resilient sketched blocked matrix multiplication, with a
deterministic serverless-execution simulator, an (alpha, beta, gamma)
communication cost model, statistical accuracy checks, and a barrier-method
LP solver that computes its Hessian through the sketched multiply."""

from .accuracy import (
    AccuracyParams,
    frobenius_error,
    verify_low_rank_guarantee,
    verify_product_guarantee,
    verify_sketch_moments,
    verify_stacked_moments,
)
from .costmodel import (
    CostParams,
    CostReport,
    InfeasibleMemoryError,
    dollar_cost,
    measure_costs,
    predict_blocked,
    predict_coded_naive,
    predict_naive,
    predict_oversketch,
)
from .lp import BarrierProblem, SketchedHessian, make_lp_instance, solve_lp
from .matrix import (
    BlockedMatrix,
    IncompleteMatrixError,
    assemble,
    as_matrix,
    load_matrix,
    load_matrix_csv,
    local_multiply,
    partition,
    ramp_matrix,
    save_matrix,
)
from .multiply import (
    InsufficientResultsError,
    MultiplyPlan,
    RecoveryFailureError,
    blocked_multiply,
    coded_naive_multiply,
    naive_multiply,
    oversketch_multiply,
)
from .simulator import (
    ConfigurationError,
    SimulationTrace,
    Simulator,
    StragglerModel,
    WorkerTask,
    sample_duration,
)
from .sketch import (
    CountSketch,
    OverSketch,
    distributed_sketch,
    make_count_sketch,
    make_oversketch,
)
from .store import BlockKey, MissingBlockError, ObjectStore, WriteConflictError

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
