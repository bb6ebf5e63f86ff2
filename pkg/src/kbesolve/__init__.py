"""Two-time Kadanoff-Baym propagation for a two-band Hubbard model."""

from .collision import (
    CollisionSlice,
    QuadratureRule,
    collision_frontier,
    collision_greater,
    collision_lesser,
    quadrature_weights,
)
from .engine import (
    Schedule,
    WorkerPool,
    chunk_partial_sums,
    combine_shards,
    execute,
    plan,
    sequential_reduce,
    tree_reduce,
)
from .errors import (
    CapacityError,
    ConfigError,
    PoisonedStateError,
    TrajectoryFormatError,
)
from .kgrid import (
    IndexTables,
    KGrid,
    build_index_tables,
    build_kgrid,
    index_of_diff,
    index_of_sum,
)
from .model import ModelConfig, band_energies, build_h, pulse_amplitude, u_values
from .propagator import (
    PropagationDriver,
    StepConfig,
    StepReport,
    cayley_propagator,
    run,
)
from .selfenergy import (
    SigmaHistory,
    assemble_sigma,
    evaluate_sigma_batched,
    init_sigma_history,
    polarizability,
    sigma_first,
    sigma_second,
    sigma_slice,
)
from .state import (
    Observables,
    TwoTimeGF,
    anticommutation_drift,
    gather,
    init_state,
    mirror_frontier,
    observables_at,
    scatter,
    symmetry_residual,
)
from .trajio import read_header, read_trajectory, write_trajectory

__version__ = "0.1.0"
