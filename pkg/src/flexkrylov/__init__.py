"""Flexible short-recurrence Krylov solvers for ``H + S`` with Hermitian positive definite H."""

from .bounds import (
    LambdaEstimate,
    SpectralInterval,
    estimate_lambda,
    fmr_aposteriori_bound,
    gal_error_bound,
    mr_residual_bound_freund,
    mr_residual_bound_symmetric,
)
from .inner import (
    ICFactor,
    InnerKind,
    InnerSolveReport,
    InnerSolver,
    InnerSolverConfig,
    cg_solve,
    ic_apply,
    ic_factor,
    pcg_solve,
)
from .lanczos import (
    LanczosMode,
    LanczosState,
    TriColumn,
    lanczos_init,
    lanczos_step_exact,
    lanczos_step_flexible,
)
from .problems import (
    PHDescriptor,
    convection_diffusion,
    load_matrix_market,
    ph_midpoint_system,
    spring_mass_chain,
    symmetric_scale,
    write_matrix_market,
)
from .solvers import (
    Method,
    SolverConfig,
    SolverTrace,
    fgal_solve,
    fmr_solve,
    residual_hnorm_approx,
    solve,
)
from .sparse import Mode, SparseMatrix, SplitSystem, dot, split, spmv

__version__ = "0.1.0"
