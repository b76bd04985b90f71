"""Interpolation of parameter-dependent matrix inverses for preconditioning
and projection-based model reduction."""

__version__ = "0.1.0"

from . import coeffs
from .errors import (
    ConvergenceFailure,
    DegenerateTestSpace,
    EmptyMatrix,
    GenerationFailed,
    InvalidArgument,
    InvalidSize,
    KappaTooSmall,
    NotSPD,
    ParaprecError,
    SingularOperator,
    SingularReducedSystem,
    SketchTooSmall,
)
from .operators import (
    AffineOperator,
    AffineVector,
    FactorizedInverse,
    NormMatrix,
    eval_operator,
    factorize,
    identity_norm,
)
from .sketch import (
    SketchMatrix,
    basic_sketch_columns,
    coherence_err,
    hadamard,
    make_sketch,
    min_sketch_columns,
    vvt_pattern,
    welch_bound,
)
from .precond import (
    InverseBasis,
    NormalEq,
    SpectralConstants,
    assemble_normal_eq,
    singular_value_diagnostics,
    frob_residual,
    frob_residual_direct,
    precond_apply,
    solve_kappa_constrained,
    solve_nonneg,
    solve_unconstrained,
    spectral_constants,
)
from .eim import EimModel, SurrogateNE, build_surrogate, eim, online_eval
from .greedy import (
    Preconditioner,
    build_preconditioner,
    greedy_delta,
    greedy_frob,
    lhs_points,
)
from .reduction import (
    GreedyTrace,
    ReducedModel,
    best_approx,
    delta_rm,
    dual_residual_norm,
    effectivity,
    galerkin,
    orthonormalize,
    petrov_galerkin,
    pod_basis,
    preconditioned_residual_norm,
    quasi_opt_constant,
    rb_greedy,
    singular_bounds,
)
from .bench import (
    BenchmarkProblem,
    assemble_adr,
    nearest_weights,
    shepard_weights,
    synthetic_multiparam,
)
from . import mmio
