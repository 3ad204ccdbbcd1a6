"""Numerical laboratory for bulk eigenvalue statistics of real
Gauss-divisible random matrices: resolvent machinery, self-consistent
spectral scales, partial Schur decompositions, spin combinatorics,
Pfaffian and Stiefel-manifold dualities, and correlation-function
estimation against universal predictions."""

__version__ = "0.1.0"

from .linalg import (  # noqa: F401
    Hermitization,
    ResolventCache,
    SkewMatrix,
    SpectrumSplit,
    hermitize,
    lemma_checks,
    pfaffian,
    real_spectrum,
    resolvent_traces,
)
from .ensembles import (  # noqa: F401
    EnsembleSpec,
    MarkovChainConfig,
    McmcDiagnosticError,
    StiefelPoint,
    haar_frame,
    haar_unitary,
    sample_matrix,
    sample_mu,
    sample_nu,
    stream_generator,
)
from .resolvents import (  # noqa: F401
    check_conditions,
    deterministic_law,
    local_law_gap,
    local_profile,
    phi_curve,
    solve_eta,
)
from .schur import (  # noqa: F401
    SchurChain,
    admissible_tuples,
    decompose,
    jacobian_mc_check,
    omega_indicator,
    reconstruct,
    schur_step_complex,
    schur_step_real,
    spin,
    spin_from_spectrum,
    spin_identity_check,
)
from .dualities import (  # noqa: F401
    DualityPair,
    McEstimate,
    QuadratureSpec,
    compute_Kn,
    compute_Ln,
    dubova_yang_check,
    fn_direct,
    fn_pfaffian,
    group_integral_Im,
    skew_jacobian_check,
    stiefel_duality_check,
)
from .correlators import (  # noqa: F401
    BinGrid,
    compare,
    estimate_correlation,
    ginoe_complex_kernel,
    real_bulk_prediction,
)
