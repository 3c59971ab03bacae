"""Spectral Galerkin simulator and Gibbs-measure verification harness for
the barotropic quasi-geostrophic channel."""

__version__ = "0.1.0"

from .chaos import (
    Kernel2,
    diag_trace,
    diamond_pair,
    hphi_kernel,
    hphi_kernel_truncated,
    hphi_tail_profile,
    kernel_distance,
    pair_tensor,
    pairing_mean_square_difference,
    truncate_kernel,
    wick_second_moment,
    wick_variance,
)
from .dynamics import (
    NumericalBlowup,
    Trajectory,
    energy,
    enstrophy,
    integrate,
    liouville_divergence,
    pseudoenergy,
    rk4_step,
    vector_field,
    weak_residual,
)
from .gibbs import (
    GibbsParams,
    State,
    center,
    decenter,
    mean_vorticity,
    mode_variance,
    sample_state,
    u_variance,
)
from .spectral import (
    IndexSet,
    ModeIndex,
    SpectralField,
    apply_diag,
    inner_product,
    jacobian_triad,
    make_index_set,
    mean_product,
    sobolev_norm,
    synthesize_on_grid,
)
