"""Stokes resolvent, semigroup and maximal-regularity experiments on a weighted cylinder.

The cylinder is ``Sigma x R`` with a rectangular cross-section ``Sigma``.  Each
axial Fourier mode reduces to a cross-section problem on a staggered (MAC)
grid; the cylinder operators are assembled from those mode solves.
"""

from .cross_section import (
    CrossSectionGrid,
    ModeField,
    SectorInfo,
    SpectralThresholds,
    build_grid,
    div_solve,
    poincare_constant,
    sector_params,
    thresholds,
)
from .cylinder import (
    AxialGrid,
    CylinderField,
    CylinderResolvent,
    multiplier_family,
    rademacher_rbound,
    read_snapshot,
    resolvent_apply,
    resolvent_norm_estimate,
    write_snapshot,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateModeError,
    GridError,
    ParameterError,
    SolverError,
    SupportError,
)
from .evolution import (
    TimeGrid,
    decay_experiment,
    leray_project,
    maxreg_ratio,
    semigroup_step,
    solve_cauchy,
)
from .mode_solver import (
    ModeSystem,
    SpectralParams,
    assemble,
    coercivity_check,
    derivative_solve,
    estimate_sweep,
    mode_estimate_ratio,
    solve_mode,
)
from .weights import MixedNormSpec, PowerWeight, ar_constant, dual_weight, mixed_norm

__version__ = "0.1.0"
