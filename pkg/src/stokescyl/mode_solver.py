"""Parametrized Stokes system on the cross-section for one complex axial phase.

For ``eta = xi + i beta`` the unknowns ``(u', un, p)`` satisfy

    (lambda + eta^2 - Delta') u' + grad' p   = f'
    (lambda + eta^2 - Delta') un + i eta p   = fn
    div' u' + i eta un                       = g

with homogeneous Dirichlet data for the velocity.
"""

from __future__ import annotations

import cmath
import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, gmres, onenormest, spilu, splu
from scipy.sparse.linalg import norm as spnorm

from .cross_section import (
    CrossSectionGrid,
    ModeField,
    SolenoidalProjector,
    dirichlet_smallest,
    neumann_solve,
    sector_params,
)
from .errors import DegenerateModeError, ParameterError, SolverError
from .weights import PowerWeight, lr_norm

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10

__all__ = [
    "SpectralParams",
    "ModeField",
    "ModeSystem",
    "assemble",
    "solve_mode",
    "solution_operators",
    "derivative_solve",
    "EstimateRatio",
    "mode_estimate_ratio",
    "derivative_estimate_ratio",
    "coercivity_check",
    "sweep_lambdas",
    "estimate_sweep",
    "sweep_summary",
    "growth_flags",
    "smooth_forcing",
    "solenoidal_sample",
    "split_norm",
    "cached_system",
    "CoercivityResult",
    "SweepRow",
]


@dataclass(frozen=True)
class SpectralParams:
    """Resolvent parameter ``lam``, axial frequency ``xi`` and exponential rate ``beta``."""

    lam: complex
    xi: float
    beta: float = 0.0
    alpha: float = 0.0
    eps: float | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ParameterError("beta must be nonnegative")
        object.__setattr__(self, "lam", complex(self.lam))
        object.__setattr__(self, "xi", float(self.xi))

    @property
    def eta(self) -> complex:
        return complex(self.xi, self.beta)

    @property
    def mu_plus(self) -> float:
        return math.sqrt(abs(self.lam + self.alpha + self.xi**2))

    def replace(self, **kw) -> "SpectralParams":
        d = dict(lam=self.lam, xi=self.xi, beta=self.beta, alpha=self.alpha, eps=self.eps)
        d.update(kw)
        return SpectralParams(**d)

    def in_sector(self, eps: float | None = None) -> bool:
        """``lam`` in ``-alpha + S_eps``."""
        eps = self.eps if eps is None else eps
        z = self.lam + self.alpha
        return z != 0 and abs(cmath.phase(z)) < math.pi / 2 + eps

    def check_admissible(self, alpha_bar: float):
        """Raise :class:`ParameterError` unless alpha, eps and lam are admissible."""
        info = sector_params(alpha_bar, self.beta, self.alpha)
        if not info.valid:
            raise ParameterError(info.reason)
        eps = info.eps_star if self.eps is None else self.eps
        if eps >= info.eps_star:
            raise ParameterError(f"eps={eps} not below eps*={info.eps_star}")
        if not self.in_sector(eps):
            raise ParameterError(f"lambda={self.lam} outside -alpha + S_eps")


# ---------------------------------------------------------------------------
# assembly and solves


def _rhs(grid, f, g):
    b = np.zeros(grid.nstate, dtype=complex)
    if f is not None:
        fv = f.velocity if isinstance(f, ModeField) else np.asarray(f)
        b[: grid.nvel] = fv[: grid.nvel]
    if g is not None:
        b[grid.nvel :] = np.asarray(g).ravel()
    return b


class ModeSystem:
    """Assembled and factorized operator of the mode problem.

    Immutable after construction; ``solve`` is pure and safe to call from
    several threads.
    """

    def __init__(self, grid: CrossSectionGrid, params: SpectralParams):
        eta = params.eta
        if eta == 0:
            raise DegenerateModeError(
                "xi = 0 with beta = 0: constant pressures form a nullspace"
            )
        self.grid, self.params = grid, params
        nvel, nc = grid.nvel, grid.nc
        shift = params.lam + eta**2
        A = shift * sparse.eye(nvel) - grid.lap_velocity
        Gfull = sparse.vstack([grid.grad, 1j * eta * sparse.eye(nc)])
        Dfull = sparse.hstack([grid.div, 1j * eta * sparse.eye(nc)])
        self.matrix = sparse.bmat([[A, Gfull], [Dfull, None]], format="csc")
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed at {params}: {exc}") from exc

    def apply(self, z):
        return self.matrix @ z

    def solve_rhs(self, b, trans="N", check=True):
        """Solve ``K z = b`` (or the adjoint with ``trans='H'``); ``b`` may be 2-D."""
        b = np.asarray(b, dtype=complex)
        z = self._lu.solve(b, trans=trans)
        if check:
            M = self.matrix if trans == "N" else self.matrix.conj().T
            res = np.linalg.norm(M @ z - b, axis=0)
            scale = np.linalg.norm(b, axis=0)
            bad = res > RESIDUAL_TOL * np.maximum(scale, np.finfo(float).tiny)
            if np.any(bad & (scale > 0)):
                worst = float(np.max(res / np.where(scale > 0, scale, 1.0)))
                raise SolverError(f"relative residual {worst:.3e} at {self.params}")
        return z

    def solve(self, f=None, g=None) -> ModeField:
        return ModeField(self.grid, self.solve_rhs(_rhs(self.grid, f, g)))

    def solve_iterative(self, b, tol=1e-13):
        """GMRES with an incomplete-LU preconditioner; a cross-check path."""
        ilu = spilu(self.matrix, drop_tol=1e-6, fill_factor=20)
        M = LinearOperator(self.matrix.shape, ilu.solve, dtype=complex)
        z, info = gmres(self.matrix, b, M=M, rtol=tol, atol=0.0, restart=200, maxiter=50)
        if info != 0:
            raise SolverError(f"gmres did not converge (info={info})")
        return z

    def dense_solve(self, b):
        return np.linalg.solve(self.matrix.toarray(), b)

    def condition_estimate(self) -> float:
        n = self.matrix.shape[0]
        inv = LinearOperator(
            (n, n),
            matvec=lambda x: self._lu.solve(np.asarray(x, dtype=complex)),
            rmatvec=lambda x: self._lu.solve(np.asarray(x, dtype=complex), trans="H"),
            dtype=complex,
        )
        # t=1 keeps the Hager iteration free of random restarts, so reports are reproducible
        return float(spnorm(self.matrix, 1) * onenormest(inv, t=1))


def assemble(grid: CrossSectionGrid, params: SpectralParams) -> ModeSystem:
    return ModeSystem(grid, params)


@functools.lru_cache(maxsize=64)
def _cached_system(grid, lam, xi, beta):
    return ModeSystem(grid, SpectralParams(lam, xi, beta))


def cached_system(grid, params: SpectralParams) -> ModeSystem:
    """Shared factorization keyed by ``(grid, lam, xi, beta)``."""
    return _cached_system(grid, params.lam, params.xi, params.beta)


def solve_mode(system: ModeSystem, f=None, g=None) -> ModeField:
    """Solve the mode problem for velocity forcing ``f`` and divergence data ``g``."""
    return system.solve(f, g)


def solution_operators(grid, params, f):
    """``(a(xi) f, b(xi) f)``: velocity and pressure for forcing ``f`` with ``g = 0``."""
    sol = cached_system(grid, params).solve(f, None)
    return sol.velocity.copy(), sol.p.copy()


def _derivative_rhs(grid, params, z):
    """Right-hand side ``-K'(xi) z`` of the xi-differentiated system."""
    eta = params.eta
    nvel = grid.nvel
    sl = grid.slices
    b = np.zeros_like(z, dtype=complex)
    b[:nvel] = -2 * eta * z[:nvel]
    b[sl["un"]] -= 1j * z[sl["p"]]
    b[sl["p"]] = -1j * z[sl["un"]]
    return b


def derivative_solve(grid, params, f, solution: ModeField | None = None) -> ModeField:
    """``(w, q) = d/dxi (a(xi) f, b(xi) f)`` from the differentiated system.

    The same operator is solved with right-hand sides ``-2 eta u'``,
    ``-2 eta un - i p`` and ``-i un``.
    """
    system = cached_system(grid, params)
    if solution is None:
        solution = system.solve(f, None)
    return ModeField(grid, system.solve_rhs(_derivative_rhs(grid, params, solution.state)))


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class EstimateRatio:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf

    @property
    def violation(self) -> bool:
        return self.rhs == 0 and self.lhs > 0


def _norm(obs, z, r):
    return float(lr_norm(obs.matrix @ z, obs.weights, r))


def split_norm(grid, g, eta, r=2.0, weight=PowerWeight()):
    """Canonical-split value of ``||g; L^r_0 + L^r_{1/eta}||``.

    ``g = (g - gbar) + gbar`` with ``gbar`` the mean; the mean-zero part is
    measured in the negative norm through ``||grad phi||`` with
    ``-Delta_N phi = g - gbar``, the constant part as ``|gbar / eta| ||1||``.
    """
    g = np.asarray(g).ravel()
    gbar = g.mean()
    phi = neumann_solve(grid, g)
    grad = [grid.observable("cell_neumann", d, weight) for d in "xy"]
    vals = np.concatenate([o(phi) for o in grad])
    w = np.concatenate([o.weights for o in grad])
    g0 = float(lr_norm(vals, w, r))
    one = float(np.sum(grid.cell_weights(weight)) ** (1.0 / r))
    return g0 + abs(gbar / eta) * one


def mode_estimate_ratio(
    grid, params, f=None, g=None, r=2.0, weight=PowerWeight(), solution: ModeField | None = None
) -> EstimateRatio:
    """Left and right sides of the uniform per-mode estimate.

    LHS: ``mu+^2 |u| + mu+ |grad u| + |grad^2 u| + |grad p| + |eta| |p|``.
    RHS: ``|f| + |grad g| + (1 + |xi|) |g| + (|lam| + 1) ||g; L^r_0 + L^r_{1/eta}||``.
    All norms weighted ``L^r``; tensor components combine in ``l^r``.
    """
    if solution is None:
        solution = cached_system(grid, params).solve(f, g)
    z = solution.state
    mu = params.mu_plus
    B = lambda name: grid.bundle(name, weight)  # noqa: E731
    lhs = (
        mu**2 * _norm(B("velocity"), z, r)
        + mu * _norm(B("grad_velocity"), z, r)
        + _norm(B("hess_velocity"), z, r)
        + _norm(B("grad_p"), z, r)
        + abs(params.eta) * _norm(B("p"), z, r)
    )
    fz = _rhs(grid, f, None)
    rhs = _norm(B("velocity"), fz, r)
    if g is not None and np.any(g):
        g = np.asarray(g).ravel()
        cell = grid.observable("cell", "", weight)
        gx, gy = grid.observable("cell", "x", weight), grid.observable("cell", "y", weight)
        grad_g = float(lr_norm(np.concatenate([gx(g), gy(g)]), np.concatenate([gx.weights, gy.weights]), r))
        rhs += grad_g + (1 + abs(params.xi)) * _norm(cell, g, r)
        rhs += (abs(params.lam) + 1) * split_norm(grid, g, params.eta, r, weight)
    return EstimateRatio(float(lhs), float(rhs))


def derivative_estimate_ratio(grid, params, f, r=2.0, weight=PowerWeight()) -> EstimateRatio:
    """``|(lam+alpha) xi w| + |xi grad^2 w| + |xi^3 w| + |xi grad q| + |xi eta q|`` over ``|f|``."""
    w = derivative_solve(grid, params, f).state
    xi, B = abs(params.xi), (lambda name: grid.bundle(name, weight))
    lhs = xi * (
        (abs(params.lam + params.alpha) + xi**2) * _norm(B("velocity"), w, r)
        + _norm(B("hess_velocity"), w, r)
        + _norm(B("grad_p"), w, r)
        + abs(params.eta) * _norm(B("p"), w, r)
    )
    rhs = _norm(B("velocity"), _rhs(grid, f, None), r)
    return EstimateRatio(float(lhs), float(rhs))


@dataclass(frozen=True)
class CoercivityResult:
    value: float
    lower_bound: float
    passed: bool
    case: str


def _sharp_bound(a, c, alpha0):
    """``min_{0 <= t <= 1/alpha0} |1 + a t + i c t|``."""
    tmax = 1.0 / alpha0
    cands = [0.0, tmax]
    if a * a + c * c > 0:
        t = -a / (a * a + c * c)
        if 0 < t < tmax:
            cands.append(t)
    return min(math.hypot(1 + a * t, c * t) for t in cands)


def coercivity_check(grid, params, velocity, alpha0=None, tol=1e-6) -> CoercivityResult:
    """Compare ``|b(u, u)|`` with the case-dependent lower bound for a V_eta sample.

    ``b(u, u) = (lam + eta^2) |u|^2 + |grad u|^2``.  ``alpha0`` defaults to the
    discrete Dirichlet threshold of ``grid``, for which the discrete Poincare
    inequality is exact.  Outside the two closed-form cases the bound is the
    minimum of ``|1 + a t + i c t|`` over the Poincare-admissible range of
    ``t = |u|^2 / |grad u|^2``.
    """
    if alpha0 is None:
        alpha0 = dirichlet_smallest(grid)
    lam, xi, beta = params.lam, params.xi, params.beta
    if beta > 0 and not lam.real > -(lam.imag**2) / (4 * beta**2) - alpha0 + beta**2:
        raise ParameterError(f"lambda={lam} violates the coercivity condition for beta={beta}")
    v = np.asarray(velocity, dtype=complex)[: grid.nvel]
    h2 = grid.h**2
    u2 = h2 * float(np.vdot(v, v).real)
    grad2 = h2 * float(np.vdot(v, -(grid.lap_velocity @ v)).real)
    b = (lam + params.eta**2) * u2 + grad2
    a = lam.real + xi**2 - beta**2
    c = lam.imag + 2 * xi * beta
    if lam.real + alpha0 - beta**2 >= 0:
        case = "nonneg"
        factor = 1.0 if xi**2 >= alpha0 else xi**2 / alpha0
    elif c == 0:
        case = "resonance"
        factor = (lam.real + lam.imag**2 / (4 * beta**2) - beta**2 + alpha0) / alpha0
    else:
        case = "general"
        factor = _sharp_bound(a, c, alpha0)
    if not factor > 0 and grad2 > 0:
        raise ParameterError(f"no coercivity at {params}")
    bound = factor * grad2
    return CoercivityResult(abs(b), bound, abs(b) >= bound * (1 - tol), case)


def solenoidal_sample(grid, eta, rng) -> np.ndarray:
    """Random discretely div_eta-free velocity."""
    v = rng.standard_normal(grid.nvel) + 1j * rng.standard_normal(grid.nvel)
    return SolenoidalProjector(grid, eta)(v)


# ---------------------------------------------------------------------------
# sweeps


def sweep_lambdas(alpha, eps, magnitudes, n_rays=5):
    """``lam = -alpha + rho e^{i theta}`` over rays spanning ``-alpha + S_eps``.

    Returns a list of ``(theta, rho, lam)``; the extreme rays sit on the sector
    boundary ``|theta| = pi/2 + eps``.
    """
    thetas = np.linspace(-(np.pi / 2 + eps), np.pi / 2 + eps, n_rays)
    return [(float(t), float(rho), complex(-alpha + rho * np.exp(1j * t))) for t in thetas for rho in magnitudes]


def smooth_forcing(grid, rng, n_terms=4, with_g=True):
    """Random smooth velocity forcing (state layout) and divergence data."""
    funcs = {}
    for name in ("u1", "u2", "un") + (("p",) if with_g else ()):
        k = rng.integers(1, 4, size=(n_terms, 2))
        c = rng.standard_normal((n_terms, 2)) @ np.array([1.0, 1j])
        if name == "p":
            funcs[name] = lambda X, Y, k=k, c=c: sum(
                ci * np.cos(ki[0] * X * np.pi / grid.Lx) * np.cos(ki[1] * Y * np.pi / grid.Ly) for ki, ci in zip(k, c)
            ) + c[0]
        else:
            funcs[name] = lambda X, Y, k=k, c=c: sum(
                ci * np.sin(ki[0] * X * np.pi / grid.Lx) * np.sin(ki[1] * Y * np.pi / grid.Ly) for ki, ci in zip(k, c)
            )
    z = grid.sample(funcs)
    f = z.copy()
    f[grid.nvel :] = 0
    g = z[grid.nvel :].reshape(grid.Nx, grid.Ny) if with_g else None
    return f, g


@dataclass
class SweepRow:
    lam: complex
    theta: float
    rho: float
    xi: float
    beta: float
    r: float
    weight_id: str
    lhs: float
    rhs: float

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


def estimate_sweep(
    grid,
    alpha,
    beta,
    eps,
    magnitudes,
    xis,
    weights=(PowerWeight(),),
    rs=(2.0,),
    n_rays=5,
    n_forcings=2,
    seed=0,
):
    """Evaluate the per-mode estimate over a (lam, xi) grid.

    For every point the forcing ensemble (alternately with and without
    divergence data) is solved once; each (weight, r) combination reports the
    worst ratio over the ensemble.  Rows are ordered deterministically.
    """
    rng = np.random.default_rng(seed)
    forcings = [smooth_forcing(grid, rng, with_g=(j % 2 == 1)) for j in range(n_forcings)]
    rows = []
    for theta, rho, lam in sweep_lambdas(alpha, eps, magnitudes, n_rays):
        for xi in xis:
            params = SpectralParams(lam, xi, beta, alpha)
            system = ModeSystem(grid, params)
            B = np.stack([_rhs(grid, f, g) for f, g in forcings], axis=1)
            Z = system.solve_rhs(B)
            for weight in weights:
                for r in rs:
                    best = None
                    for j, (f, g) in enumerate(forcings):
                        er = mode_estimate_ratio(
                            grid, params, f, g, r, weight, solution=ModeField(grid, Z[:, j])
                        )
                        if best is None or er.ratio > best.ratio:
                            best = er
                    rows.append(SweepRow(lam, theta, rho, xi, beta, r, weight.ident, best.lhs, best.rhs))
    return rows


def growth_flags(profile, factor=1.5):
    """True if ``profile`` increases strictly with total growth above ``factor``."""
    p = np.asarray(profile, dtype=float)
    if len(p) < 2:
        return False
    return bool(np.all(np.diff(p) > 0) and p[-1] > factor * p[0])


def sweep_summary(rows, decade_points: int, factor=1.5):
    """Max/median of the ratios and monotone-growth flags on the outer decades.

    Profiles are the maxima over all other sweep variables as functions of
    ``|lam + alpha|`` and of ``|xi|``; the outermost ``decade_points`` entries
    at each end are tested with :func:`growth_flags` (the low end read in
    reverse, so growth toward the extreme is what counts).
    """
    ratios = np.array([row.ratio for row in rows])
    out = {"max": float(ratios.max()), "median": float(np.median(ratios)), "min": float(ratios.min())}
    out["max_over_median"] = out["max"] / out["median"]
    flags = {}
    for key, getter in (("rho", lambda row: row.rho), ("xi", lambda row: abs(row.xi))):
        vals = sorted({getter(row) for row in rows})
        prof = [max(row.ratio for row in rows if getter(row) == v) for v in vals]
        k = min(decade_points, len(prof))
        flags[f"{key}_high"] = growth_flags(prof[-k:], factor)
        flags[f"{key}_low"] = growth_flags(prof[:k][::-1], factor)
    out["growth_flags"] = flags
    out["monotone_growth"] = any(flags.values())
    return out
