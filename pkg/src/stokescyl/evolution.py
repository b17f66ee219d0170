"""Time evolution ``U_t + A U = F`` of the Stokes operator on the truncated cylinder.

Everything runs in the conjugated mode variables ``u_k`` (axial FFT of
``e^{beta x} U``).  On each mode ``A_k = P_k (eta^2 - Delta')`` where ``P_k``
is the projection onto ``ker(div_eta)`` that annihilates ``eta``-gradients
``(grad' phi, i eta phi)``; it is the L^2-orthogonal Helmholtz projection of
the unweighted physical fields.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import expm, null_space
from scipy.sparse.linalg import splu

from .cross_section import CrossSectionGrid
from .cylinder import CylinderField
from .errors import DegenerateModeError, ParameterError
from .mode_solver import ModeSystem, SpectralParams
from .weights import MixedNormSpec, lr_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``K`` steps on ``[0, T]`` with time exponent ``p``."""

    T: float
    K: int
    p: float = 2.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.K < 8:
            raise ValueError("K must be at least 8")
        if not 1.0 < self.p < math.inf:
            raise ValueError("p must lie in (1, inf)")

    @property
    def dt(self):
        return self.T / self.K

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.K + 1)

    def trapezoid(self):
        w = np.full(self.K + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def lp_norm(self, values, p=None, alpha_t=0.0):
        """Composite-trapezoid ``(int (e^{alpha_t t} |v|)^p dt)^{1/p}`` along axis 0."""
        p = self.p if p is None else p
        v = np.asarray(values) * np.exp(alpha_t * self.times).reshape((-1,) + (1,) * (np.ndim(values) - 1))
        w = self.trapezoid().reshape((-1,) + (1,) * (np.ndim(values) - 1))
        return np.sum(w * v**p, axis=0) ** (1.0 / p)


def horizon(alpha_bar_h, beta, alpha_t=0.0, tol=1e-6):
    """``T`` with ``exp(-(alpha_bar_h - beta^2 - alpha_t) T) = tol``."""
    rate = alpha_bar_h - beta**2 - alpha_t
    if not rate > 0:
        raise ParameterError("alpha_t must lie below alpha_bar_h - beta^2")
    return math.log(1.0 / tol) / rate


# ---------------------------------------------------------------------------
# per-mode operators


class ModeOperator:
    """Projected Stokes operator at one axial frequency."""

    def __init__(self, grid: CrossSectionGrid, xi: float, beta: float):
        eta = complex(xi, beta)
        if eta == 0:
            raise DegenerateModeError("xi = 0 with beta = 0 has no Helmholtz projection")
        self.grid, self.xi, self.beta, self.eta = grid, float(xi), float(beta), eta
        nc = grid.nc
        self.L = (eta**2 * sparse.eye(grid.nvel) - grid.lap_velocity).tocsr()
        self.B = sparse.hstack([grid.div, 1j * eta * sparse.eye(nc)]).tocsr()
        self.Gfull = sparse.vstack([grid.grad, 1j * eta * sparse.eye(nc)]).tocsr()
        self._helm = splu((grid.lap_neumann - eta**2 * sparse.eye(nc)).tocsc())
        self._resolvents = {}
        self._dense = None

    def helmholtz(self, v):
        """Remove the eta-gradient part: ``v - G phi`` with ``B G phi = B v``."""
        phi = self._helm.solve(np.asarray(self.B @ v, dtype=complex))
        return v - self.Gfull @ phi

    def apply(self, v):
        return self.helmholtz(self.L @ v)

    def resolvent(self, mu, v):
        """``(mu + A)^{-1} v`` for solenoidal ``v`` (columns allowed)."""
        s = self._resolvents.get(mu)
        if s is None:
            s = ModeSystem(self.grid, SpectralParams(mu, self.xi, self.beta))
            self._resolvents[mu] = s
        b = np.zeros((self.grid.nstate,) + np.shape(v)[1:], dtype=complex)
        b[: self.grid.nvel] = v
        return s.solve_rhs(b)[: self.grid.nvel]

    @property
    def dense(self):
        """``(N, A_N)``: orthonormal basis of ``ker B`` and the operator in that basis."""
        if self._dense is None:
            N = null_space(self.B.toarray())
            AN = self.helmholtz(self.L @ N)
            self._dense = (N, N.conj().T @ AN)
        return self._dense


@functools.lru_cache(maxsize=256)
def mode_operator(grid, xi, beta) -> ModeOperator:
    return ModeOperator(grid, xi, beta)


def _operators(grid, axial, beta):
    return {k: mode_operator(grid, float(axial.xi[k]), float(beta)) for k in axial.active_modes(beta)}


def _check_zero_mode(modes, axial, beta):
    if beta == 0:
        scale = np.abs(modes).max()
        if scale > 0 and np.abs(modes[0]).max() > 1e-12 * scale:
            raise DegenerateModeError("beta = 0 needs fields with zero axial mean")


def leray_project(F: CylinderField, beta=None) -> CylinderField:
    """Per-mode projection onto discretely div_eta-free fields; p slots set to zero."""
    beta = F.spec.beta if beta is None else beta
    modes = F.to_modes(beta)
    _check_zero_mode(modes, F.axial, beta)
    nvel = F.grid.nvel
    out = np.zeros_like(modes)
    for k, op in _operators(F.grid, F.axial, beta).items():
        out[k, :nvel] = op.helmholtz(modes[k, :nvel])
    return CylinderField.from_modes(F.grid, F.axial, out, beta, F.spec)


# ---------------------------------------------------------------------------
# semigroup


def _velocity_modes(U: CylinderField, beta):
    modes = U.to_modes(beta)
    _check_zero_mode(modes, U.axial, beta)
    return modes[:, : U.grid.nvel]


def _to_field(U, vel_modes, beta):
    modes = np.zeros((U.axial.M, U.grid.nstate), complex)
    modes[:, : U.grid.nvel] = vel_modes
    return CylinderField.from_modes(U.grid, U.axial, modes, beta, U.spec)


def _cn(op, u, t, n):
    dt = t / n
    for _ in range(n):
        u = (4 / dt) * op.resolvent(2 / dt, u) - u
    return u


def semigroup_step(U0: CylinderField, t: float, beta=None, method="expm", substeps=None) -> CylinderField:
    """``e^{-tA} U0`` for solenoidal ``U0``.

    ``method="expm"`` uses the dense exponential on a basis of the discrete
    solenoidal space (coarse grids).  ``method="cn"`` uses Crank-Nicolson
    substeps through the mode resolvents (default ``substeps = ceil(100 t)``)
    and Richardson-combines ``n`` and ``2n`` substeps, which is fourth order.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return U0.with_data(U0.data.copy())
    beta = U0.spec.beta if beta is None else beta
    vm = _velocity_modes(U0, beta)
    out = np.zeros_like(vm)
    for k, op in _operators(U0.grid, U0.axial, beta).items():
        if method == "expm":
            N, A = op.dense
            out[k] = N @ (expm(-t * A) @ (N.conj().T @ vm[k]))
        elif method == "cn":
            n = substeps or max(1, math.ceil(100 * t))
            out[k] = (4 * _cn(op, vm[k], t, 2 * n) - _cn(op, vm[k], t, n)) / 3
        else:
            raise ValueError(f"unknown method {method!r}")
    return _to_field(U0, out, beta)


def random_solenoidal(grid, axial, beta, rng, spec=None, width=None) -> CylinderField:
    """Random axially localized field projected onto the solenoidal subspace."""
    width = width or axial.L / 6
    env = np.exp(-((axial.x / width) ** 2))
    data = env[:, None] * (rng.standard_normal((axial.M, grid.nstate)))
    data[:, grid.nvel :] = 0
    F = CylinderField(grid, axial, data, spec or MixedNormSpec(beta=beta))
    if beta == 0:
        F = F.with_data(F.data - F.data.mean(axis=0))
    return leray_project(F, beta)


def fit_rate(times, norms, t_min=1.0):
    """Least-squares slope of ``log norms`` over ``t >= t_min``."""
    times, norms = np.asarray(times), np.asarray(norms)
    m = (times >= t_min) & (norms > 0)
    return float(np.polyfit(times[m], np.log(norms[m]), 1)[0])


@dataclass
class DecayReport:
    times: np.ndarray
    norms: np.ndarray  # (n_samples, n_times)
    rates: list
    threshold: float
    beta: float

    @property
    def fitted_rate(self):
        return max(self.rates)


def decay_experiment(grid, axial, beta, alpha_bar_h, times, n_samples=10, seed=0, spec=None) -> DecayReport:
    """``|e^{-tA} U0|`` for random solenoidal ``U0`` with fitted exponential rates."""
    rng = np.random.default_rng(seed)
    spec = spec or MixedNormSpec(beta=beta)
    ops = _operators(grid, axial, beta)
    samples = [random_solenoidal(grid, axial, beta, rng, spec) for _ in range(n_samples)]
    vm = np.stack([_velocity_modes(U, beta) for U in samples], axis=-1)
    coords = {k: op.dense[0].conj().T @ vm[k] for k, op in ops.items()}
    norms = np.zeros((n_samples, len(times)))
    for j, t in enumerate(times):
        out = np.zeros_like(vm)
        for k, op in ops.items():
            N, A = op.dense
            out[k] = N @ (expm(-t * A) @ coords[k])
        for s in range(n_samples):
            norms[s, j] = _to_field(samples[s], out[..., s], beta).norm(spec)
    rates = [fit_rate(times, n) for n in norms]
    return DecayReport(np.asarray(times), norms, rates, alpha_bar_h - beta**2, beta)


# ---------------------------------------------------------------------------
# forced problem


@dataclass
class ForcingEnsemble:
    """Space-time forcings ``F_j(t) = sum_i c_ij(t) Phi_i`` in mode space.

    ``basis`` has shape ``(n_basis, M, nvel)`` (solenoidal, conjugated modes);
    ``coeffs(t)`` returns ``(n_basis, n_members)``.
    """

    basis: np.ndarray
    coeffs: object
    n_members: int

    def at(self, t):
        c = self.coeffs(t)
        return np.einsum("bkv,bj->kvj", self.basis, c)


def smooth_forcing_ensemble(grid, axial, beta, n_members, seed=0, n_basis=6, t_on=4.0) -> ForcingEnsemble:
    """Forcings from grid-independent analytic data, so refinements see the same ``F``.

    Each basis field is a product of a sine mode on the cross-section and a
    Gaussian axial envelope, Leray-projected on the given grid.  Time
    coefficients are ``sin^2(pi t / t_on) cos(w t + phase)`` on ``[0, t_on]``.
    """
    rng = np.random.default_rng(seed)
    nvel = grid.nvel
    basis = np.zeros((n_basis, axial.M, nvel), complex)
    spec = MixedNormSpec(beta=beta)
    for i in range(n_basis):
        kx, ky = rng.integers(1, 4, size=2)
        amp = rng.standard_normal(3)
        center, width = rng.uniform(-0.15, 0.15) * axial.L, rng.uniform(0.5, 1.5)

        def comp(X, Y, xn, a, kx=kx, ky=ky, center=center, width=width):
            return a * np.sin(kx * X * np.pi / grid.Lx) * np.sin(ky * Y * np.pi / grid.Ly) * np.exp(
                -(((xn - center) / width) ** 2)
            )

        F = CylinderField.from_function(
            grid,
            axial,
            {name: functools.partial(comp, a=a) for name, a in zip(("u1", "u2", "un"), amp)},
            spec,
        )
        F = F.with_data(np.exp(-beta * F.x)[:, None] * F.data)  # conjugated field is the analytic one
        if beta == 0:
            F = F.with_data(F.data - F.data.mean(axis=0))
        basis[i] = _velocity_modes(leray_project(F, beta), beta)
    C = rng.standard_normal((n_basis, n_members))
    W = rng.uniform(0.0, 3.0, size=(n_basis, n_members))
    ph = rng.uniform(0.0, 2 * np.pi, size=(n_basis, n_members))

    def coeffs(t):
        if t >= t_on:
            return np.zeros((n_basis, n_members))
        return C * np.sin(np.pi * t / t_on) ** 2 * np.cos(W * t + ph)

    return ForcingEnsemble(basis, coeffs, n_members)


@dataclass
class Trajectory:
    """Mode-space samples ``(K+1, M, nvel, members)`` of U, U_t and AU."""

    time_grid: TimeGrid
    U: np.ndarray
    Ut: np.ndarray
    AU: np.ndarray
    F: np.ndarray


def _field_norms(grid, axial, vel_modes, spec: MixedNormSpec):
    """Mixed norms of conjugated velocity modes ``(M, nvel, members)``."""
    if spec.q == 2.0 and spec.r == 2.0 and spec.weight.is_unit:
        return np.sqrt(axial.dx / axial.M * grid.h**2 * np.sum(np.abs(vel_modes) ** 2, axis=(0, 1)))
    planes = np.fft.ifft(vel_modes, axis=0)
    obs = grid.bundle("velocity", spec.weight)
    pn = np.stack([lr_norm(obs.matrix @ np.vstack([p, np.zeros((grid.nc,) + p.shape[1:])]), obs.weights, spec.r) for p in planes])
    return (axial.dx * np.sum(pn**spec.q, axis=0)) ** (1.0 / spec.q)


def _march(grid, axial, beta, forcing: ForcingEnsemble, tg: TimeGrid, on_step):
    """Crank-Nicolson from ``U(0) = 0``; calls ``on_step(k, U, Ut, AU, F)``."""
    ops = _operators(grid, axial, beta)
    dt = tg.dt
    times = tg.times
    F_prev = forcing.at(0.0)
    U = np.zeros_like(F_prev)
    AU = np.zeros_like(U)
    on_step(0, U, F_prev - AU, AU, F_prev)
    for n in range(1, tg.K + 1):
        F_next = forcing.at(times[n])
        Fbar = 0.5 * (F_prev + F_next)
        for k, op in ops.items():
            Y = (2 / dt) * op.resolvent(2 / dt, U[k] + 0.5 * dt * Fbar[k])
            U[k] = 2 * Y - U[k]
            AU[k] = op.apply(U[k])
        on_step(n, U, F_next - AU, AU, F_next)
        F_prev = F_next


def solve_cauchy(forcing: ForcingEnsemble, tg: TimeGrid, grid, axial, beta) -> Trajectory:
    """Trajectory of ``U_t + A U = F``, ``U(0) = 0`` for every ensemble member."""
    shape = (tg.K + 1,) + forcing.at(0.0).shape
    out = {name: np.zeros(shape, complex) for name in ("U", "Ut", "AU", "F")}

    def keep(n, U, Ut, AU, F):
        out["U"][n], out["Ut"][n], out["AU"][n], out["F"][n] = U, Ut, AU, F

    _march(grid, axial, beta, forcing, tg, keep)
    return Trajectory(tg, **out)


@dataclass
class MaxRegReport:
    ratios: dict  # (p, alpha_t) -> array over members
    time_grid: TimeGrid
    series: dict = field(default_factory=dict)  # name -> (K+1,) norms of member 0

    def summary(self, p, alpha_t=0.0):
        r = self.ratios[(p, alpha_t)]
        return {"max": float(r.max()), "median": float(np.median(r)), "min": float(r.min())}


def maxreg_ratio(
    forcing: ForcingEnsemble,
    tg: TimeGrid,
    grid,
    axial,
    beta,
    ps=(2.0,),
    alpha_ts=(0.0,),
    spec: MixedNormSpec | None = None,
) -> MaxRegReport:
    """``(|U| + |U_t| + |AU|) / |F|`` in ``L^p(0, T; L^q_beta(L^r_w))`` for each member.

    With ``alpha_t > 0`` all four fields carry the factor ``e^{alpha_t t}``.
    Zero forcings are excluded.
    """
    spec = spec or MixedNormSpec(beta=beta)
    plain = MixedNormSpec(spec.q, spec.r, 0.0, spec.weight)
    series = {name: np.zeros((tg.K + 1, forcing.n_members)) for name in ("U", "Ut", "AU", "F")}

    def record(n, U, Ut, AU, F):
        for name, v in (("U", U), ("Ut", Ut), ("AU", AU), ("F", F)):
            series[name][n] = _field_norms(grid, axial, v, plain)

    _march(grid, axial, beta, forcing, tg, record)
    ratios = {}
    for p in ps:
        for a in alpha_ts:
            nF = tg.lp_norm(series["F"], p, a)
            keep = nF > 0
            num = sum(tg.lp_norm(series[name], p, a) for name in ("U", "Ut", "AU"))
            ratios[(p, a)] = num[keep] / nF[keep]
    return MaxRegReport(ratios, tg, {k: v[:, 0] for k, v in series.items()})


def dense_maxreg_ratio(forcing: ForcingEnsemble, tg: TimeGrid, grid, axial, p=2.0):
    """Reference ratios for ``beta = 0`` by exact integration in the eigenbasis.

    ``F`` is taken piecewise linear between the time nodes and each Hermitian
    mode operator is diagonalized, so ``U`` is exact at the nodes; norms use
    the same quadrature as :func:`maxreg_ratio` with ``q = r = 2``.
    """
    ops = _operators(grid, axial, 0.0)
    dt, times = tg.dt, tg.times
    Fs = np.stack([forcing.at(t) for t in times])
    U = np.zeros_like(Fs)
    AU = np.zeros_like(Fs)
    for k, op in ops.items():
        N, A = op.dense
        mu, V = np.linalg.eigh(0.5 * (A + A.conj().T))
        Q = N @ V
        c = np.einsum("vm,tvj->tmj", Q.conj(), Fs[:, k])
        e = np.exp(-mu * dt)[:, None]
        phi1 = (-np.expm1(-mu * dt) / mu)[:, None]
        phi2 = (1 / mu - phi1[:, 0] / (mu * dt))[:, None]
        a = np.zeros_like(c)
        for n in range(1, len(times)):
            a[n] = e * a[n - 1] + phi1 * c[n - 1] + phi2 * (c[n] - c[n - 1])
        U[:, k] = np.einsum("vm,tmj->tvj", Q, a)
        AU[:, k] = np.einsum("vm,tmj->tvj", Q, mu[None, :, None] * a)
    Ut = Fs - AU
    spec = MixedNormSpec()
    n = {name: np.stack([_field_norms(grid, axial, v, spec) for v in arr]) for name, arr in (("U", U), ("Ut", Ut), ("AU", AU), ("F", Fs))}
    nF = tg.lp_norm(n["F"], p)
    return sum(tg.lp_norm(n[name], p) for name in ("U", "Ut", "AU")) / nF
