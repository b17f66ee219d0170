"""Axial Fourier synthesis on the truncated cylinder ``Sigma x [-L, L)``.

Fields are stored plane by plane in physical variables ``U``.  The
exponentially weighted unknown ``u = e^{beta x} U`` is transformed along the
axis, each frequency ``xi_k = pi k / L`` is solved with the mode system at
``eta = xi_k + i beta`` and the result is transformed back.  The Nyquist
frequency has no conjugate partner and is discarded, so real data stay real.
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.linalg import LinearOperator, eigsh

from .cross_section import CrossSectionGrid, ModeField, SolenoidalProjector, build_grid
from .errors import DegenerateModeError, SupportError
from .mode_solver import ModeSystem, SpectralParams, _derivative_rhs
from .weights import MixedNormSpec, PowerWeight, lr_norm, mixed_norm

log = logging.getLogger(__name__)

SEAM_TOL = 1e-6
SNAPSHOT_MAGIC = b"SCYLFLD1"


def _workers(workers):
    if workers is None:
        workers = min(4, os.cpu_count() or 1)
    return max(1, int(workers))


@dataclass(frozen=True)
class AxialGrid:
    """Periodic axial grid of ``M`` points on ``[-L, L)``."""

    L: float
    M: int

    def __post_init__(self):
        if self.M < 4 or self.M & (self.M - 1):
            raise ValueError(f"M must be a power of two >= 4, got {self.M}")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self):
        return 2 * self.L / self.M

    @property
    def x(self):
        return -self.L + self.dx * np.arange(self.M)

    @property
    def xi(self):
        """Frequencies in FFT order; ``xi[k] = pi k / L``."""
        return 2 * np.pi * np.fft.fftfreq(self.M, d=self.dx)

    @property
    def nyquist(self):
        return self.M // 2

    def active_modes(self, beta):
        """FFT indices that are solved: all but Nyquist, and not ``xi = 0`` when ``beta = 0``."""
        return [k for k in range(self.M) if k != self.nyquist and not (beta == 0 and k == 0)]


@dataclass
class CylinderField:
    """Stacked plane states, ``data[j]`` is the mode-field layout at ``x[j]``."""

    grid: CrossSectionGrid
    axial: AxialGrid
    data: np.ndarray
    spec: MixedNormSpec = field(default_factory=MixedNormSpec)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (self.axial.M, self.grid.nstate):
            raise ValueError(f"data shape {self.data.shape} != {(self.axial.M, self.grid.nstate)}")

    @classmethod
    def zeros(cls, grid, axial, spec=None):
        return cls(grid, axial, np.zeros((axial.M, grid.nstate), complex), spec or MixedNormSpec())

    @classmethod
    def from_function(cls, grid, axial, funcs, spec=None):
        """Sample ``{"u1": f(x, y, xn), ...}`` on every plane."""
        data = np.zeros((axial.M, grid.nstate), complex)
        for name, fun in funcs.items():
            X, Y = grid.coords(name)
            for j, xn in enumerate(axial.x):
                data[j, grid.slices[name]] = np.broadcast_to(fun(X, Y, xn), X.shape).ravel()
        return cls(grid, axial, data, spec or MixedNormSpec())

    @property
    def x(self):
        return self.axial.x

    @property
    def dx(self):
        return self.axial.dx

    def with_data(self, data):
        return replace(self, data=np.asarray(data, dtype=complex))

    def plane(self, j) -> ModeField:
        return ModeField(self.grid, self.data[j])

    def to_modes(self, beta=0.0):
        """Axial FFT of ``e^{beta x} data``."""
        return np.fft.fft(np.exp(beta * self.x)[:, None] * self.data, axis=0)

    @classmethod
    def from_modes(cls, grid, axial, modes, beta=0.0, spec=None):
        data = np.exp(-beta * axial.x)[:, None] * np.fft.ifft(modes, axis=0)
        return cls(grid, axial, data, spec or MixedNormSpec())

    def plane_norms(self, r=2.0, weight=PowerWeight(), part="velocity"):
        obs = self.grid.bundle(part, weight)
        return lr_norm(obs.matrix @ self.data.T, obs.weights, r)

    def norm(self, spec: MixedNormSpec | None = None):
        return mixed_norm(self, spec or self.spec)

    def __add__(self, other):
        return self.with_data(self.data + other.data)

    def __sub__(self, other):
        return self.with_data(self.data - other.data)

    def __mul__(self, c):
        return self.with_data(self.data * c)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# resolvent


class CylinderResolvent:
    """Mode systems of ``lam + A`` at every active axial frequency.

    Factorizations are built on first use and kept; ``apply`` solves all
    modes (optionally in threads) and reassembles in FFT order, so results do
    not depend on the number of workers.
    """

    def __init__(self, grid, axial, lam, beta, workers=None):
        self.grid, self.axial = grid, axial
        self.lam, self.beta = complex(lam), float(beta)
        self.workers = _workers(workers)
        self.modes = axial.active_modes(self.beta)
        self._systems = {}

    def system(self, k) -> ModeSystem:
        s = self._systems.get(k)
        if s is None:
            s = ModeSystem(self.grid, SpectralParams(self.lam, float(self.axial.xi[k]), self.beta))
            self._systems[k] = s
        return s

    def _map(self, fn, ks):
        if self.workers == 1 or len(ks) < 2:
            return [fn(k) for k in ks]
        for k in ks:  # factorize serially, solve concurrently
            self.system(k)
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(fn, ks))

    def solve_modes(self, fhat):
        """Solve every active mode; ``fhat`` has shape ``(M, nstate)`` or ``(M, nstate, m)``."""
        out = np.zeros_like(fhat, dtype=complex)
        res = self._map(lambda k: self.system(k).solve_rhs(fhat[k]), self.modes)
        for k, z in zip(self.modes, res):
            out[k] = z
        return out


def check_support(F: CylinderField, beta: float):
    """Raise :class:`SupportError` if ``e^{beta x} F`` is not confined to ``|x| <= L/2``."""
    w = np.exp(beta * F.x)[:, None] * F.data
    plane_max = np.abs(w).max(axis=1)
    top = plane_max.max()
    outer = np.abs(F.x) > F.axial.L / 2
    if top > 0 and plane_max[outer].max(initial=0.0) > SEAM_TOL * top:
        raise SupportError(
            f"weighted forcing reaches {plane_max[outer].max() / top:.2e} of its maximum "
            f"outside |x| <= L/2"
        )


def resolvent_apply(F: CylinderField, lam, beta=None, resolvent: CylinderResolvent | None = None, check=True):
    """``(U, P)`` solving ``lam U - Delta U + grad P = F``, ``div U = 0`` on the cylinder.

    The p slots of ``F`` are read as divergence data (normally zero).  With
    ``beta = 0`` the ``xi = 0`` mode is excluded and ``F`` must have no
    axial mean.  Returns ``U`` (p slots zero) and ``P`` of shape ``(M, Nx, Ny)``.
    """
    beta = F.spec.beta if beta is None else beta
    if check:
        check_support(F, beta)
    res = resolvent or CylinderResolvent(F.grid, F.axial, lam, beta)
    fhat = F.to_modes(beta)
    if beta == 0:
        scale = np.abs(fhat).max()
        if scale > 0 and np.abs(fhat[0]).max() > 1e-12 * scale:
            raise DegenerateModeError("beta = 0 needs forcing with zero axial mean")
    zhat = res.solve_modes(fhat)
    sol = CylinderField.from_modes(F.grid, F.axial, zhat, beta, F.spec)
    nvel = F.grid.nvel
    P = sol.data[:, nvel:].reshape(F.axial.M, F.grid.Nx, F.grid.Ny).copy()
    sol.data[:, nvel:] = 0
    return sol, P


def cylinder_residual(U: CylinderField, P, F: CylinderField, lam, beta):
    """Relative residual of the discrete cylinder problem, all equation blocks."""
    data = U.data.copy()
    data[:, U.grid.nvel :] = np.asarray(P).reshape(U.axial.M, -1)
    zhat = U.with_data(data).to_modes(beta)
    fhat = F.to_modes(beta)
    num = den = 0.0
    for k in U.axial.active_modes(beta):
        K = ModeSystem(U.grid, SpectralParams(lam, float(U.axial.xi[k]), beta)).matrix
        num += np.linalg.norm(K @ zhat[k] - fhat[k]) ** 2
        den += np.linalg.norm(fhat[k]) ** 2
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


# ---------------------------------------------------------------------------
# resolvent norms


@dataclass(frozen=True)
class ResolventEstimate:
    lam: complex
    norm: float
    product: float
    ensemble_size: int
    method: str
    seed: int


def _mode_norm_power(system: ModeSystem, projector: SolenoidalProjector, rng, tol=1e-10):
    """Largest singular value of ``f -> u`` restricted to div_eta-free ``f``."""
    grid = system.grid
    nvel, nstate = grid.nvel, grid.nstate

    def S(v):
        b = np.zeros(nstate, complex)
        b[:nvel] = v
        return system.solve_rhs(b, check=False)[:nvel]

    def SH(v):
        b = np.zeros(nstate, complex)
        b[:nvel] = v
        return system.solve_rhs(b, trans="H", check=False)[:nvel]

    def mv(v):
        v = projector(np.ravel(v))
        return projector(SH(S(v)))

    op = LinearOperator((nvel, nvel), matvec=mv, dtype=complex)
    v0 = projector(rng.standard_normal(nvel) + 1j * rng.standard_normal(nvel))
    vals, vecs = eigsh(op, k=1, which="LM", v0=v0, tol=tol, maxiter=2000)
    return math.sqrt(max(vals[0].real, 0.0)), vecs[:, 0]


def resolvent_norm_estimate(
    grid,
    axial,
    lam,
    beta,
    alpha,
    spec: MixedNormSpec | None = None,
    ensemble_size=8,
    seed=0,
    workers=None,
) -> ResolventEstimate:
    """Estimate ``|lam + alpha| ||(lam + A)^{-1}||`` on discretely solenoidal fields.

    For ``q = r = 2`` and the unit weight the norm is block diagonal over the
    axial modes; each block is maximized by Lanczos iteration on the normal
    operator and the result is exact up to the iteration tolerance.  Other
    norms use a random solenoidal ensemble (seeded with the worst L^2 mode),
    which gives a lower bound.
    """
    if ensemble_size < 8:
        raise ValueError("ensemble_size must be at least 8")
    spec = spec or MixedNormSpec(beta=beta)
    res = CylinderResolvent(grid, axial, lam, beta, workers)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(2**32, size=axial.M)
    projectors = {}

    def proj(k):
        if k not in projectors:
            projectors[k] = SolenoidalProjector(grid, complex(axial.xi[k], beta))
        return projectors[k]

    for k in res.modes:
        proj(k)
    per_mode = res._map(
        lambda k: _mode_norm_power(res.system(k), proj(k), np.random.default_rng(seeds[k])), res.modes
    )
    norms = [n for n, _ in per_mode]
    kmax = int(np.argmax(norms))
    l2 = float(norms[kmax])
    if spec.q == 2.0 and spec.r == 2.0 and spec.weight.is_unit:
        return ResolventEstimate(complex(lam), l2, abs(lam + alpha) * l2, ensemble_size, "lanczos", seed)

    # conjugated variables: the e^{beta x} factor is already absorbed
    plain = MixedNormSpec(spec.q, spec.r, 0.0, spec.weight)
    nvel = grid.nvel
    best = 0.0
    candidates = []
    worst_k, worst_v = res.modes[kmax], per_mode[kmax][1]
    fhat = np.zeros((axial.M, grid.nstate), complex)
    fhat[worst_k, :nvel] = worst_v
    candidates.append(fhat)
    for _ in range(ensemble_size - 1):
        fhat = np.zeros((axial.M, grid.nstate), complex)
        envelope = np.exp(-((axial.x - rng.uniform(-0.25, 0.25) * axial.L) ** 2) / rng.uniform(0.5, 4.0))
        ehat = np.fft.fft(envelope)
        for k in res.modes:
            v = rng.standard_normal(nvel) + 1j * rng.standard_normal(nvel)
            fhat[k, :nvel] = ehat[k] * proj(k)(v)
        candidates.append(fhat)
    for fhat in candidates:
        zhat = res.solve_modes(fhat)
        f = CylinderField(grid, axial, np.fft.ifft(fhat, axis=0), plain)
        u = CylinderField(grid, axial, np.fft.ifft(zhat, axis=0), plain)
        u.data[:, nvel:] = 0
        best = max(best, u.norm() / f.norm())
    return ResolventEstimate(complex(lam), best, abs(lam + alpha) * best, ensemble_size, "ensemble", seed)


def dense_resolvent_norm(grid, axial, lam) -> float:
    """Exact L^2 norm of the ``beta = 0`` resolvent from dense Hermitian eigenvalues.

    On each mode the Stokes operator restricted to ``ker B`` is
    ``N^H (xi^2 - Delta) N`` for an orthonormal basis ``N``; the resolvent norm
    is ``max 1 / |lam + mu|`` over its eigenvalues.  Intended for coarse grids.
    """
    lap = -grid.lap_velocity.toarray()
    best = 0.0
    for k in axial.active_modes(0.0):
        xi = float(axial.xi[k])
        B = SolenoidalProjector(grid, complex(xi, 0.0)).B.toarray()
        N = null_space(B)
        mu = np.linalg.eigvalsh(N.conj().T @ (lap + xi**2 * np.eye(grid.nvel)) @ N)
        best = max(best, float(np.max(1.0 / np.abs(lam + mu))))
    return best


# ---------------------------------------------------------------------------
# multipliers


_COMPONENTS = ("velocity", "grad_velocity", "hess_velocity", "velocity", "grad_p", "p")


@dataclass
class MultiplierSample:
    """Values of the six multiplier components on their staggered locations."""

    xi: float
    lam: complex
    values: list
    weights: list

    def component_norms(self, r=2.0):
        return [float(lr_norm(v, w, r)) for v, w in zip(self.values, self.weights)]

    def norm(self, r=2.0):
        return float(sum(self.component_norms(r)))

    def stacked(self):
        return np.concatenate(self.values), np.concatenate(self.weights)


def _combine(grid, weight, terms):
    vals, wts = [], []
    for name, parts in zip(_COMPONENTS, terms):
        obs = grid.bundle(name, weight)
        vals.append(sum(c * (obs.matrix @ z) for c, z in parts))
        wts.append(obs.weights)
    return vals, wts


def _multiplier_terms(params, z, w=None):
    lam, xi, eta, a = params.lam, params.xi, params.eta, params.alpha
    if w is None:
        return [[(lam + a, z)], [(xi, z)], [(1, z)], [(xi**2, z)], [(1, z)], [(eta, z)]]
    return [
        [(xi * (lam + a), w)],
        [(xi, z), (xi**2, w)],
        [(xi, w)],
        [(2 * xi**2, z), (xi**3, w)],
        [(xi, w)],
        [(xi, z), (xi * eta, w)],
    ]


def multiplier_eval(grid, xi, lam, beta, alpha, f, weight=PowerWeight()) -> MultiplierSample:
    """``m_lam(xi) f``: (lam+alpha) a f, xi grad a f, grad^2 a f, xi^2 a f, grad b f, eta b f."""
    params = SpectralParams(lam, xi, beta, alpha)
    z = ModeSystem(grid, params).solve(f).state
    vals, wts = _combine(grid, weight, _multiplier_terms(params, z))
    return MultiplierSample(float(xi), complex(lam), vals, wts)


def multiplier_derivative_eval(grid, xi, lam, beta, alpha, f, weight=PowerWeight()) -> MultiplierSample:
    """``xi d/dxi m_lam(xi) f`` from the solution and its xi-derivative."""
    params = SpectralParams(lam, xi, beta, alpha)
    system = ModeSystem(grid, params)
    z = system.solve(f).state
    w = system.solve_rhs(_derivative_rhs(grid, params, z))
    vals, wts = _combine(grid, weight, _multiplier_terms(params, z, w))
    return MultiplierSample(float(xi), complex(lam), vals, wts)


class MultiplierMap:
    """``f -> m_lam(xi) f`` (or ``xi m'_lam(xi) f``) as a batched linear map.

    Input: velocity forcings in state layout, shape ``(nstate,)`` or
    ``(nstate, m)``.  Output: stacked component values.
    """

    def __init__(self, grid, xi, lam, beta, alpha, weight=PowerWeight(), derivative=False):
        self.grid, self.weight, self.derivative = grid, weight, derivative
        self.params = SpectralParams(lam, xi, beta, alpha)
        self._system = None

    @property
    def system(self):
        if self._system is None:
            self._system = ModeSystem(self.grid, self.params)
        return self._system

    def __call__(self, F):
        F = np.asarray(F, dtype=complex)
        b = F.copy()
        b[self.grid.nvel :] = 0
        Z = self.system.solve_rhs(b)
        W = None
        if self.derivative:
            cols = Z if Z.ndim == 2 else Z[:, None]
            W = np.stack([_derivative_rhs(self.grid, self.params, c) for c in cols.T], axis=1)
            W = self.system.solve_rhs(W)
            W = W if Z.ndim == 2 else W[:, 0]
        vals, _ = _combine(self.grid, self.weight, _multiplier_terms(self.params, Z, W))
        return np.concatenate(vals, axis=0)

    def output_weights(self):
        return np.concatenate([self.grid.bundle(n, self.weight).weights for n in _COMPONENTS])


def multiplier_family(grid, lam, xis, beta, alpha, weight=PowerWeight()):
    """``{m_lam(xi), xi m'_lam(xi)}`` over the sample frequencies ``xis``."""
    fam = []
    for xi in xis:
        fam.append(MultiplierMap(grid, xi, lam, beta, alpha, weight))
        fam.append(MultiplierMap(grid, xi, lam, beta, alpha, weight, derivative=True))
    return fam


# ---------------------------------------------------------------------------
# R-bounds


def standard_ensemble(dim, low=-3.0, high=0.0):
    """Complex Gaussian vectors with log-uniform scales in ``[10^low, 10^high]``.

    The spread of scales lets a single vector dominate a draw, which is how
    the supremum over a family is approached.
    """

    def sample(rng, n):
        X = rng.standard_normal((dim, n)) + 1j * rng.standard_normal((dim, n))
        return X * 10.0 ** rng.uniform(low, high, size=n)

    return sample


def sign_patterns(N, rng, draws=None, exhaustive_max=10):
    """All ``2^N`` sign vectors if ``N <= exhaustive_max``, else ``draws`` random ones."""
    if N <= exhaustive_max:
        idx = np.arange(2**N)[:, None]
        return 1.0 - 2.0 * ((idx >> np.arange(N)[None, :]) & 1)
    draws = draws or 1024
    return rng.choice([-1.0, 1.0], size=(draws, N))


def rademacher_rbound(
    family,
    q=2.0,
    trials=64,
    N=8,
    *,
    sample_x,
    norm_x,
    norm_y,
    seed=0,
    sign_draws=None,
    exhaustive_max=10,
):
    """Empirical lower bound of the R-bound of ``family``.

    Each trial draws ``N`` operators (with repetition) and ``N`` vectors from
    ``sample_x``; the L^q average over sign vectors of
    ``|sum eps_j T_j x_j|_Y`` is divided by that of ``|sum eps_j x_j|_X``.
    Returns the maximum over trials.  ``norm_x``/``norm_y`` map a 2-D array of
    column vectors to their norms.
    """
    if not family:
        raise ValueError("empty family")
    if trials < 64:
        raise ValueError("trials must be at least 64")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        idx = rng.integers(len(family), size=N)
        X = sample_x(rng, N)
        Y = None
        for t in np.unique(idx):
            cols = np.flatnonzero(idx == t)
            out = family[t](X[:, cols])
            if Y is None:
                Y = np.zeros((out.shape[0], N), dtype=complex)
            Y[:, cols] = out
        S = sign_patterns(N, rng, sign_draws, exhaustive_max)
        den = np.mean(norm_x(X @ S.T) ** q) ** (1 / q)
        if not den > 0:
            raise ValueError("degenerate denominator: all sampled vectors vanish")
        num = np.mean(norm_y(Y @ S.T) ** q) ** (1 / q)
        best = max(best, float(num / den))
    return best


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path, field: CylinderField, **meta):
    """Binary snapshot: magic, uint32 header length, JSON header, ``<c16`` payload."""
    g, a = field.grid, field.axial
    header = {
        "dims": {"Nx": g.Nx, "Ny": g.Ny, "M": a.M, "nstate": g.nstate},
        "extents": {"Lx": g.Lx, "Ly": g.Ly, "L": a.L},
        "beta": field.spec.beta,
        "layout": "planes x [u1, u2, un, p], C order",
        **meta,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(np.ascontiguousarray(field.data, dtype="<c16").tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(field, header)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a field snapshot")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<c16")
    d, e = header["dims"], header["extents"]
    grid = build_grid(e["Lx"], e["Ly"], d["Nx"], d["Ny"])
    axial = AxialGrid(e["L"], d["M"])
    data = payload.reshape(d["M"], d["nstate"]).astype(complex)
    return CylinderField(grid, axial, data, MixedNormSpec(beta=header["beta"])), header
