"""Staggered (MAC) discretization of a rectangular cross-section.

Unknown placement on the ``Nx x Ny`` cells of width ``h``:

* ``u1`` on interior x-faces, shape ``(Nx - 1, Ny)``
* ``u2`` on interior y-faces, shape ``(Nx, Ny - 1)``
* ``un`` and ``p`` at cell centers, shape ``(Nx, Ny)``

Velocity components vanish on the walls: normal components through the
omitted wall faces, tangential ones through ghost mirroring.  The pressure
carries no boundary condition.  A mode state is the flat complex vector
``[u1, u2, un, p]`` (C-order within each block).
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, DegenerateModeError, GridError
from .weights import PowerWeight, lr_norm, rect_integrals

log = logging.getLogger(__name__)

MIN_CELLS = 4


# ---------------------------------------------------------------------------
# one-dimensional building blocks


def _lap_interior_faces(n, h):
    """Second difference on the n-1 interior nodes, zero at both walls."""
    m = n - 1
    return sparse.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h**2


def _lap_cells(n, h, bc):
    d = -2.0 * np.ones(n)
    corner = -3.0 if bc == "dirichlet" else -1.0
    d[0] = d[-1] = corner
    return sparse.diags([np.ones(n - 1), d, np.ones(n - 1)], [-1, 0, 1]) / h**2


def _grad_cells_to_interior(n, h):
    """(p[k] - p[k-1]) / h for k = 1..n-1."""
    return sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h


def _embed_interior(n):
    """Pad n-1 interior face values with zero wall values."""
    return sparse.eye(n + 1, n - 1, k=-1, format="csr")


def _d_faces_to_cells(n, h):
    return sparse.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h


def _d_cells_to_faces(n, h, bc):
    """Cell-centered values differentiated onto all n+1 faces.

    ``dirichlet`` mirrors a ghost ``-v`` across the wall, ``neumann`` sets the
    wall derivative to zero, ``free`` copies the nearest interior difference.
    """
    D = sparse.lil_matrix((n + 1, n))
    for k in range(1, n):
        D[k, k - 1] = -1.0
        D[k, k] = 1.0
    if bc == "dirichlet":
        D[0, 0] = 2.0
        D[n, n - 1] = -2.0
    elif bc == "free":
        D[0, 0], D[0, 1] = -1.0, 1.0
        D[n, n - 2], D[n, n - 1] = -1.0, 1.0
    elif bc != "neumann":
        raise ValueError(f"unknown boundary kind {bc!r}")
    return D.tocsr() / h


def _lines(n, h, kind):
    """Control-volume breakpoints for cell ('c') or face ('f') locations."""
    if kind == "c":
        return h * np.arange(n + 1)
    return np.concatenate(([0.0], h * (np.arange(n) + 0.5), [n * h]))


# ---------------------------------------------------------------------------
# observables: linear maps from a source vector to staggered samples


@dataclass(frozen=True)
class Observable:
    """Linear samples ``matrix @ z`` with quadrature weights (area times weight).

    The norm ``(sum w |Mz|^r)^{1/r}`` is the weighted L^r norm of the sampled
    quantity; stacking observables gives the l^r combination of their norms,
    which for tensor quantities is the componentwise Euclidean norm at r = 2.
    """

    matrix: sparse.csr_matrix
    weights: np.ndarray

    def __call__(self, z):
        return self.matrix @ z

    def norm(self, z, r: float = 2.0):
        return lr_norm(self.matrix @ z, self.weights, r)

    @staticmethod
    def stack(parts: Sequence["Observable"]) -> "Observable":
        return Observable(
            sparse.vstack([p.matrix for p in parts]).tocsr(),
            np.concatenate([p.weights for p in parts]),
        )


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class CrossSectionGrid:
    """MAC grid on the rectangle ``(0, Lx) x (0, Ly)`` with square cells."""

    Lx: float
    Ly: float
    Nx: int
    Ny: int
    h: float = field(init=False)

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise GridError("extents must be positive")
        if self.Nx < MIN_CELLS or self.Ny < MIN_CELLS:
            raise GridError(f"need at least {MIN_CELLS} cells per direction")
        h = self.Lx / self.Nx
        if abs(self.Ny * h - self.Ly) > 4 * np.finfo(float).eps * self.Ly:
            raise GridError(
                f"non-square cells: Lx/Nx = {h!r} but Ly/Ny = {self.Ly / self.Ny!r}"
            )
        object.__setattr__(self, "h", h)

    # sizes -----------------------------------------------------------------
    @property
    def n1(self):
        return (self.Nx - 1) * self.Ny

    @property
    def n2(self):
        return self.Nx * (self.Ny - 1)

    @property
    def nc(self):
        return self.Nx * self.Ny

    @property
    def nvel(self):
        return self.n1 + self.n2 + self.nc

    @property
    def nstate(self):
        return self.nvel + self.nc

    @property
    def area(self):
        return self.Lx * self.Ly

    @property
    def slices(self):
        a, b, c = self.n1, self.n1 + self.n2, self.nvel
        return {"u1": slice(0, a), "u2": slice(a, b), "un": slice(b, c), "p": slice(c, c + self.nc)}

    @property
    def shapes(self):
        Nx, Ny = self.Nx, self.Ny
        return {"u1": (Nx - 1, Ny), "u2": (Nx, Ny - 1), "un": (Nx, Ny), "p": (Nx, Ny)}

    def coords(self, component):
        """Meshgrid of the unknown locations of ``component``."""
        h = self.h
        xc = h * (np.arange(self.Nx) + 0.5)
        yc = h * (np.arange(self.Ny) + 0.5)
        xi = h * np.arange(1, self.Nx)
        yi = h * np.arange(1, self.Ny)
        xs, ys = {"u1": (xi, yc), "u2": (xc, yi)}.get(component, (xc, yc))
        return np.meshgrid(xs, ys, indexing="ij")

    def sample(self, funcs, dtype=complex):
        """State vector from callables ``{"u1": f(x, y), ...}``; missing keys are zero."""
        z = np.zeros(self.nstate, dtype=dtype)
        for name, f in funcs.items():
            X, Y = self.coords(name)
            z[self.slices[name]] = np.broadcast_to(f(X, Y), X.shape).ravel()
        return z

    # operators -------------------------------------------------------------
    @functools.cached_property
    def _ops(self):
        Nx, Ny, h = self.Nx, self.Ny, self.h
        Ix, Iy = sparse.eye(Nx), sparse.eye(Ny)
        lap_u1 = sparse.kron(_lap_interior_faces(Nx, h), Iy) + sparse.kron(
            sparse.eye(Nx - 1), _lap_cells(Ny, h, "dirichlet")
        )
        lap_u2 = sparse.kron(_lap_cells(Nx, h, "dirichlet"), sparse.eye(Ny - 1)) + sparse.kron(
            Ix, _lap_interior_faces(Ny, h)
        )
        lap_dir = sparse.kron(_lap_cells(Nx, h, "dirichlet"), Iy) + sparse.kron(
            Ix, _lap_cells(Ny, h, "dirichlet")
        )
        lap_neu = sparse.kron(_lap_cells(Nx, h, "neumann"), Iy) + sparse.kron(
            Ix, _lap_cells(Ny, h, "neumann")
        )
        G1 = sparse.kron(_grad_cells_to_interior(Nx, h), Iy)
        G2 = sparse.kron(Ix, _grad_cells_to_interior(Ny, h))
        G = sparse.vstack([G1, G2]).tocsr()
        return {
            "lap_u1": lap_u1.tocsr(),
            "lap_u2": lap_u2.tocsr(),
            "lap_dir": lap_dir.tocsr(),
            "lap_neu": lap_neu.tocsr(),
            "grad": G,
            "div": (-G.T).tocsr(),
        }

    @property
    def grad(self):
        """Pressure gradient: cell centers -> interior faces (u1 then u2 rows)."""
        return self._ops["grad"]

    @property
    def div(self):
        """Divergence of (u1, u2): interior faces -> cell centers; equals ``-grad.T``."""
        return self._ops["div"]

    @property
    def lap_dirichlet(self):
        """Cell-centered Dirichlet Laplacian (ghost mirroring)."""
        return self._ops["lap_dir"]

    @property
    def lap_neumann(self):
        """Cell-centered Neumann Laplacian; equals ``div @ grad``."""
        return self._ops["lap_neu"]

    @functools.cached_property
    def lap_velocity(self):
        """Block-diagonal Dirichlet Laplacian acting on ``[u1, u2, un]``."""
        o = self._ops
        return sparse.block_diag([o["lap_u1"], o["lap_u2"], o["lap_dir"]], format="csr")

    def inner(self, a, b):
        """Cell-volume inner product ``h^2 sum a conj(b)``."""
        return self.h**2 * np.vdot(b, a)

    # weights and observables ----------------------------------------------
    def cell_weights(self, weight: PowerWeight = PowerWeight()):
        """Integrals of ``weight`` over each cell, shape ``(Nx, Ny)``."""
        return _weights_for(self, ("c", "c"), weight).reshape(self.Nx, self.Ny)

    def observable(self, source: str, derivs: str = "", weight: PowerWeight = PowerWeight()):
        """Samples of ``d/d{derivs} source`` with quadrature weights.

        ``source`` is a state component (``u1``, ``u2``, ``un``, ``p``), a
        bundle (``velocity``), or a cell array with a boundary kind
        (``cell``, ``cell_dirichlet``, ``cell_neumann``).  ``derivs`` lists
        derivative axes applied left to right, e.g. ``"xy"``.
        """
        return _observable(self, source, derivs, weight)

    def bundle(self, name: str, weight: PowerWeight = PowerWeight()):
        """Stacked observables used by the estimates.

        ``velocity``, ``grad_velocity``, ``hess_velocity``, ``grad_p``, ``p``.
        """
        return _bundle(self, name, weight)


@functools.lru_cache(maxsize=256)
def _weights_for(grid, kinds, weight):
    nx = grid.Nx if kinds[0] == "c" else grid.Nx + 1
    ny = grid.Ny if kinds[1] == "c" else grid.Ny + 1
    xl = _lines(grid.Nx, grid.h, kinds[0])
    yl = _lines(grid.Ny, grid.h, kinds[1])
    w = rect_integrals(weight, xl, yl)
    assert w.shape == (nx, ny)
    return w.ravel()


def _source(grid, source):
    """(matrix from source vector, location kinds, boundary kinds)."""
    Nx, Ny = grid.Nx, grid.Ny
    sl = grid.slices
    D, F = "dirichlet", "free"

    def select(name):
        s = sl[name]
        return sparse.eye(grid.nstate, format="csr")[s]

    if source == "u1":
        return sparse.kron(_embed_interior(Nx), sparse.eye(Ny)) @ select("u1"), ("f", "c"), (D, D)
    if source == "u2":
        return sparse.kron(sparse.eye(Nx), _embed_interior(Ny)) @ select("u2"), ("c", "f"), (D, D)
    if source == "un":
        return select("un"), ("c", "c"), (D, D)
    if source == "p":
        return select("p"), ("c", "c"), (F, F)
    bcs = {"cell": F, "cell_dirichlet": D, "cell_neumann": "neumann"}
    if source in bcs:
        b = bcs[source]
        return sparse.eye(grid.nc, format="csr"), ("c", "c"), (b, b)
    raise ValueError(f"unknown source {source!r}")


def _differentiate(grid, M, kinds, bcs, axis):
    n = grid.Nx if axis == 0 else grid.Ny
    other_kind = kinds[1 - axis]
    m = (grid.Ny if axis == 0 else grid.Nx) + (1 if other_kind == "f" else 0)
    if kinds[axis] == "f":
        D1, newk = _d_faces_to_cells(n, grid.h), "c"
    else:
        D1, newk = _d_cells_to_faces(n, grid.h, bcs[axis]), "f"
    D2 = sparse.kron(D1, sparse.eye(m)) if axis == 0 else sparse.kron(sparse.eye(m), D1)
    kinds = (newk, kinds[1]) if axis == 0 else (kinds[0], newk)
    other_bc = bcs[1 - axis] if bcs[1 - axis] == "dirichlet" else "free"
    bcs = ("free", other_bc) if axis == 0 else (other_bc, "free")
    return (D2 @ M).tocsr(), kinds, bcs


@functools.lru_cache(maxsize=512)
def _observable(grid, source, derivs, weight):
    if source == "velocity":
        return Observable.stack([_observable(grid, c, derivs, weight) for c in ("u1", "u2", "un")])
    M, kinds, bcs = _source(grid, source)
    for d in derivs:
        M, kinds, bcs = _differentiate(grid, M, kinds, bcs, "xy".index(d))
    return Observable(M.tocsr(), _weights_for(grid, kinds, weight))


@functools.lru_cache(maxsize=128)
def _bundle(grid, name, weight):
    vel = ("u1", "u2", "un")
    if name == "velocity":
        parts = [(c, "") for c in vel]
    elif name == "grad_velocity":
        parts = [(c, d) for c in vel for d in ("x", "y")]
    elif name == "hess_velocity":
        parts = [(c, d) for c in vel for d in ("xx", "xy", "yx", "yy")]
    elif name == "grad_p":
        parts = [("p", "x"), ("p", "y")]
    elif name == "p":
        parts = [("p", "")]
    else:
        raise ValueError(f"unknown bundle {name!r}")
    return Observable.stack([_observable(grid, c, d, weight) for c, d in parts])


def build_grid(Lx: float, Ly: float, Nx: int, Ny: int) -> CrossSectionGrid:
    """Construct a :class:`CrossSectionGrid`; raises :class:`GridError` on bad input."""
    return CrossSectionGrid(float(Lx), float(Ly), int(Nx), int(Ny))


# ---------------------------------------------------------------------------
# fields


@dataclass
class ModeField:
    """Complex ``(u1, u2, un, p)`` on a cross-section grid for one axial mode."""

    grid: CrossSectionGrid
    state: np.ndarray

    def __post_init__(self):
        self.state = np.asarray(self.state)
        if self.state.shape[0] != self.grid.nstate:
            raise ValueError(f"state length {self.state.shape[0]} != {self.grid.nstate}")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.nstate, dtype=complex))

    @classmethod
    def from_components(cls, grid, u1=0.0, u2=0.0, un=0.0, p=0.0):
        z = np.zeros(grid.nstate, dtype=complex)
        for name, val in (("u1", u1), ("u2", u2), ("un", un), ("p", p)):
            z[grid.slices[name]] = np.broadcast_to(val, grid.shapes[name]).ravel()
        return cls(grid, z)

    def _get(self, name):
        return self.state[self.grid.slices[name]].reshape(self.grid.shapes[name])

    u1 = property(lambda self: self._get("u1"))
    u2 = property(lambda self: self._get("u2"))
    un = property(lambda self: self._get("un"))
    p = property(lambda self: self._get("p"))

    @property
    def velocity(self):
        return self.state[: self.grid.nvel]

    def __add__(self, other):
        return ModeField(self.grid, self.state + other.state)

    def __sub__(self, other):
        return ModeField(self.grid, self.state - other.state)

    def __mul__(self, c):
        return ModeField(self.grid, self.state * c)

    __rmul__ = __mul__

    def conj(self):
        return ModeField(self.grid, np.conj(self.state))

    def norm(self, r=2.0, weight=PowerWeight(), part="velocity"):
        return float(self.grid.bundle(part, weight).norm(self.state, r))


# ---------------------------------------------------------------------------
# spectral thresholds


@dataclass(frozen=True)
class SpectralThresholds:
    alpha0: float
    alpha1: float

    @property
    def alpha_bar(self):
        return min(self.alpha0, self.alpha1)

    def as_dict(self):
        return {"alpha0": self.alpha0, "alpha1": self.alpha1, "alpha_bar": self.alpha_bar}


def _inverse_iteration(A, x0, shift=0.0, project=None, tol=1e-13, maxiter=500):
    """Smallest eigenvalue of SPD ``A`` above ``shift`` by shifted inverse iteration."""
    n = A.shape[0]
    lu = splu((A - shift * sparse.eye(n)).tocsc())
    x = x0 / np.linalg.norm(x0)
    rq_old = np.inf
    for it in range(maxiter):
        y = lu.solve(x)
        if project is not None:
            y = project(y)
        x = y / np.linalg.norm(y)
        rq = float(x @ (A @ x))
        if abs(rq - rq_old) <= tol * abs(rq):
            log.debug("inverse iteration converged in %d steps: %.15g", it + 1, rq)
            return rq
        rq_old = rq
    raise ConvergenceError(f"inverse iteration did not converge in {maxiter} steps")


def dirichlet_smallest(grid: CrossSectionGrid, maxiter: int = 500) -> float:
    """Smallest eigenvalue of the discrete Dirichlet Laplacian (``-Delta``)."""
    A = -grid.lap_dirichlet
    return _inverse_iteration(A, np.ones(grid.nc), maxiter=maxiter)


def neumann_smallest_positive(grid: CrossSectionGrid, maxiter: int = 500) -> float:
    """Smallest positive eigenvalue of the discrete Neumann Laplacian.

    Iterates on the mean-zero subspace; the constant kernel is deflated by
    projecting out the mean after every solve.
    """
    A = -grid.lap_neumann
    X, Y = grid.coords("p")
    x0 = (X / grid.Lx + Y / grid.Ly).ravel()
    x0 = x0 - x0.mean()
    tau = 0.01 * (math.pi / max(grid.Lx, grid.Ly)) ** 2
    return _inverse_iteration(A, x0, shift=-tau, project=lambda v: v - v.mean(), maxiter=maxiter)


def thresholds(grid: CrossSectionGrid) -> SpectralThresholds:
    return SpectralThresholds(dirichlet_smallest(grid), neumann_smallest_positive(grid))


def observed_orders(errors: Sequence[float]) -> list[float]:
    """Convergence orders ``log2(e_k / e_{k+1})`` for successive halvings of h."""
    return [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:])]


def threshold_convergence(Lx, Ly, counts: Sequence[int]):
    """Thresholds over a refinement sequence ``Nx in counts`` (Ny scaled to match).

    Returns a list of rows; ``order0``/``order1`` are Richardson estimates from
    three consecutive levels and ``None`` for the first two rows.
    """
    rows = []
    for Nx in counts:
        Ny = int(round(Nx * Ly / Lx))
        th = thresholds(build_grid(Lx, Ly, Nx, Ny))
        rows.append({"Nx": Nx, "Ny": Ny, "h": Lx / Nx, **th.as_dict()})
    for k, row in enumerate(rows):
        for key, name in (("alpha0", "order0"), ("alpha1", "order1")):
            if k < 2:
                row[name] = None
                continue
            a, b, c = rows[k - 2][key], rows[k - 1][key], row[key]
            row[name] = math.log2(abs(a - b) / abs(b - c)) if b != c else math.inf
    return rows


@dataclass(frozen=True)
class SectorInfo:
    eps_star: float
    valid: bool
    reason: str = ""


def sector_params(alpha_bar: float, beta: float, alpha: float) -> SectorInfo:
    """Half-aperture ``arctan(sqrt(alpha_bar - beta^2 - alpha) / beta)`` of the admissible sector.

    ``valid`` is false (with a reason) unless ``0 < beta < sqrt(alpha_bar)``
    and ``0 < alpha < alpha_bar - beta^2``.
    """
    reasons = []
    if not (0.0 < beta < math.sqrt(alpha_bar)):
        reasons.append(f"beta={beta} outside (0, sqrt(alpha_bar)={math.sqrt(alpha_bar):.6g})")
    if not (0.0 < alpha < alpha_bar - beta**2):
        reasons.append(f"alpha={alpha} outside (0, alpha_bar - beta^2={alpha_bar - beta**2:.6g})")
    slack = alpha_bar - beta**2 - alpha
    if beta > 0 and slack >= 0:
        eps = math.atan(math.sqrt(slack) / beta)
    elif beta == 0 and slack > 0:
        eps = math.pi / 2
    else:
        eps = math.nan
    return SectorInfo(eps, not reasons, "; ".join(reasons))


# ---------------------------------------------------------------------------
# Poincare constants


@dataclass(frozen=True)
class PoincareEstimate:
    """Sampled lower bound of the best Poincare constant."""

    constant: float
    ensemble_size: int
    refined: bool

    def __float__(self):
        return self.constant


def _poincare_r2(grid, bc_kind, weight, tol=1e-12, maxiter=2000):
    src = "cell_dirichlet" if bc_kind == "dirichlet" else "cell_neumann"
    grad = grid.observable(src, "x", weight), grid.observable(src, "y", weight)
    K = sum(o.matrix.T @ sparse.diags(o.weights) @ o.matrix for o in grad).tocsc()
    W = grid.cell_weights(weight).ravel()
    n = grid.nc
    if bc_kind == "dirichlet":
        lu = splu(K)
        solve = lu.solve
    else:
        e = np.ones((n, 1))
        bordered = sparse.bmat([[K, sparse.csc_matrix(e)], [sparse.csc_matrix(e.T), None]]).tocsc()
        lu = splu(bordered)

        def solve(b):
            b = b - b.mean()
            return lu.solve(np.concatenate([b, [0.0]]))[:n]

    X, Y = grid.coords("p")
    u = np.sin(np.pi * X / grid.Lx) * np.sin(np.pi * Y / grid.Ly) if bc_kind == "dirichlet" else (
        X / grid.Lx + Y / grid.Ly
    )
    u = u.ravel() - (0 if bc_kind == "dirichlet" else u.mean())
    rq_old = 0.0
    for _ in range(maxiter):
        u = solve(W * u)
        u /= np.linalg.norm(u)
        rq = float(u @ (W * u)) / float(u @ (K @ u))
        if abs(rq - rq_old) <= tol * rq:
            return math.sqrt(rq), u
        rq_old = rq
    raise ConvergenceError("Poincare power iteration did not converge")


def poincare_constant(
    grid: CrossSectionGrid,
    bc_kind: str = "dirichlet",
    r: float = 2.0,
    weight: PowerWeight = PowerWeight(),
    ensemble: int = 64,
    seed: int = 0,
) -> PoincareEstimate:
    """Best constant in ``||u||_{r,w} <= c ||grad u||_{r,w}``, sampled from below.

    ``bc_kind`` is ``dirichlet`` (zero trace) or ``mean_zero`` (vanishing
    unweighted mean).  For r = 2 the ensemble is refined by power iteration on
    the generalized Rayleigh quotient, which yields the exact discrete
    constant; for other r only the ensemble maximum is reported.
    """
    if bc_kind not in ("dirichlet", "mean_zero"):
        raise ValueError(f"unknown bc_kind {bc_kind!r}")
    if ensemble < 1:
        raise ValueError("empty ensemble")
    if not weight.in_ar(r):
        raise ValueError(f"degenerate weight {weight.ident} for r={r}")
    src = "cell_dirichlet" if bc_kind == "dirichlet" else "cell_neumann"
    gx, gy = grid.observable(src, "x", weight), grid.observable(src, "y", weight)
    cellw = grid.cell_weights(weight).ravel()

    def ratio(u):
        num = lr_norm(u, cellw, r)
        den = (lr_norm(gx(u), gx.weights, r) ** r + lr_norm(gy(u), gy.weights, r) ** r) ** (1 / r)
        return float(num / den)

    rng = np.random.default_rng(seed)
    X, Y = grid.coords("p")
    best = 0.0
    candidates = []
    for _ in range(ensemble):
        kx, ky = rng.integers(1, 4, size=2)
        coef = rng.standard_normal(3)
        if bc_kind == "dirichlet":
            u = np.sin(kx * np.pi * X / grid.Lx) * np.sin(ky * np.pi * Y / grid.Ly)
        else:
            u = coef[1] * np.cos(kx * np.pi * X / grid.Lx) + coef[2] * np.cos(ky * np.pi * Y / grid.Ly)
        u = coef[0] * u + 0.05 * rng.standard_normal(X.shape)
        candidates.append(u.ravel())
    refined = False
    if r == 2.0:
        c2, u2 = _poincare_r2(grid, bc_kind, weight)
        candidates.append(u2)
        refined = True
    elif weight.in_ar(2.0):
        candidates.append(_poincare_r2(grid, bc_kind, weight)[1])
    for u in candidates:
        if bc_kind == "mean_zero":
            u = u - u.mean()
        best = max(best, ratio(u))
    return PoincareEstimate(best, ensemble, refined)


# ---------------------------------------------------------------------------
# divergence problem


def bump(grid: CrossSectionGrid):
    """Smooth interior bump with unit discrete integral, shape ``(Nx, Ny)``."""
    X, Y = grid.coords("p")
    rad = 0.25 * min(grid.Lx, grid.Ly)
    rho2 = ((X - grid.Lx / 2) ** 2 + (Y - grid.Ly / 2) ** 2) / rad**2
    w = np.zeros_like(X)
    inside = rho2 < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    return w / (grid.h**2 * w.sum())


@functools.lru_cache(maxsize=32)
def _aux_stokes_lu(grid):
    """Factorization of the bordered Stokes problem used by :func:`div_solve`."""
    n = grid.n1 + grid.n2
    Lp = -sparse.block_diag([grid._ops["lap_u1"], grid._ops["lap_u2"]])
    e = sparse.csc_matrix(np.ones((grid.nc, 1)))
    M = sparse.bmat(
        [[Lp, grid.grad, None], [grid.div, None, e], [None, e.T, None]], format="csc"
    )
    return splu(M), n


def div_solve(grid: CrossSectionGrid, g, eta: complex) -> np.ndarray:
    """A velocity ``[u1, u2, un]`` with ``div' u' + i eta un = g`` and zero walls.

    Splits ``g = (g - gbar w) + gbar w`` with the unit-integral bump ``w``,
    solves ``div' u' = g - gbar w`` through an auxiliary Stokes problem and
    sets ``un = gbar w / (i eta)``.  The map ``g -> u`` is linear.
    """
    if eta == 0:
        raise DegenerateModeError("div_solve needs eta != 0")
    g = np.asarray(g, dtype=complex).reshape(grid.nc)
    gbar = grid.h**2 * g.sum()
    w = bump(grid).ravel()
    lu, n = _aux_stokes_lu(grid)
    rhs = np.concatenate([np.zeros(n, complex), g - gbar * w, [0.0]])
    sol = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    uprime = sol[:n]
    un = gbar * w / (1j * eta)
    return np.concatenate([uprime, un])


def div_eta(grid: CrossSectionGrid, velocity, eta: complex):
    """``div' u' + i eta un`` at cell centers for a velocity ``[u1, u2, un]``."""
    n = grid.n1 + grid.n2
    return grid.div @ velocity[:n] + 1j * eta * velocity[n : grid.nvel]


@functools.lru_cache(maxsize=32)
def _neumann_lu(grid):
    e = sparse.csc_matrix(np.ones((grid.nc, 1)))
    M = sparse.bmat([[-grid.lap_neumann, e], [e.T, None]], format="csc")
    return splu(M)


def neumann_solve(grid: CrossSectionGrid, g):
    """Mean-zero ``phi`` with ``-Delta_N phi = g - mean(g)``."""
    g = np.asarray(g).reshape(grid.nc)
    b = np.concatenate([g - g.mean(), [0.0]])
    lu = _neumann_lu(grid)
    if np.iscomplexobj(b):
        return lu.solve(b.real)[:-1] + 1j * lu.solve(b.imag)[:-1]
    return lu.solve(b)[:-1]


class SolenoidalProjector:
    """Orthogonal (Euclidean) projector onto ``{div' u' + i eta un = 0}``.

    With ``B = [div, i eta I]`` the projector is ``I - B^H (B B^H)^{-1} B`` and
    ``B B^H = -Delta_N + |eta|^2`` is SPD for ``eta != 0``.  Walls stay zero
    since only interior unknowns are represented.
    """

    def __init__(self, grid: CrossSectionGrid, eta: complex):
        if eta == 0:
            raise DegenerateModeError("projector needs eta != 0")
        self.grid, self.eta = grid, eta
        nc = grid.nc
        self.B = sparse.hstack([grid.div, 1j * eta * sparse.eye(nc)]).tocsr()
        self._lu = splu((-grid.lap_neumann + abs(eta) ** 2 * sparse.eye(nc)).tocsc())

    def _solve(self, b):
        return self._lu.solve(b.real) + 1j * self._lu.solve(b.imag)

    def __call__(self, velocity):
        v = np.asarray(velocity, dtype=complex)
        return v - self.B.conj().T @ self._solve(self.B @ v)
