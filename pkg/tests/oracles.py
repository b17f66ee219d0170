"""Independent reference values used by the tests.

Everything here is derived without the package's discrete operators: closed
forms, symbolic manufactured solutions and textbook eigenvalues.
"""

import math

import numpy as np
import sympy as sp

from stokescyl import build_grid
from stokescyl.mode_solver import ModeSystem, SpectralParams

x, y = sp.symbols("x y", real=True)

# Dirichlet velocity, generic pressure; not divergence free, so g is nonzero.
MMS_FIELDS = {
    "u1": sp.sin(x) * sp.sin(2 * y),
    "u2": sp.sin(2 * x) * sp.sin(y),
    "un": (1 + x) * sp.sin(x) * sp.sin(y),
    "p": sp.cos(x) * sp.cos(y) + x * y / 4,
}


def dirichlet_eigen(Lx, Ly):
    return math.pi**2 * (1 / Lx**2 + 1 / Ly**2)


def neumann_eigen(Lx, Ly):
    return math.pi**2 / max(Lx, Ly) ** 2


def mms_data(lam, eta):
    """Callables for the exact fields and the forcing ``(f1, f2, fn, g)``."""
    u1, u2, un, p = (MMS_FIELDS[k] for k in ("u1", "u2", "un", "p"))
    shift = sp.sympify(complex(lam + eta**2))
    ie = sp.I * sp.sympify(complex(eta))

    def lap(v):
        return sp.diff(v, x, 2) + sp.diff(v, y, 2)

    forcing = {
        "u1": shift * u1 - lap(u1) + sp.diff(p, x),
        "u2": shift * u2 - lap(u2) + sp.diff(p, y),
        "un": shift * un - lap(un) + ie * p,
        "p": sp.diff(u1, x) + sp.diff(u2, y) + ie * un,
    }
    lamb = lambda e: sp.lambdify((x, y), e, "numpy")  # noqa: E731
    exact = {k: lamb(v) for k, v in MMS_FIELDS.items()}
    return exact, {k: lamb(v) for k, v in forcing.items()}


def mms_errors(counts, lam=1 + 2j, xi=1.3, beta=0.5):
    """Discrete L2 errors of ``(u, p)`` on ``(0, pi)^2`` for each cell count."""
    params = SpectralParams(lam, xi, beta)
    exact, forcing = mms_data(params.lam, params.eta)
    errs = []
    for n in counts:
        grid = build_grid(math.pi, math.pi, n, n)
        b = grid.sample(forcing)
        z = ModeSystem(grid, params).solve_rhs(b)
        e = z - grid.sample(exact)
        errs.append(float(np.linalg.norm(e) * grid.h))
    return errs


def observed_orders(errs, ratio=2.0):
    return [math.log(a / b, ratio) for a, b in zip(errs[:-1], errs[1:])]
