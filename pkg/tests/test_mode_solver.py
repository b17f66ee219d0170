import math

import numpy as np
import pytest
from oracles import mms_errors, observed_orders

from stokescyl import build_grid
from stokescyl import mode_solver as ms
from stokescyl.errors import DegenerateModeError, ParameterError
from stokescyl.weights import PowerWeight


@pytest.fixture(scope="module")
def grid():
    return build_grid(math.pi, math.pi, 12, 12)


@pytest.fixture(scope="module")
def forcing(grid):
    return ms.smooth_forcing(grid, np.random.default_rng(5))


def test_degenerate_mode_rejected(grid):
    with pytest.raises(DegenerateModeError):
        ms.assemble(grid, ms.SpectralParams(1.0, 0.0, 0.0))


def test_negative_beta_rejected():
    with pytest.raises(ParameterError):
        ms.SpectralParams(1.0, 1.0, -0.1)


def test_manufactured_solution_second_order():
    errs = mms_errors([8, 16, 32])
    assert min(observed_orders(errs)) >= 1.8


def test_direct_iterative_dense_agree(grid, forcing):
    f, g = forcing
    system = ms.assemble(grid, ms.SpectralParams(0.3 + 1j, -0.8, 0.4))
    z = ms.solve_mode(system, f, g).state
    b = ms._rhs(grid, f, g)
    np.testing.assert_allclose(system.solve_iterative(b), z, atol=1e-9 * np.linalg.norm(z))
    np.testing.assert_allclose(system.dense_solve(b), z, atol=1e-10 * np.linalg.norm(z))


def test_conjugate_symmetry(grid, forcing):
    # real data at (conj lam, -xi) gives the conjugate solution when beta = 0
    f, g = forcing
    fr, gr = f.real.astype(complex), g.real.astype(complex)
    lam, xi = 1 + 2j, 0.9
    a = ms.assemble(grid, ms.SpectralParams(lam, xi)).solve(fr, gr).state
    b = ms.assemble(grid, ms.SpectralParams(np.conj(lam), -xi)).solve(fr, gr).state
    np.testing.assert_allclose(b, np.conj(a), atol=1e-12 * np.linalg.norm(a))


@pytest.mark.parametrize("params", [ms.SpectralParams(1 + 2j, 1.3, 0.5), ms.SpectralParams(-0.2 + 1j, 0.1, 0.3)])
def test_derivative_matches_central_difference(grid, forcing, params):
    f, _ = forcing
    w = ms.derivative_solve(grid, params, f).state
    d = 1e-4
    up = ms.assemble(grid, params.replace(xi=params.xi + d)).solve(f).state
    um = ms.assemble(grid, params.replace(xi=params.xi - d)).solve(f).state
    assert np.linalg.norm((up - um) / (2 * d) - w) <= 1e-6 * np.linalg.norm(w)


def test_estimate_ratio_positive_and_bounded(grid, forcing):
    f, g = forcing
    for w in (PowerWeight(), PowerWeight(0.5, (math.pi / 2, math.pi / 2))):
        for r in (2.0, 3.0):
            est = ms.mode_estimate_ratio(grid, ms.SpectralParams(2 + 1j, 0.5, 0.5, 0.5), f, g, r, w)
            assert 0 < est.ratio < 50


def test_split_norm_zero_for_zero_data(grid):
    assert ms.split_norm(grid, np.zeros(grid.nc), 0.5 + 0.5j, 2.0, PowerWeight()) == 0.0


@pytest.mark.parametrize(
    "lam,xi,beta,case",
    [
        (2.0 + 1j, 2.0, 0.5, "nonneg"),
        (1.0 + 0j, 0.3, 0.5, "nonneg"),
        (-1.5 + 1.8j, -1.0, 0.9, "resonance"),
        (-1.5 + 2.0j, 0.3, 0.9, "general"),
    ],
)
def test_coercivity_cases(grid, lam, xi, beta, case):
    params = ms.SpectralParams(lam, xi, beta)
    rng = np.random.default_rng(7)
    for _ in range(10):
        v = ms.solenoidal_sample(grid, params.eta, rng)
        res = ms.coercivity_check(grid, params, v)
        assert res.case == case
        assert res.passed, (res.value, res.lower_bound)


def test_coercivity_condition_violation(grid):
    v = ms.solenoidal_sample(grid, 0.3 + 0.9j, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        ms.coercivity_check(grid, ms.SpectralParams(-5.0 + 0.1j, 0.3, 0.9), v)


def test_sharp_bound_matches_brute_force():
    a, c, alpha0 = -3.0, 0.5, 2.0
    t = np.linspace(0, 1 / alpha0, 20001)
    brute = np.min(np.abs(1 + a * t + 1j * c * t))
    assert ms._sharp_bound(a, c, alpha0) == pytest.approx(brute, rel=1e-6)


def test_sweep_lambdas_stay_in_sector():
    eps = 0.3
    pts = ms.sweep_lambdas(0.5, eps, [0.1, 1.0, 10.0], 5)
    assert len(pts) == 15
    for theta, rho, lam in pts:
        assert abs(abs(lam + 0.5) - rho) <= 1e-12 * rho
        # boundary rays are included: the closed sector sits inside S_{2 eps}
        assert abs(np.angle(lam + 0.5)) <= math.pi / 2 + eps + 1e-12


def test_growth_flags():
    assert ms.growth_flags([1.0, 1.3, 2.0, 3.5])
    assert not ms.growth_flags([1.0, 1.1, 1.05, 1.2])


def test_small_sweep_is_uniform():
    grid = build_grid(math.pi, math.pi, 8, 8)
    rows = ms.estimate_sweep(grid, 0.5, 0.5, 0.3, [1e-2, 1.0, 1e2], [-1.0, 1.0], [PowerWeight()], [2.0], n_rays=3, n_forcings=1)
    sm = ms.sweep_summary(rows, 2)
    assert sm["max_over_median"] <= 50
