import math

import numpy as np
import pytest

from stokescyl import build_grid, thresholds
from stokescyl import evolution as ev
from stokescyl.cylinder import AxialGrid
from stokescyl.errors import ParameterError
from stokescyl.weights import MixedNormSpec


@pytest.fixture(scope="module")
def grid():
    return build_grid(math.pi, math.pi, 6, 6)


@pytest.fixture(scope="module")
def axial():
    return AxialGrid(4 * math.pi, 16)


@pytest.fixture(scope="module")
def U0(grid, axial):
    return ev.random_solenoidal(grid, axial, 0.5, np.random.default_rng(0))


def test_time_grid():
    tg = ev.TimeGrid(2.0, 8)
    assert tg.dt == 0.25 and tg.times[-1] == 2.0
    assert tg.lp_norm(np.ones(9), 2.0) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        ev.TimeGrid(1.0, 4)


def test_horizon():
    T = ev.horizon(2.0, 0.5, 0.25)
    assert math.exp(-(2.0 - 0.25 - 0.25) * T) == pytest.approx(1e-6)
    with pytest.raises(ParameterError):
        ev.horizon(1.0, 1.0)


def test_leray_idempotent(grid, axial):
    rng = np.random.default_rng(1)
    F = ev.random_solenoidal(grid, axial, 0.5, rng)
    F.data[:, : grid.nvel] += rng.standard_normal((axial.M, grid.nvel))
    P1 = ev.leray_project(F, 0.5)
    P2 = ev.leray_project(P1, 0.5)
    assert np.abs(P2.data - P1.data).max() <= 1e-12 * np.abs(P1.data).max()


def test_semigroup_property(U0):
    a = ev.semigroup_step(ev.semigroup_step(U0, 0.3), 0.4)
    b = ev.semigroup_step(U0, 0.7)
    assert np.abs(a.data - b.data).max() <= 1e-12 * np.abs(b.data).max()


def test_crank_nicolson_matches_expm(U0):
    a = ev.semigroup_step(U0, 0.5, method="expm")
    b = ev.semigroup_step(U0, 0.5, method="cn", substeps=100)
    assert np.abs(a.data - b.data).max() <= 1e-5 * np.abs(a.data).max()


def test_semigroup_contracts(U0):
    assert ev.semigroup_step(U0, 1.0).norm() < U0.norm()


def test_fit_rate_exact_exponential():
    t = np.linspace(0, 5, 11)
    assert ev.fit_rate(t, 3 * np.exp(-0.7 * t)) == pytest.approx(-0.7)


def test_decay_rate_beats_threshold(grid, axial):
    ab = thresholds(grid).alpha_bar
    beta = 0.5 * math.sqrt(ab)
    rep = ev.decay_experiment(grid, axial, beta, ab, np.linspace(0, 4, 9), n_samples=3)
    assert rep.fitted_rate <= -(ab - beta**2) + 0.05


def test_forcing_ensemble_is_grid_independent(axial):
    g1, g2 = build_grid(math.pi, math.pi, 6, 6), build_grid(math.pi, math.pi, 12, 12)
    f1 = ev.smooth_forcing_ensemble(g1, axial, 0.5, 3, seed=4)
    f2 = ev.smooth_forcing_ensemble(g2, axial, 0.5, 3, seed=4)
    for t in (0.3, 1.7):
        np.testing.assert_array_equal(f1.coeffs(t), f2.coeffs(t))


def test_maxreg_matches_dense_oracle(grid, axial):
    fe = ev.smooth_forcing_ensemble(grid, axial, 0.0, 3, seed=2)
    tg = ev.TimeGrid(6.0, 128)
    rep = ev.maxreg_ratio(fe, tg, grid, axial, 0.0, (2.0,), (0.0,), MixedNormSpec())
    ref = ev.dense_maxreg_ratio(fe, tg, grid, axial, 2.0)
    np.testing.assert_allclose(rep.ratios[(2.0, 0.0)], ref, rtol=0.02)


def test_cauchy_trajectory_satisfies_equation(grid, axial):
    fe = ev.smooth_forcing_ensemble(grid, axial, 0.5, 1, seed=3)
    tr = ev.solve_cauchy(fe, ev.TimeGrid(2.0, 16), grid, axial, 0.5)
    np.testing.assert_allclose(tr.Ut, tr.F - tr.AU, atol=1e-12)
    assert np.abs(tr.U[0]).max() == 0
