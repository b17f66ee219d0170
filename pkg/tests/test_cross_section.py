import math

import numpy as np
import pytest
from oracles import dirichlet_eigen, neumann_eigen

from stokescyl import cross_section as cs
from stokescyl.errors import DegenerateModeError, GridError
from stokescyl.weights import PowerWeight


@pytest.fixture(scope="module")
def grid():
    return cs.build_grid(math.pi, math.pi, 16, 16)


def test_grid_rejects_bad_shapes():
    with pytest.raises(GridError):
        cs.build_grid(1.0, 2.0, 8, 8)  # non-square cells
    with pytest.raises(GridError):
        cs.build_grid(1.0, 1.0, 2, 2)


def test_layout_sizes(grid):
    n = 16
    assert grid.n1 == (n - 1) * n and grid.n2 == n * (n - 1)
    assert grid.nvel == grid.n1 + grid.n2 + n * n
    assert grid.nstate == grid.nvel + n * n


def test_neumann_laplacian_is_div_grad(grid):
    lhs = grid.lap_neumann.toarray()
    rhs = (grid.div @ grid.grad).toarray()
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_div_is_negative_gradient_adjoint(grid):
    np.testing.assert_allclose(grid.div.toarray(), -grid.grad.T.toarray())


def test_thresholds_converge_to_analytic():
    th = cs.thresholds(cs.build_grid(math.pi, 2 * math.pi, 32, 64))
    assert th.alpha0 == pytest.approx(dirichlet_eigen(math.pi, 2 * math.pi), rel=2e-3)
    assert th.alpha1 == pytest.approx(neumann_eigen(math.pi, 2 * math.pi), rel=2e-3)
    assert th.alpha_bar == min(th.alpha0, th.alpha1)


def test_dirichlet_smallest_matches_dense(grid):
    ev = np.linalg.eigvalsh(-grid.lap_dirichlet.toarray())
    assert cs.dirichlet_smallest(grid) == pytest.approx(ev[0], rel=1e-9)
    evn = np.linalg.eigvalsh(-grid.lap_neumann.toarray())
    assert cs.neumann_smallest_positive(grid) == pytest.approx(evn[1], rel=1e-9)


def test_sector_params_closed_form():
    info = cs.sector_params(1.0, 0.5, 0.5)
    assert abs(info.eps_star - math.pi / 4) <= 1e-12
    assert cs.sector_params(1.0, 0.0, 0.5).eps_star == pytest.approx(math.pi / 2)
    assert not cs.sector_params(1.0, 0.9, 0.5).valid


@pytest.mark.parametrize("kind,expected", [("dirichlet", 1 / math.sqrt(2)), ("mean_zero", 1.0)])
def test_poincare_unit_weight(kind, expected):
    est = cs.poincare_constant(cs.build_grid(math.pi, math.pi, 16, 16), kind, 2.0)
    assert est.constant == pytest.approx(expected, rel=0.02)


def test_poincare_weighted_is_finite(grid):
    w = PowerWeight(0.5, (math.pi / 2, math.pi / 2))
    est = cs.poincare_constant(grid, "dirichlet", 3.0, w, ensemble=16)
    assert 0 < est.constant < 10


def test_div_solve_hits_target(grid):
    rng = np.random.default_rng(1)
    g = rng.standard_normal(grid.nc)
    eta = 0.7 + 0.3j
    v = cs.div_solve(grid, g, eta)
    assert np.linalg.norm(cs.div_eta(grid, v, eta) - g) <= 1e-10 * np.linalg.norm(g)
    with pytest.raises(DegenerateModeError):
        cs.div_solve(grid, g, 0.0)


def test_bump_integrates_to_one(grid):
    assert np.sum(cs.bump(grid)) * grid.h**2 == pytest.approx(1.0)


def test_neumann_solve_mean_zero(grid):
    rng = np.random.default_rng(2)
    g = rng.standard_normal(grid.nc)
    phi = cs.neumann_solve(grid, g)
    assert abs(phi.mean()) <= 1e-12
    np.testing.assert_allclose(-grid.lap_neumann @ phi, g - g.mean(), atol=1e-10)


def test_solenoidal_projector_is_projection(grid):
    rng = np.random.default_rng(3)
    P = cs.SolenoidalProjector(grid, 0.4 + 0.5j)
    v = rng.standard_normal(grid.nvel) + 1j * rng.standard_normal(grid.nvel)
    pv = P(v)
    np.testing.assert_allclose(P(pv), pv, atol=1e-10)
    assert np.linalg.norm(P.B @ pv) <= 1e-10 * np.linalg.norm(v)


def test_gradient_observable_of_linear_function(grid):
    X, Y = grid.coords("un")
    z = cs.ModeField.from_components(grid, un=2 * X + 3 * Y, p=0.0).state
    d = grid.observable("un", ("x",)).matrix @ z
    # interior differences of a linear field are exact; the end rows see the wall
    assert np.allclose(d.reshape(grid.Nx + 1, grid.Ny)[1:-1], 2.0)


def test_mode_field_norm_scales(grid):
    f = cs.ModeField.from_components(grid, un=1.0)
    assert f.norm() == pytest.approx(math.pi, rel=1e-12)
    assert (2 * f).norm(3.0) == pytest.approx(2 * f.norm(3.0))
