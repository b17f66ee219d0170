import math

import numpy as np
import pytest
from scipy import integrate

from stokescyl.weights import (
    MixedNormSpec,
    PowerWeight,
    ar_constant,
    ar_profile,
    dual_weight,
    is_divergent,
    lr_norm,
    power_rect_integrals,
)


def polar_integral(a, c, x0, x1, y0, y1):
    """Integral of |x - c|^a over a rectangle by splitting at the singular point."""
    f = lambda yy, xx: math.hypot(xx - c[0], yy - c[1]) ** a  # noqa: E731
    xs = sorted({x0, x1, *([c[0]] if x0 < c[0] < x1 else [])})
    ys = sorted({y0, y1, *([c[1]] if y0 < c[1] < y1 else [])})
    total = 0.0
    for xa, xb in zip(xs[:-1], xs[1:]):
        for ya, yb in zip(ys[:-1], ys[1:]):
            total += integrate.dblquad(f, xa, xb, ya, yb, epsabs=1e-12, epsrel=1e-10)[0]
    return total


@pytest.mark.parametrize("a", [-1.5, -0.5, 0.5, 2.0])
def test_power_rect_integrals_match_quadrature(a):
    c = (0.3, 0.3)
    got = power_rect_integrals(a, c, np.array([0.0, 0.3, 1.0]), np.array([0.0, 1.0]))
    ref = [polar_integral(a, c, 0.0, 0.3, 0.0, 1.0), polar_integral(a, c, 0.3, 1.0, 0.0, 1.0)]
    np.testing.assert_allclose(np.ravel(got), ref, rtol=1e-6)


def test_parse_and_ident_roundtrip():
    w = PowerWeight.parse("power:a=0.5,cx=1,cy=2")
    assert w.exponent == 0.5 and w.center == (1.0, 2.0)
    assert PowerWeight.parse(w.ident) == w
    assert PowerWeight.parse("unit").is_unit
    with pytest.raises(ValueError):
        PowerWeight.parse("gauss:a=1")


@pytest.mark.parametrize("a,r,inside", [(0, 2, True), (1.9, 2, True), (-1.9, 2, True), (2.1, 2, False), (-2.0, 2, False), (3.9, 3, True), (4.0, 3, False)])
def test_ar_range(a, r, inside):
    assert PowerWeight(a).in_ar(r) is inside


def test_unit_weight_constant_is_one():
    assert ar_constant(PowerWeight(), 2.0, 6) == 1.0
    assert all(v == 1.0 for v in ar_profile(PowerWeight(), 3.0, range(1, 5)))


@pytest.mark.parametrize("a", [-1.0, 0.5, 1.5])
@pytest.mark.parametrize("r", [1.5, 2.0, 3.0])
def test_duality_identity(a, r):
    w = PowerWeight(a, (0.5, 0.5))
    if not w.in_ar(r):
        pytest.skip("outside A_r")
    dw, rd = dual_weight(w, r)
    for depth in (2, 5):
        lhs = ar_constant(dw, rd, depth)
        rhs = ar_constant(w, r, depth) ** (rd / r)
        assert abs(lhs - rhs) <= 1e-10 * rhs


def test_in_range_weights_stabilize_and_out_of_range_diverge():
    good = ar_profile(PowerWeight(1.5, (0.5, 0.5)), 2.0, range(1, 8))
    bad = ar_profile(PowerWeight(2.5, (0.5, 0.5)), 2.0, range(1, 8))
    assert not is_divergent(good)
    assert abs(good[-1] - good[-2]) <= 1e-8 * good[-1]
    assert is_divergent(bad)


def test_midpoint_quadrature_approaches_exact():
    w = PowerWeight(0.5, (0.3, 0.7))
    exact = ar_constant(w, 2.0, 3)
    mid = ar_constant(w, 2.0, 3, quadrature="midpoint")
    assert abs(mid - exact) <= 0.05 * exact


def test_is_divergent_rules():
    assert is_divergent([1, 3, 9, 27, 81])
    assert not is_divergent([1, 1.1, 1.15, 1.16, 1.16])
    assert is_divergent([1, 2, math.inf])


def test_lr_norm_matches_numpy():
    v = np.array([3.0, -4.0])
    assert lr_norm(v, np.ones(2), 2.0) == pytest.approx(5.0)
    assert lr_norm(v, np.full(2, 0.5), 3.0) == pytest.approx((0.5 * (27 + 64)) ** (1 / 3))


def test_mixed_norm_spec_validation():
    with pytest.raises(ValueError):
        MixedNormSpec(q=1.0)
    with pytest.raises(ValueError):
        MixedNormSpec(beta=-1.0)
