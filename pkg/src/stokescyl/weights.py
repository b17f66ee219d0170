"""Muckenhoupt power weights on the plane.

Weights enter every norm through exact rectangle integrals, so the singular
point of ``|x' - x0|^a`` is never sampled.  The A_r estimate takes a
supremum over a finite dyadic cube family and is therefore a lower bound of
the true A_r constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import hyp2f1


@dataclass(frozen=True)
class PowerWeight:
    """The weight ``w(x') = |x' - center|^exponent`` on R^2."""

    exponent: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def unit(cls) -> "PowerWeight":
        return cls(0.0, (0.0, 0.0))

    @classmethod
    def parse(cls, text: str) -> "PowerWeight":
        """Parse ``"unit"`` or ``"power:a=<float>,cx=<float>,cy=<float>"``."""
        text = text.strip()
        if text == "unit":
            return cls.unit()
        m = re.fullmatch(r"power:(.*)", text)
        if not m:
            raise ValueError(f"unrecognised weight string {text!r}")
        fields = {}
        for item in m.group(1).split(","):
            key, sep, val = item.partition("=")
            if not sep or key.strip() not in ("a", "cx", "cy"):
                raise ValueError(f"bad weight field {item!r} in {text!r}")
            fields[key.strip()] = float(val)
        if "a" not in fields:
            raise ValueError(f"weight string {text!r} lacks exponent a")
        return cls(fields["a"], (fields.get("cx", 0.0), fields.get("cy", 0.0)))

    @property
    def is_unit(self) -> bool:
        return self.exponent == 0.0

    @property
    def ident(self) -> str:
        if self.is_unit:
            return "unit"
        cx, cy = self.center
        return f"power:a={self.exponent:g},cx={cx:g},cy={cy:g}"

    def in_ar(self, r: float) -> bool:
        """Membership in A_r(R^2): ``-2 < a < 2 (r - 1)``."""
        return -2.0 < self.exponent < 2.0 * (r - 1.0)

    def __call__(self, x, y):
        if self.is_unit:
            return np.ones(np.broadcast(x, y).shape)
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        return np.hypot(dx, dy) ** self.exponent


@dataclass(frozen=True)
class MixedNormSpec:
    """Exponents and weights of ``|| e^{beta x_n} u ||_{L^q(L^r_w)}``."""

    q: float = 2.0
    r: float = 2.0
    beta: float = 0.0
    weight: PowerWeight = PowerWeight()

    def __post_init__(self):
        if not (1.0 < self.q < math.inf and 1.0 < self.r < math.inf):
            raise ValueError(f"exponents must lie in (1, inf), got q={self.q}, r={self.r}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")


def dual_weight(weight: PowerWeight, r: float) -> tuple[PowerWeight, float]:
    """Return ``(w^{-1/(r-1)}, r/(r-1))``."""
    if not r > 1.0:
        raise ValueError("r must exceed 1")
    return PowerWeight(-weight.exponent / (r - 1.0), weight.center), r / (r - 1.0)


def _corner_integral(X, Y, exponent):
    """Signed integral of ``|t|^exponent`` over the rectangle [0, X] x [0, Y].

    Polar coordinates reduce each half of the rectangle to an integral of
    ``sec^m`` with ``m = exponent + 2``, which is a Gauss hypergeometric
    function.  Requires ``exponent > -2``.
    """
    m = exponent + 2.0
    A = np.abs(X)
    B = np.abs(Y)
    out = np.zeros(np.broadcast(A, B).shape)
    ok = (A > 0) & (B > 0)
    A, B = np.broadcast_to(A, out.shape)[ok], np.broadcast_to(B, out.shape)[ok]
    za, zb = B / A, A / B
    ta = za * hyp2f1(0.5, 1.0 - m / 2.0, 1.5, -za * za)
    tb = zb * hyp2f1(0.5, 1.0 - m / 2.0, 1.5, -zb * zb)
    out[ok] = (A**m * ta + B**m * tb) / m
    return out * np.sign(X) * np.sign(Y)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gauss_rect_integrals(fun, xlines, ylines):
    """Tensor Gauss-Legendre integrals of a smooth ``fun`` over every cell."""
    x0, x1 = xlines[:-1], xlines[1:]
    y0, y1 = ylines[:-1], ylines[1:]
    xs = 0.5 * (x0 + x1)[:, None] + 0.5 * (x1 - x0)[:, None] * _GL_NODES[None, :]
    ys = 0.5 * (y0 + y1)[:, None] + 0.5 * (y1 - y0)[:, None] * _GL_NODES[None, :]
    vals = fun(xs[:, None, :, None], ys[None, :, None, :])
    w = np.einsum("k,l->kl", _GL_WEIGHTS, _GL_WEIGHTS)
    jac = 0.25 * np.outer(x1 - x0, y1 - y0)
    return jac * np.einsum("ijkl,kl->ij", vals, w)


def power_rect_integrals(exponent, center, xlines, ylines):
    """Integrals of ``|x' - center|^exponent`` over the cells of a tensor grid.

    ``xlines`` and ``ylines`` are increasing breakpoints; the result has shape
    ``(len(xlines) - 1, len(ylines) - 1)``.  Cells whose closure contains the
    center get ``inf`` when the exponent is not integrable (``<= -2``).
    """
    xlines = np.asarray(xlines, dtype=float)
    ylines = np.asarray(ylines, dtype=float)
    if exponent == 0.0:
        return np.outer(np.diff(xlines), np.diff(ylines))
    cx, cy = center
    if exponent > -2.0:
        G = _corner_integral((xlines - cx)[:, None], (ylines - cy)[None, :], exponent)
        return G[1:, 1:] - G[:-1, 1:] - G[1:, :-1] + G[:-1, :-1]
    touch_x = (xlines[:-1] <= cx) & (cx <= xlines[1:])
    touch_y = (ylines[:-1] <= cy) & (cy <= ylines[1:])
    out = _gauss_rect_integrals(
        lambda x, y: np.hypot(x - cx, y - cy) ** exponent, xlines, ylines
    )
    out[np.outer(touch_x, touch_y)] = np.inf
    return out


def rect_integrals(weight: PowerWeight, xlines, ylines):
    """Integrals of ``weight`` over the cells spanned by the breakpoints."""
    return power_rect_integrals(weight.exponent, weight.center, xlines, ylines)


def _coarsen(a):
    return a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]


def ar_constant(
    weight: PowerWeight,
    r: float,
    depth: int,
    box: tuple[float, float, float] = (0.0, 0.0, 1.0),
    quadrature: str = "exact",
) -> float:
    """Dyadic A_r estimate of ``weight``.

    Supremum of ``avg_Q(w) * avg_Q(w^{-1/(r-1)})^{r-1}`` over the dyadic
    sub-cubes of levels ``0..depth`` of the square ``box = (x0, y0, side)``.

    With ``quadrature="exact"`` every cube average is an exact integral, so the
    estimate is a nondecreasing function of ``depth`` and a lower bound of the
    A_r constant; ``inf`` signals a cube on which one of the two powers is not
    integrable.  ``quadrature="midpoint"`` instead samples the weight at the
    centers of cells two levels below ``depth``; it stays finite for every
    exponent and exhibits growth under refinement for weights outside A_r.
    """
    if not r > 1.0:
        raise ValueError("r must exceed 1")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if weight.is_unit:
        return 1.0
    x0, y0, side = box
    dual_exp = -weight.exponent / (r - 1.0)
    if quadrature == "exact":
        qlevel = depth
        lines_x = x0 + side * np.linspace(0.0, 1.0, 2**qlevel + 1)
        lines_y = y0 + side * np.linspace(0.0, 1.0, 2**qlevel + 1)
        I_w = power_rect_integrals(weight.exponent, weight.center, lines_x, lines_y)
        I_d = power_rect_integrals(dual_exp, weight.center, lines_x, lines_y)
        if not (np.all(np.isfinite(I_w)) and np.all(np.isfinite(I_d))):
            return math.inf
    elif quadrature == "midpoint":
        qlevel = depth + 2
        n = 2**qlevel
        c = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(x0 + side * c, y0 + side * c, indexing="ij")
        rho = np.hypot(X - weight.center[0], Y - weight.center[1])
        area = (side / n) ** 2
        with np.errstate(divide="ignore"):
            I_w = area * rho**weight.exponent
            I_d = area * rho**dual_exp
        if not (np.all(np.isfinite(I_w)) and np.all(np.isfinite(I_d))):
            return math.inf
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")

    best = 0.0
    for level in range(qlevel, -1, -1):
        if level <= depth:
            area = (side / 2**level) ** 2
            val = (I_w / area) * (I_d / area) ** (r - 1.0)
            best = max(best, float(val.max()))
        if level > 0:
            I_w, I_d = _coarsen(I_w), _coarsen(I_d)
    return best


def ar_profile(weight, r, depths: Sequence[int], box=(0.0, 0.0, 1.0), quadrature="exact"):
    """A_r estimates for each depth in ``depths``."""
    return [ar_constant(weight, r, d, box=box, quadrature=quadrature) for d in depths]


def is_divergent(estimates: Sequence[float], ratio: float = 2.0, run: int = 3) -> bool:
    """Classify a depth profile as divergent.

    Divergent means an infinite entry, or ``run`` consecutive depth-to-depth
    growth factors all above ``ratio``.
    """
    est = list(estimates)
    if any(not math.isfinite(e) for e in est):
        return True
    growth = [b / a for a, b in zip(est[:-1], est[1:]) if a > 0]
    streak = 0
    for g in growth:
        streak = streak + 1 if g > ratio else 0
        if streak >= run:
            return True
    return False


def weighted_norm(field, grid, r: float, weight: PowerWeight = PowerWeight()) -> float:
    """``(int_Sigma |u|^r w dx')^{1/r}`` for a cell-centered field on ``grid``.

    A tuple of fields yields the sum of their norms.
    """
    if isinstance(field, (tuple, list)):
        return float(sum(weighted_norm(f, grid, r, weight) for f in field))
    vals = np.asarray(field)
    w = grid.cell_weights(weight)
    if vals.shape != w.shape:
        raise ValueError(f"field shape {vals.shape} does not match cells {w.shape}")
    return float(np.sum(w * np.abs(vals) ** r) ** (1.0 / r))


def lr_norm(values, weights, r: float, axis=0):
    """Quadrature norm ``(sum_i w_i |v_i|^r)^{1/r}`` along ``axis``."""
    v = np.abs(np.asarray(values))
    w = np.asarray(weights)
    if v.ndim > 1 and axis == 0:
        w = w.reshape((-1,) + (1,) * (v.ndim - 1))
    if r == 2.0:
        return np.sqrt(np.sum(w * v * v, axis=axis))
    return np.sum(w * v**r, axis=axis) ** (1.0 / r)


def mixed_norm(cyl_field, spec: MixedNormSpec) -> float:
    """``|| e^{beta x_n} u ||_{L^q(L^r_w)}`` by axial midpoint quadrature."""
    planes = cyl_field.plane_norms(spec.r, spec.weight)
    scale = np.exp(spec.beta * cyl_field.x)
    return float((cyl_field.dx * np.sum((scale * planes) ** spec.q)) ** (1.0 / spec.q))
