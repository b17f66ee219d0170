"""Acceptance criteria 1-11, each printed as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also echoed in the terminal summary.
"""

import math
import time

import numpy as np
from conftest import ACCEPTANCE_LINES
from oracles import dirichlet_eigen, mms_errors, neumann_eigen, observed_orders

from stokescyl import build_grid, cli, thresholds
from stokescyl import cross_section as cs
from stokescyl import cylinder as cyl
from stokescyl import evolution as ev
from stokescyl import mode_solver as ms
from stokescyl.weights import MixedNormSpec, PowerWeight, ar_profile, dual_weight, is_divergent

PI = math.pi


def verdict(n, ok, detail):
    line = f"CRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def sweep_sector(alpha, beta, grid):
    info = cs.sector_params(thresholds(grid).alpha_bar, beta, alpha)
    assert info.valid, info.reason
    return info.eps_star / 2


def test_c01_eigenvalue_thresholds():
    t0 = time.perf_counter()
    rows = cs.threshold_convergence(PI, PI, [32, 64, 128])
    elapsed = time.perf_counter() - t0
    a0, a1 = dirichlet_eigen(PI, PI), neumann_eigen(PI, PI)
    e0 = [abs(r["alpha0"] - a0) / a0 for r in rows]
    e1 = [abs(r["alpha1"] - a1) / a1 for r in rows]
    order = min(observed_orders(e0) + observed_orders(e1))
    err = max(e0[-1], e1[-1])
    ok = order >= 1.8 and err <= 3e-3 and elapsed <= 10
    verdict(1, ok, f"order {order:.3f} (>=1.8), rel err at 128^2 {err:.2e} (<=3e-3), {elapsed:.2f}s (<=10s)")


def test_c02_sector_formula():
    eps = cs.sector_params(1.0, 0.5, 0.5).eps_star
    verdict(2, abs(eps - PI / 4) <= 1e-12, f"eps* = {eps!r}, |eps* - pi/4| = {abs(eps - PI / 4):.1e}")


def test_c03_manufactured_solution():
    t0 = time.perf_counter()
    errs = mms_errors([16, 32, 64], lam=1 + 2j, xi=1.3, beta=0.5)
    elapsed = time.perf_counter() - t0
    order = min(observed_orders(errs))
    verdict(3, order >= 1.8 and elapsed <= 30, f"L2 errors {[f'{e:.2e}' for e in errs]}, order {order:.3f}, {elapsed:.2f}s")


def test_c04_derivative_system():
    grid = build_grid(PI, PI, 16, 16)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10):
        f, _ = ms.smooth_forcing(grid, rng, with_g=False)
        f[: grid.nvel] += 0.1 * (rng.standard_normal(grid.nvel) + 1j * rng.standard_normal(grid.nvel))
        for params in cli.deriv_points(0.5, 0.5):
            worst = max(worst, cli.derivative_deviation(grid, params, f, 1e-3))
    verdict(4, worst <= 1e-4, f"max relative deviation {worst:.2e} over 10 forcings x 5 points (<=1e-4)")


def test_c05_uniform_mode_estimate():
    t0 = time.perf_counter()
    grid = build_grid(PI, PI, 16, 16)
    alpha = beta = 0.5
    eps = sweep_sector(alpha, beta, grid)
    mags = np.logspace(-2, 4, 13)
    xs = np.logspace(-2, 2, 9)
    xis = np.concatenate([-xs[::-1], xs])
    weights = [PowerWeight(), PowerWeight(0.5, (PI / 2, PI / 2))]
    rows = ms.estimate_sweep(grid, alpha, beta, eps, mags, xis, weights, [2.0, 3.0], 5, 2, seed=0)
    elapsed = time.perf_counter() - t0
    parts, ok = [], elapsed <= 300
    for w in weights:
        for r in (2.0, 3.0):
            sm = ms.sweep_summary([row for row in rows if row.weight_id == w.ident and row.r == r], 3)
            ok = ok and sm["max_over_median"] <= 50 and not sm["monotone_growth"]
            tag = "w=1" if w.is_unit else "w=|x-c|^1/2"
            parts.append(f"{tag},r={r:g}: {sm['max_over_median']:.2f}{' GROWTH' if sm['monotone_growth'] else ''}")
    verdict(5, ok, f"max/median {'; '.join(parts)} (<=50, no outer-decade growth), {len(rows)} rows, {elapsed:.0f}s")


def test_c06_resolvent_bound():
    grid, axial = build_grid(PI, PI, 8, 8), cyl.AxialGrid(4 * PI, 32)
    alpha = beta = 0.5
    eps = sweep_sector(alpha, beta, grid)
    prods = [
        cyl.resolvent_norm_estimate(grid, axial, lam, beta, alpha, MixedNormSpec(2.0, 2.0, beta), 8, 0).product
        for _, _, lam in ms.sweep_lambdas(alpha, eps, np.logspace(-2, 4, 7), 5)
    ]
    ratio = max(prods) / float(np.median(prods))
    lam0 = 1.0 + 1.0j
    est = cyl.resolvent_norm_estimate(grid, axial, lam0, 0.0, 0.0, MixedNormSpec(), 8, 0).norm
    dense = cyl.dense_resolvent_norm(grid, axial, lam0)
    rel = abs(est - dense) / dense
    verdict(6, ratio <= 50 and rel <= 0.05, f"max/median {ratio:.2f} (<=50), beta=0 oracle rel diff {rel:.1e} (<=5%)")


def test_c07_semigroup_decay():
    grid, axial = build_grid(PI, PI, 8, 8), cyl.AxialGrid(4 * PI, 16)
    ab = thresholds(grid).alpha_bar
    times = np.linspace(0, 6, 25)
    rates, ok, parts = [], True, []
    for frac in (0.2, 0.5, 0.8):
        beta = frac * math.sqrt(ab)
        rep = ev.decay_experiment(grid, axial, beta, ab, times, n_samples=10, seed=0, spec=MixedNormSpec(beta=beta))
        bound = -(ab - beta**2) + 0.05
        ok = ok and rep.fitted_rate <= bound
        rates.append(rep.fitted_rate)
        parts.append(f"{rep.fitted_rate:.3f}<={bound:.3f}")
    mono = rates[0] < rates[1] < rates[2]
    verdict(7, ok and mono, f"rates {', '.join(parts)}; increasing in beta: {mono}")


def test_c08_maximal_regularity():
    axial = cyl.AxialGrid(4 * PI, 16)
    beta = 0.5
    g1, g2 = build_grid(PI, PI, 8, 8), build_grid(PI, PI, 16, 16)
    ab1, ab2 = thresholds(g1).alpha_bar, thresholds(g2).alpha_bar
    alpha_t = 0.5 * (ab1 - beta**2)
    spec = MixedNormSpec(beta=beta)
    coarse = cli.maxreg_run(g1, axial, beta, ab1, 20, 128, (2.0, 4.0), alpha_t, 0, spec)
    fine = cli.maxreg_run(g2, axial, beta, ab2, 20, 256, (2.0, 4.0), alpha_t, 0, spec)
    ok, parts = True, []
    for p in (2.0, 4.0):
        for a in (0.0, alpha_t):
            mc, mf = coarse.summary(p, a)["max"], fine.summary(p, a)["max"]
            drift = abs(mf - mc) / mc
            ok = ok and math.isfinite(mc) and drift <= 0.20
            parts.append(f"p={p:g}{',weighted' if a else ''}: {mc:.3f}->{mf:.3f} (drift {drift:.1%})")
    verdict(8, ok, "; ".join(parts) + " (within 20%)")


def test_c09_rbound():
    rng = np.random.default_rng(0)
    coeffs = rng.uniform(-3, 3, size=5)
    sup = float(np.max(np.abs(coeffs)))
    est = cli.rbound_constant_family(coeffs, 8, 64, 0)
    grid = build_grid(PI, PI, 8, 8)
    e1 = cli.rbound_multiplier(grid, 1 + 1j, 0.5, 0.5, 5, 2.0, 8, 64, 0)
    e2 = cli.rbound_multiplier(grid, 1 + 1j, 0.5, 0.5, 9, 2.0, 8, 64, 0)
    drift = abs(e2 - e1) / e1
    ok = abs(est - sup) <= 0.1 * sup and drift <= 0.25
    verdict(9, ok, f"constant family {est:.4f} vs sup {sup:.4f}; multiplier {e1:.4f}->{e2:.4f} (drift {drift:.1%}, <=25%)")


def test_c10_muckenhoupt():
    c = (0.5, 0.5)
    unit = all(v == 1.0 for v in ar_profile(PowerWeight(), 2.0, range(1, 7)))
    dual_err, range_ok = 0.0, True
    for r in (1.5, 2.0, 3.0):
        for a in (-2.5, -1.0, 0.0, 0.5, 1.5, 2.5, 4.5):
            w = PowerWeight(a, c)
            prof = ar_profile(w, r, range(1, 8))
            range_ok = range_ok and (is_divergent(prof) != w.in_ar(r))
            if w.in_ar(r):
                dw, rd = dual_weight(w, r)
                for d, v in zip(range(1, 8), prof):
                    dv = ar_profile(dw, rd, [d])[0]
                    dual_err = max(dual_err, abs(dv - v ** (rd / r)) / dv)
    verdict(10, unit and dual_err <= 1e-10 and range_ok, f"A_r(1)=1: {unit}; duality rel err {dual_err:.1e}; iff-range classification: {range_ok}")


def test_c11_determinism(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["all", f"--output={tmp_path / name}"]) == 0
    fa = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    fb = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    diff = [str(p) for p in fa if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
    verdict(11, fa == fb and not diff and len(fa) > 0, f"{len(fa)} files compared, {len(diff)} differ {diff}")
