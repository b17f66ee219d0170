"""Command-line front end.

Usage::

    stokescyl <subcommand> [--config FILE] [--section.key=value ...]

Subcommands: eig, ar, mode-solve, mode-sweep, deriv-check, resolvent-sweep,
rbound, decay, maxreg, all.  Exit status 0 means every configured check
passed, 1 a check failed, 2 a usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cross_section as cs
from . import cylinder as cyl
from . import evolution as ev
from . import mode_solver as ms
from .errors import ConfigError, DegenerateModeError, GridError, ParameterError
from .report import Reporter, config_hash
from .weights import MixedNormSpec, PowerWeight, ar_profile, dual_weight, is_divergent

log = logging.getLogger("stokescyl")

OUTPUT_ENV = "STOKESCYL_OUTPUT_DIR"
SUBCOMMANDS = (
    "eig",
    "ar",
    "mode-solve",
    "mode-sweep",
    "deriv-check",
    "resolvent-sweep",
    "rbound",
    "decay",
    "maxreg",
    "all",
)

PI = math.pi

DEFAULTS = {
    "grid": {"Lx": PI, "Ly": PI, "Nx": 16, "Ny": 16},
    "axial": {"L": 8 * PI, "M": 32},
    "weight": {"omega": "unit", "sweep": "unit;power:a=0.5,cx=1.5707963267948966,cy=1.5707963267948966"},
    "exponents": {"p": 2.0, "q": 2.0, "r": 2.0, "sweep_r": "2,3"},
    "rates": {"beta": 0.5, "alpha": 0.5},
    "sector": {"eps_fraction": 0.5},
    "mode": {"lam_re": 1.0, "lam_im": 2.0, "xi": 1.3},
    "eig": {"counts": "32,64,128", "min_order": 1.8, "max_rel_error": 0.003, "beta_fractions": "0.2,0.5,0.8"},
    "ar": {"exponents": "-2.5,-1.5,0,1,1.5,2.5", "r": 2.0, "depths": 7, "quadrature": "exact"},
    "sweep": {
        "lam_min": 1e-2,
        "lam_max": 1e4,
        "per_decade": 2,
        "rays": 5,
        "xi_min": 1e-2,
        "xi_max": 1e2,
        "forcings": 2,
        "ratio_limit": 50.0,
        "growth_factor": 1.5,
    },
    "deriv": {"forcings": 10, "delta": 1e-3, "tol": 1e-4},
    "resolvent": {"lam_max": 1e3, "per_decade": 1, "ensemble": 8, "ratio_limit": 50.0, "oracle_tol": 0.05},
    "rbound": {"N": 8, "trials": 64, "xi_points": 5, "lam_re": 1.0, "lam_im": 1.0, "tol": 0.10, "stability": 0.25},
    "decay": {"samples": 10, "t_max": 6.0, "points": 25, "beta_fractions": "0.2,0.5,0.8", "slack": 0.05},
    "maxreg": {"members": 20, "K": 128, "ps": "2,4", "alpha_t_fraction": 0.5, "stability": 0.20, "refine": True},
    "seed": 0,
    "output": {"dir": "", "figures": True},
}

# experiment-level presets used by ``all`` (kept small so the suite runs in about a minute)
QUICK = {
    "grid.Nx": 8,
    "grid.Ny": 8,
    "axial.L": 4 * PI,
    "axial.M": 16,
    "eig.counts": "16,32,64",
    "sweep.per_decade": 1,
    "deriv.forcings": 4,
    "decay.samples": 4,
    "maxreg.members": 8,
    "maxreg.K": 64,
}


# ---------------------------------------------------------------------------
# configuration


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(path, template, value):
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    if isinstance(template, int):
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise ConfigError(path, f"expected an integer, got {value!r}") from None
        if not f.is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(f)
    if isinstance(template, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    return str(value)


def load_config(path=None, overrides=()):
    """Defaults, then the JSON file, then ``section.key=value`` overrides.

    The file may be nested (``{"grid": {"Nx": 32}}``) or flat
    (``{"grid.Nx": 32}``).  Unknown keys and bad values raise
    :class:`ConfigError` naming the field path.
    """
    flat = _flatten(DEFAULTS)
    updates = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        updates.update(_flatten(data))
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(key, "override must look like section.key=value")
        updates[key] = val
    for key, val in updates.items():
        if key not in flat:
            raise ConfigError(key, "unknown configuration field")
        flat[key] = _coerce(key, flat[key], val)
    validate(flat)
    return flat


def _floats(path, text):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(path, f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(path, "empty list")
    return vals


def _weights(path, text):
    try:
        return [PowerWeight.parse(t) for t in str(text).split(";") if t.strip()]
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def validate(c):
    def need(key, ok, msg):
        if not ok:
            raise ConfigError(key, msg)

    for key in ("grid.Lx", "grid.Ly", "axial.L"):
        need(key, c[key] > 0, "must be positive")
    for key in ("grid.Nx", "grid.Ny"):
        need(key, c[key] >= cs.MIN_CELLS, f"must be at least {cs.MIN_CELLS}")
    h = c["grid.Lx"] / c["grid.Nx"]
    need("grid.Ny", abs(c["grid.Ny"] * h - c["grid.Ly"]) <= 4 * sys.float_info.epsilon * c["grid.Ly"], "cells must be square (Lx/Nx = Ly/Ny)")
    M = c["axial.M"]
    need("axial.M", M >= 4 and M & (M - 1) == 0, "must be a power of two >= 4")
    for key in ("exponents.p", "exponents.q", "exponents.r", "ar.r"):
        need(key, 1 < c[key] < math.inf, "must lie in (1, inf)")
    need("rates.beta", c["rates.beta"] >= 0, "must be nonnegative")
    need("rates.alpha", c["rates.alpha"] >= 0, "must be nonnegative")
    need("sector.eps_fraction", 0 < c["sector.eps_fraction"] < 1, "must lie in (0, 1)")
    need("seed", c["seed"] >= 0, "must be nonnegative")
    need("resolvent.ensemble", c["resolvent.ensemble"] >= 8, "must be at least 8")
    need("rbound.trials", c["rbound.trials"] >= 64, "must be at least 64")
    need("rbound.N", c["rbound.N"] >= 1, "must be positive")
    need("maxreg.K", c["maxreg.K"] >= 8, "must be at least 8")
    need("ar.depths", c["ar.depths"] >= 1, "must be at least 1")
    need("ar.quadrature", c["ar.quadrature"] in ("exact", "midpoint"), "must be exact or midpoint")
    for key in ("sweep.per_decade", "resolvent.per_decade", "sweep.rays", "sweep.forcings", "deriv.forcings"):
        need(key, c[key] >= 1, "must be positive")
    for key in ("eig.counts", "exponents.sweep_r", "ar.exponents", "decay.beta_fractions", "eig.beta_fractions", "maxreg.ps"):
        _floats(key, c[key])
    for r in _floats("exponents.sweep_r", c["exponents.sweep_r"]):
        need("exponents.sweep_r", r > 1, "entries must exceed 1")
    _weights("weight.omega", c["weight.omega"])
    _weights("weight.sweep", c["weight.sweep"])


def hashed_config(c):
    """The configuration without output settings, which do not affect results."""
    return {k: v for k, v in c.items() if not k.startswith("output.")}


# ---------------------------------------------------------------------------
# checks


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    experiment: str = ""


def _grid(c):
    return cs.build_grid(c["grid.Lx"], c["grid.Ly"], c["grid.Nx"], c["grid.Ny"])


def _axial(c):
    return cyl.AxialGrid(c["axial.L"], c["axial.M"])


def _decades(lo, hi, per_decade):
    n = int(round(math.log10(hi / lo) * per_decade)) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _sector(c, grid):
    th = cs.thresholds(grid)
    beta, alpha = c["rates.beta"], c["rates.alpha"]
    info = cs.sector_params(th.alpha_bar, beta, alpha)
    if not info.valid:
        raise ParameterError(info.reason)
    return th, info.eps_star * c["sector.eps_fraction"]


# ---------------------------------------------------------------------------
# subcommands


def run_eig(c, rep: Reporter):
    Lx, Ly = c["grid.Lx"], c["grid.Ly"]
    counts = [int(n) for n in _floats("eig.counts", c["eig.counts"])]
    rows = cs.threshold_convergence(Lx, Ly, counts)
    a0 = PI**2 * (1 / Lx**2 + 1 / Ly**2)
    a1 = PI**2 / max(Lx, Ly) ** 2
    table = []
    for row in rows:
        row["err0"] = abs(row["alpha0"] - a0) / a0
        row["err1"] = abs(row["alpha1"] - a1) / a1
        table.append(row)
    rep.csv(
        "thresholds.csv",
        ["Nx", "Ny", "h", "alpha0", "alpha1", "alpha_bar", "rel_err0", "rel_err1"],
        [[r["Nx"], r["Ny"], r["h"], r["alpha0"], r["alpha1"], r["alpha_bar"], r["err0"], r["err1"]] for r in table],
    )
    fine = table[-1]
    grid = _grid(c)
    th = cs.thresholds(grid)
    eps_rows = []
    for frac in _floats("eig.beta_fractions", c["eig.beta_fractions"]):
        beta = frac * math.sqrt(th.alpha_bar)
        alpha = 0.5 * (th.alpha_bar - beta**2)
        info = cs.sector_params(th.alpha_bar, beta, alpha)
        eps_rows.append([beta, alpha, info.eps_star, info.valid])
    rep.csv("sector.csv", ["beta", "alpha", "eps_star", "valid"], eps_rows)
    orders = [(r["order0"], r["order1"]) for r in table if r["order0"] is not None]
    min_order = min(min(o) for o in orders) if orders else math.nan
    # pairwise orders against the analytic values are the primary measure
    pair = []
    for a, b in zip(table[:-1], table[1:]):
        pair.append(min(math.log2(a["err0"] / b["err0"]), math.log2(a["err1"] / b["err1"])))
    rep.json(
        "thresholds.json",
        {
            "extents": [Lx, Ly],
            "counts": [[r["Nx"], r["Ny"]] for r in table],
            "grid": [grid.Nx, grid.Ny],
            "alpha0": th.alpha0,
            "alpha1": th.alpha1,
            "alpha_bar": th.alpha_bar,
            "analytic": {"alpha0": a0, "alpha1": a1},
            "convergence": table,
            "observed_order": min(pair),
            "richardson_order": min_order,
            "sector": [dict(zip(["beta", "alpha", "eps_star", "valid"], r)) for r in eps_rows],
        },
    )
    rep.plot_script("plot_thresholds.py", "thresholds.csv", "h", ["rel_err0", "rel_err1"], logx=True, logy=True)

    def draw(ax):
        hs = [r["h"] for r in table]
        ax.loglog(hs, [r["err0"] for r in table], "o-", label="alpha0")
        ax.loglog(hs, [r["err1"] for r in table], "s-", label="alpha1")
        ax.set_xlabel("h")
        ax.set_ylabel("relative error")
        ax.set_title("threshold convergence")
        ax.legend()

    rep.figure("thresholds.png", draw)
    return [
        Check("eig.order", min(pair) >= c["eig.min_order"], f"order {min(pair):.3f}"),
        Check(
            "eig.rel_error",
            max(fine["err0"], fine["err1"]) <= c["eig.max_rel_error"],
            f"rel err {max(fine['err0'], fine['err1']):.2e}",
        ),
    ]


def run_ar(c, rep: Reporter):
    r = c["ar.r"]
    depths = list(range(1, c["ar.depths"] + 1))
    center = (0.5, 0.5)
    box = (0.0, 0.0, 1.0)
    rows, checks = [], []
    for a in _floats("ar.exponents", c["ar.exponents"]):
        w = PowerWeight(a, center)
        prof = ar_profile(w, r, depths, box, c["ar.quadrature"])
        dw, rd = dual_weight(w, r)
        dprof = ar_profile(dw, rd, depths, box, c["ar.quadrature"])
        for d, v, dv in zip(depths, prof, dprof):
            rows.append([a, r, d, v, dv])
        div = is_divergent(prof)
        inside = w.in_ar(r)
        checks.append(Check(f"ar.range[a={a:g}]", div != inside, f"divergent={div}, in A_r={inside}"))
        if inside and math.isfinite(prof[-1]):
            dual_err = abs(dprof[-1] - prof[-1] ** (rd / r)) / dprof[-1]
            checks.append(Check(f"ar.duality[a={a:g}]", dual_err <= 1e-10, f"rel err {dual_err:.1e}"))
        if a == 0:
            checks.append(Check("ar.unit", all(v == 1.0 for v in prof), "A_r(1) = 1"))
    rep.csv("ar.csv", ["exponent", "r", "depth", "estimate", "dual_estimate"], rows)
    rep.json("ar.json", {"r": r, "depths": depths, "center": center, "box": box, "checks": [vars(k) for k in checks]})
    rep.plot_script("plot_ar.py", "ar.csv", "depth", ["estimate"], logy=True, group="exponent")

    def draw(ax):
        for a in sorted({row[0] for row in rows}):
            pts = [(row[2], row[3]) for row in rows if row[0] == a and math.isfinite(row[3])]
            if pts:
                ax.semilogy(*zip(*pts), "o-", label=f"a={a:g}")
        ax.set_xlabel("depth")
        ax.set_ylabel("A_r estimate")
        ax.set_title(f"dyadic A_r, r={r:g}")
        ax.legend(fontsize=7)

    rep.figure("ar.png", draw)
    return checks


def run_mode_solve(c, rep: Reporter):
    grid = _grid(c)
    params = ms.SpectralParams(complex(c["mode.lam_re"], c["mode.lam_im"]), c["mode.xi"], c["rates.beta"], c["rates.alpha"])
    system = ms.assemble(grid, params)  # raises DegenerateModeError at eta = 0
    rng = np.random.default_rng(c["seed"])
    f, g = ms.smooth_forcing(grid, rng)
    sol = ms.solve_mode(system, f, g)
    b = ms._rhs(grid, f, g)
    res = float(np.linalg.norm(system.apply(sol.state) - b) / np.linalg.norm(b))
    it = system.solve_iterative(b)
    agree = float(np.linalg.norm(it - sol.state) / np.linalg.norm(sol.state))
    weight = _weights("weight.omega", c["weight.omega"])[0]
    est = ms.mode_estimate_ratio(grid, params, f, g, c["exponents.r"], weight, solution=sol)
    cond = system.condition_estimate()
    rep.json(
        "mode_solve.json",
        {
            "lambda": params.lam,
            "xi": params.xi,
            "beta": params.beta,
            "residual": res,
            "iterative_agreement": agree,
            "condition_estimate": cond,
            "estimate": {"lhs": est.lhs, "rhs": est.rhs, "ratio": est.ratio},
        },
    )
    X, Y = grid.coords("un")
    rep.csv(
        "mode_solve_un.csv",
        ["x", "y", "re_un", "im_un", "re_p", "im_p"],
        zip(X.ravel(), Y.ravel(), sol.un.real.ravel(), sol.un.imag.ravel(), sol.p.real.ravel(), sol.p.imag.ravel()),
    )
    rep.plot_script("plot_mode_solve.py", "mode_solve_un.csv", "x", ["re_un", "im_un"], group="y")

    def draw(ax):
        im = ax.imshow(np.abs(sol.un).T, origin="lower", extent=(0, grid.Lx, 0, grid.Ly))
        ax.figure.colorbar(im, ax=ax)
        ax.set_title("|u_n|")

    rep.figure("mode_solve.png", draw)
    return [
        Check("mode-solve.residual", res <= ms.RESIDUAL_TOL, f"{res:.1e}"),
        Check("mode-solve.iterative", agree <= 1e-9, f"{agree:.1e}"),
    ]


def run_mode_sweep(c, rep: Reporter):
    grid = _grid(c)
    th, eps = _sector(c, grid)
    s = {k.split(".", 1)[1]: v for k, v in c.items() if k.startswith("sweep.")}
    mags = _decades(s["lam_min"], s["lam_max"], s["per_decade"])
    xs = _decades(s["xi_min"], s["xi_max"], s["per_decade"])
    xis = np.concatenate([-xs[::-1], xs])
    weights = _weights("weight.sweep", c["weight.sweep"])
    rs = _floats("exponents.sweep_r", c["exponents.sweep_r"])
    rows = ms.estimate_sweep(
        grid, c["rates.alpha"], c["rates.beta"], eps, mags, xis, weights, rs, s["rays"], s["forcings"], c["seed"]
    )
    rep.csv(
        "mode_sweep.csv",
        ["re_lambda", "im_lambda", "xi", "beta", "r", "weight_id", "lhs", "rhs", "ratio"],
        [[row.lam.real, row.lam.imag, row.xi, row.beta, row.r, row.weight_id, row.lhs, row.rhs, row.ratio] for row in rows],
    )
    checks, summaries = [], {}
    for w in weights:
        for r in rs:
            sub = [row for row in rows if row.weight_id == w.ident and row.r == r]
            sm = ms.sweep_summary(sub, s["per_decade"] + 1, s["growth_factor"])
            key = f"{w.ident}|r={r:g}"
            summaries[key] = sm
            ok = sm["max_over_median"] <= s["ratio_limit"] and not sm["monotone_growth"]
            checks.append(Check(f"mode-sweep[{key}]", ok, f"max/median {sm['max_over_median']:.2f}"))
    rep.json("mode_sweep.json", {"eps": eps, "alpha_bar_h": th.alpha_bar, "summaries": summaries})
    rep.plot_script("plot_mode_sweep.py", "mode_sweep.csv", "xi", ["ratio"], group="weight_id")

    def draw(ax):
        rho = np.array([row.rho for row in rows])
        ax.loglog(rho, [row.ratio for row in rows], ".", alpha=0.4)
        ax.set_xlabel("|lambda + alpha|")
        ax.set_ylabel("LHS / RHS")
        ax.set_title("per-mode estimate ratios")

    rep.figure("mode_sweep.png", draw)
    return checks


def deriv_points(beta, alpha):
    return [
        ms.SpectralParams(1 + 2j, 1.3, beta, alpha),
        ms.SpectralParams(0.5, -0.7, beta, alpha),
        ms.SpectralParams(-0.2 + 1j, 0.1, beta, alpha),
        ms.SpectralParams(10 - 5j, 3.0, beta, alpha),
        ms.SpectralParams(2 + 0.5j, -5.0, beta, alpha),
    ]


def derivative_deviation(grid, params, f, delta):
    """Relative distance between the derivative solve and a central difference."""
    w = ms.derivative_solve(grid, params, f).state
    up = ms.ModeSystem(grid, params.replace(xi=params.xi + delta)).solve(f).state
    um = ms.ModeSystem(grid, params.replace(xi=params.xi - delta)).solve(f).state
    fd = (up - um) / (2 * delta)
    return float(np.linalg.norm(fd - w) / np.linalg.norm(w))


def run_deriv_check(c, rep: Reporter):
    grid = _grid(c)
    rng = np.random.default_rng(c["seed"])
    delta = c["deriv.delta"]
    rows = []
    for j in range(c["deriv.forcings"]):
        f, _ = ms.smooth_forcing(grid, rng, with_g=False)
        f[: grid.nvel] += 0.1 * (rng.standard_normal(grid.nvel) + 1j * rng.standard_normal(grid.nvel))
        for params in deriv_points(c["rates.beta"], c["rates.alpha"]):
            dev = derivative_deviation(grid, params, f, delta)
            est = ms.derivative_estimate_ratio(grid, params, f, c["exponents.r"])
            rows.append([j, params.lam.real, params.lam.imag, params.xi, dev, est.ratio])
    rep.csv("deriv_check.csv", ["forcing", "re_lambda", "im_lambda", "xi", "rel_deviation", "estimate_ratio"], rows)
    worst = max(r[4] for r in rows)
    rep.json("deriv_check.json", {"delta": delta, "max_rel_deviation": worst, "max_estimate_ratio": max(r[5] for r in rows)})
    rep.plot_script("plot_deriv_check.py", "deriv_check.csv", "xi", ["rel_deviation"], logy=True, group="forcing")

    def draw(ax):
        ax.semilogy([r[3] for r in rows], [r[4] for r in rows], "o")
        ax.axhline(c["deriv.tol"], color="k", lw=0.8)
        ax.set_xlabel("xi")
        ax.set_ylabel("relative deviation")
        ax.set_title("derivative system vs central differences")

    rep.figure("deriv_check.png", draw)
    return [Check("deriv-check", worst <= c["deriv.tol"], f"max dev {worst:.2e}")]


def run_resolvent_sweep(c, rep: Reporter):
    grid, axial = _grid(c), _axial(c)
    beta, alpha = c["rates.beta"], c["rates.alpha"]
    th, eps = _sector(c, grid)
    mags = _decades(c["sweep.lam_min"], c["resolvent.lam_max"], c["resolvent.per_decade"])
    weight = _weights("weight.omega", c["weight.omega"])[0]
    spec = MixedNormSpec(c["exponents.q"], c["exponents.r"], beta, weight)
    rows = []
    for theta, rho, lam in ms.sweep_lambdas(alpha, eps, mags, c["sweep.rays"]):
        est = cyl.resolvent_norm_estimate(grid, axial, lam, beta, alpha, spec, c["resolvent.ensemble"], c["seed"])
        rows.append([lam.real, lam.imag, theta, est.product, est.ensemble_size, c["seed"], rho])
    rep.csv(
        "resolvent_sweep.csv",
        ["re_lambda", "im_lambda", "ray_angle", "product_estimate", "ensemble_size", "sweep_seed", "abs_lambda_alpha"],
        rows,
    )
    prods = np.array([r[3] for r in rows])
    ratio = float(prods.max() / np.median(prods))
    checks = [Check("resolvent.max_over_median", ratio <= c["resolvent.ratio_limit"], f"{ratio:.2f}")]
    summary = {"max": prods.max(), "median": np.median(prods), "max_over_median": ratio, "eps": eps}
    # beta = 0 oracle on the configured (coarse) grid
    lam0 = complex(1.0, 1.0)
    power = cyl.resolvent_norm_estimate(grid, axial, lam0, 0.0, alpha, MixedNormSpec(), 8, c["seed"]).norm
    dense = cyl.dense_resolvent_norm(grid, axial, lam0)
    rel = abs(power - dense) / dense
    summary["oracle"] = {"lambda": lam0, "power": power, "dense": dense, "rel_diff": rel}
    checks.append(Check("resolvent.oracle", rel <= c["resolvent.oracle_tol"], f"rel diff {rel:.1e}"))
    # snapshot of one resolvent solution
    F = cyl.CylinderField.from_function(
        grid,
        axial,
        {"u1": lambda X, Y, z: np.sin(X) * np.sin(Y) * np.exp(-z * z), "un": lambda X, Y, z: np.sin(X) * np.sin(2 * Y) * z * np.exp(-z * z)},
        MixedNormSpec(beta=beta),
    )
    F = ev.leray_project(F)
    F.data[np.abs(F.x) > axial.L / 2] = 0
    U, _ = cyl.resolvent_apply(F, 1.0)
    cyl.write_snapshot(rep.path("resolvent_U.bin"), U, config_hash=rep.hash, seed=rep.seed)
    rep.json("resolvent_sweep.json", summary)
    rep.plot_script("plot_resolvent.py", "resolvent_sweep.csv", "abs_lambda_alpha", ["product_estimate"], logx=True, group="ray_angle")

    def draw(ax):
        for theta in sorted({r[2] for r in rows}):
            pts = [(r[6], r[3]) for r in rows if r[2] == theta]
            ax.semilogx(*zip(*pts), "o-", label=f"theta={theta:.2f}")
        ax.set_xlabel("|lambda + alpha|")
        ax.set_ylabel("|lambda + alpha| ||R||")
        ax.set_title("resolvent products")
        ax.legend(fontsize=7)

    rep.figure("resolvent_sweep.png", draw)
    return checks


def rbound_constant_family(coeffs, N, trials, seed, dim=16, exhaustive=True):
    """R-bound estimate of ``{c_j I}`` on C^dim with the Euclidean norm."""
    fam = [lambda X, cj=cj: cj * X for cj in coeffs]
    nrm = lambda Y: np.linalg.norm(Y, axis=0)  # noqa: E731
    return cyl.rademacher_rbound(
        fam,
        2.0,
        trials,
        N,
        sample_x=cyl.standard_ensemble(dim),
        norm_x=nrm,
        norm_y=nrm,
        seed=seed,
        exhaustive_max=N if exhaustive else 0,
        sign_draws=256,
    )


def rbound_multiplier(grid, lam, beta, alpha, xi_points, q, N, trials, seed, weight=PowerWeight(), r=2.0):
    xs = np.logspace(-1, 1, xi_points)
    xis = np.concatenate([-xs[::-1], xs])
    fam = cyl.multiplier_family(grid, lam, xis, beta, alpha, weight)
    wy = fam[0].output_weights()
    vel = grid.bundle("velocity", weight)
    sampler = cyl.standard_ensemble(grid.nstate)

    def sample_x(rng, n):
        X = sampler(rng, n)
        X[grid.nvel :] = 0
        return X

    from .weights import lr_norm

    return cyl.rademacher_rbound(
        fam,
        q,
        trials,
        N,
        sample_x=sample_x,
        norm_x=lambda X: lr_norm(vel.matrix @ X, vel.weights, r),
        norm_y=lambda Y: lr_norm(Y, wy, r),
        seed=seed,
    )


def run_rbound(c, rep: Reporter):
    seed, N, trials = c["seed"], c["rbound.N"], c["rbound.trials"]
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-3, 3, size=5)
    sup = float(np.max(np.abs(coeffs)))
    est = rbound_constant_family(coeffs, N, trials, seed)
    rows = [["constant", 0, est, sup]]
    grid = _grid(c)
    lam = complex(c["rbound.lam_re"], c["rbound.lam_im"])
    p0 = c["rbound.xi_points"]
    e1 = rbound_multiplier(grid, lam, c["rates.beta"], c["rates.alpha"], p0, c["exponents.q"], N, trials, seed)
    e2 = rbound_multiplier(grid, lam, c["rates.beta"], c["rates.alpha"], 2 * p0 - 1, c["exponents.q"], N, trials, seed)
    rows += [["multiplier", p0, e1, math.nan], ["multiplier", 2 * p0 - 1, e2, math.nan]]
    rep.csv("rbound.csv", ["family", "xi_points", "estimate", "reference"], rows)
    drift = abs(e2 - e1) / e1
    rep.json("rbound.json", {"constant": {"estimate": est, "sup": sup}, "multiplier": {"coarse": e1, "fine": e2, "drift": drift}})
    rep.plot_script("plot_rbound.py", "rbound.csv", "xi_points", ["estimate"], group="family")

    def draw(ax):
        ax.bar(["const", f"m ({p0})", f"m ({2 * p0 - 1})"], [est, e1, e2])
        ax.axhline(sup, color="k", lw=0.8)
        ax.set_ylabel("R-bound estimate")
        ax.set_title("Rademacher estimates")

    rep.figure("rbound.png", draw)
    return [
        Check("rbound.constant", abs(est - sup) <= c["rbound.tol"] * sup, f"{est:.4f} vs {sup:.4f}"),
        Check("rbound.multiplier", drift <= c["rbound.stability"], f"drift {drift:.3f}"),
    ]


def run_decay(c, rep: Reporter):
    grid, axial = _grid(c), _axial(c)
    ab = cs.thresholds(grid).alpha_bar
    times = np.linspace(0.0, c["decay.t_max"], c["decay.points"])
    rows, summary, rates = [], [], []
    spec = MixedNormSpec(c["exponents.q"], c["exponents.r"], 0.0, _weights("weight.omega", c["weight.omega"])[0])
    for frac in _floats("decay.beta_fractions", c["decay.beta_fractions"]):
        beta = frac * math.sqrt(ab)
        spec_b = MixedNormSpec(spec.q, spec.r, beta, spec.weight)
        res = ev.decay_experiment(grid, axial, beta, ab, times, c["decay.samples"], c["seed"], spec_b)
        for t, n in zip(times, res.norms[0]):
            rows.append([beta, t, n])
        rates.append(res.fitted_rate)
        summary.append({"beta": beta, "fitted_rate": res.fitted_rate, "threshold": res.threshold, "rates": res.rates})
    rep.csv("decay.csv", ["beta", "t", "norm"], rows)
    rep.json(
        "decay.json",
        {"alpha_bar_h": ab, "p": c["exponents.p"], "q": spec.q, "r": spec.r, "runs": summary},
    )
    rep.plot_script("plot_decay.py", "decay.csv", "t", ["norm"], logy=True, group="beta")

    def draw(ax):
        for beta in sorted({r[0] for r in rows}):
            pts = [(r[1], r[2]) for r in rows if r[0] == beta]
            ax.semilogy(*zip(*pts), label=f"beta={beta:.3f}")
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.set_title("semigroup decay")
        ax.legend(fontsize=7)

    rep.figure("decay.png", draw)
    checks = []
    for s in summary:
        ok = s["fitted_rate"] <= -s["threshold"] + c["decay.slack"]
        checks.append(Check(f"decay[beta={s['beta']:.3f}]", ok, f"slope {s['fitted_rate']:.3f}"))
    mono = all(b > a for a, b in zip(rates[:-1], rates[1:]))
    checks.append(Check("decay.monotone_in_beta", mono, "decay rates decrease as beta grows"))
    return checks


def maxreg_run(grid, axial, beta, ab, members, K, ps, alpha_t, seed, spec=None):
    T = ev.horizon(ab, beta, alpha_t)
    fe = ev.smooth_forcing_ensemble(grid, axial, beta, members, seed)
    return ev.maxreg_ratio(fe, ev.TimeGrid(T, K), grid, axial, beta, ps, (0.0, alpha_t), spec)


def run_maxreg(c, rep: Reporter):
    grid, axial = _grid(c), _axial(c)
    beta = c["rates.beta"]
    ab = cs.thresholds(grid).alpha_bar
    alpha_t = c["maxreg.alpha_t_fraction"] * (ab - beta**2)
    ps = _floats("maxreg.ps", c["maxreg.ps"])
    weight = _weights("weight.omega", c["weight.omega"])[0]
    spec = MixedNormSpec(c["exponents.q"], c["exponents.r"], beta, weight)
    coarse = maxreg_run(grid, axial, beta, ab, c["maxreg.members"], c["maxreg.K"], ps, alpha_t, c["seed"], spec)
    tg = coarse.time_grid
    rep.csv(
        "maxreg.csv",
        ["t", "norm_U", "norm_Ut", "norm_AU", "norm_F"],
        zip(tg.times, coarse.series["U"], coarse.series["Ut"], coarse.series["AU"], coarse.series["F"]),
    )
    summary = {"p_values": ps, "q": spec.q, "r": spec.r, "beta": beta, "alpha_t": alpha_t, "threshold": ab - beta**2}
    checks = []
    fine = None
    if c["maxreg.refine"]:
        g2 = cs.build_grid(grid.Lx, grid.Ly, 2 * grid.Nx, 2 * grid.Ny)
        fine = maxreg_run(g2, axial, beta, cs.thresholds(g2).alpha_bar, c["maxreg.members"], 2 * c["maxreg.K"], ps, alpha_t, c["seed"], spec)
    for p in ps:
        for a in (0.0, alpha_t):
            key = f"p={p:g},alpha_t={a:g}"
            sm = coarse.summary(p, a)
            entry = {"coarse": sm}
            ok = math.isfinite(sm["max"])
            if fine is not None:
                sf = fine.summary(p, a)
                drift = abs(sf["max"] - sm["max"]) / sm["max"]
                entry.update(fine=sf, drift=drift)
                ok = ok and drift <= c["maxreg.stability"]
            summary[key] = entry
            checks.append(Check(f"maxreg[{key}]", ok, f"max {sm['max']:.3f}" + (f", drift {entry['drift']:.3f}" if fine else "")))
    rep.json("maxreg.json", summary)
    rep.plot_script("plot_maxreg.py", "maxreg.csv", "t", ["norm_U", "norm_Ut", "norm_AU", "norm_F"])

    def draw(ax):
        for name in ("U", "Ut", "AU", "F"):
            ax.plot(tg.times, coarse.series[name], label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.set_title("maximal regularity, member 0")
        ax.legend(fontsize=7)

    rep.figure("maxreg.png", draw)
    return checks


RUNNERS = {
    "eig": run_eig,
    "ar": run_ar,
    "mode-solve": run_mode_solve,
    "mode-sweep": run_mode_sweep,
    "deriv-check": run_deriv_check,
    "resolvent-sweep": run_resolvent_sweep,
    "rbound": run_rbound,
    "decay": run_decay,
    "maxreg": run_maxreg,
}


def _quick(c):
    q = dict(c)
    q.update(QUICK)
    validate(q)
    return q


def run(subcommand, config, out_dir=None):
    """Execute ``subcommand``; returns ``(exit_code, checks)``."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    out = Path(out_dir or config["output.dir"] or os.environ.get(OUTPUT_ENV) or "stokescyl-out")
    figures = config["output.figures"]
    if subcommand == "all":
        cfg = _quick(config)
        chash = config_hash(hashed_config(cfg))
        checks = []
        table = []
        for name, fn in RUNNERS.items():
            t0 = time.perf_counter()
            res = fn(cfg, Reporter(out / name, chash, cfg["seed"], figures))
            for k in res:
                k.experiment = name
            log.info("%s finished in %.1f s", name, time.perf_counter() - t0)
            checks += res
            table.append({"experiment": name, "passed": all(k.passed for k in res), "checks": [vars(k) for k in res]})
        Reporter(out, chash, cfg["seed"], figures).json("summary.json", {"experiments": table})
    else:
        chash = config_hash(hashed_config(config))
        checks = RUNNERS[subcommand](config, Reporter(out / subcommand, chash, config["seed"], figures))
    return (0 if all(k.passed for k in checks) else 1), checks


def build_parser():
    p = argparse.ArgumentParser(
        prog="stokescyl",
        description="Stokes resolvent and semigroup experiments on a weighted cylinder.",
        epilog="Any configuration field can be set with --section.key=value, e.g. --grid.Nx=32.",
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--output", help=f"output directory (default: ${OUTPUT_ENV} or ./stokescyl-out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    overrides = []
    for item in rest:
        if not item.startswith("--") or "=" not in item:
            parser.print_usage(sys.stderr)
            print(f"stokescyl: error: unrecognized argument {item!r}", file=sys.stderr)
            return 2
        overrides.append(item[2:])
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = load_config(args.config, overrides)
        code, checks = run(args.subcommand, config, args.output)
    except ConfigError as exc:
        print(f"stokescyl: config error: {exc}", file=sys.stderr)
        return 2
    except DegenerateModeError as exc:
        print(f"stokescyl: degenerate mode (eta = 0): {exc}", file=sys.stderr)
        return 2
    except (GridError, ParameterError) as exc:
        print(f"stokescyl: invalid parameters: {exc}", file=sys.stderr)
        return 2
    width = max(len(k.name) for k in checks) if checks else 0
    for k in checks:
        print(f"{'PASS' if k.passed else 'FAIL'}  {k.name:<{width}}  {k.detail}")
    if args.subcommand == "all":
        print()
        print(f"{'experiment':<16}{'checks':>7}{'failed':>8}  status")
        for name in RUNNERS:
            mine = [k for k in checks if k.experiment == name]
            bad = sum(not k.passed for k in mine)
            print(f"{name:<16}{len(mine):>7}{bad:>8}  {'PASS' if not bad else 'FAIL'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
