"""Validation studies built on the regularized scheme.

Each study returns a :class:`StudyReport`; :func:`write_study` turns one into
a self-contained output directory.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .barenblatt import BarenblattParams, on_grid
from .diagnostics import (
    DiagnosticsRecord,
    dissipation_budget,
    records,
    write_records_csv,
)
from .grid import Grid, face_difference, make_grid
from .model import GrowthModel, Params
from .scheme import State, Trajectory, make_state, run

SUMMARY_SCHEMA = "crossdiff.study/1"


@dataclass
class Scenario:
    grid: Grid
    model: GrowthModel
    initial: State
    t_end: float
    dt: float
    params: Params

    def run(self, **overrides) -> Trajectory:
        return run(self.initial, self.t_end, self.dt, replace(self.params, **overrides), self.model, self.grid)


@dataclass
class StudyReport:
    name: str
    levels: list[float]
    errors: list[float] = field(default_factory=list)
    orders: list[float] = field(default_factory=list)
    passed: bool = False
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    series: dict[str, list[DiagnosticsRecord]] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        return {
            "schema": SUMMARY_SCHEMA,
            "version": __version__,
            "study": self.name,
            "passed": self.passed,
            "checks": self.checks,
            "levels": self.levels,
            "errors": self.errors,
            "orders": self.orders,
            "details": self.details,
        }


def observed_orders(levels: Sequence[float], errors: Sequence[float]) -> list[float]:
    """``log(e_k / e_{k+1}) / log(h_k / h_{k+1})`` for consecutive levels."""
    out = []
    for (h0, e0), (h1, e1) in zip(zip(levels, errors), zip(levels[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            out.append(math.inf if e1 == 0 else math.nan)
    return out


def _fan_out(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- profiles

def _cap(x, center, radius):
    r2 = sum((xa - ca) ** 2 for xa, ca in zip(x, center))
    return np.maximum(1.0 - r2 / radius**2, 0.0)


def _gauss(x, center, width):
    r2 = sum((xa - ca) ** 2 for xa, ca in zip(x, center))
    return np.exp(-r2 / (2.0 * width**2))


def _point(v, dim):
    v = [v] if np.isscalar(v) else list(v)
    return tuple(v) if len(v) == dim else tuple(v[:1]) * dim


def initial_state(spec: dict[str, Any], grid: Grid, params: Params | None = None) -> State:
    """Build initial densities from a named profile.

    ``constant``: ``u1``, ``u2`` values.  ``bump``: one cap-shaped bump
    ``amp * (1 - |x-c|^2/r^2)_+`` shared by both species with amplitudes
    ``amp1``/``amp2`` plus ``base1``/``base2``.  ``two-bumps``: one cap per
    species at ``center1``/``center2``.  ``gaussians``: smooth positive data,
    one Gaussian per species on top of a base level.  ``barenblatt-split``:
    the source-type profile at time 0 split as ``u1 = eta w``,
    ``u2 = (1 - eta) w`` (requires ``params`` for the limit-equation
    coefficients).
    """
    kind = spec.get("profile", "constant")
    x = grid.coords()
    mid = tuple(o + L / 2 for o, L in zip(grid.origin, grid.lengths))
    if kind == "constant":
        u1 = np.full(grid.shape, float(spec.get("u1", 0.0)))
        u2 = np.full(grid.shape, float(spec.get("u2", 0.0)))
    elif kind == "bump":
        cap = _cap(x, _point(spec.get("center", mid), grid.dim), float(spec.get("radius", 0.25 * min(grid.lengths))))
        u1 = float(spec.get("base1", 0.0)) + float(spec.get("amp1", 0.5)) * cap
        u2 = float(spec.get("base2", 0.0)) + float(spec.get("amp2", 0.0)) * cap
    elif kind == "two-bumps":
        r = float(spec.get("radius", 0.08 * min(grid.lengths)))
        c1 = spec.get("center1", [o + 0.2 * L for o, L in zip(grid.origin, grid.lengths)])
        c2 = spec.get("center2", [o + 0.8 * L for o, L in zip(grid.origin, grid.lengths)])
        u1 = float(spec.get("base1", 0.0)) + float(spec.get("amp1", 0.3)) * _cap(x, _point(c1, grid.dim), r)
        u2 = float(spec.get("base2", 0.0)) + float(spec.get("amp2", 0.3)) * _cap(x, _point(c2, grid.dim), r)
    elif kind == "gaussians":
        L = min(grid.lengths)
        c1 = spec.get("center1", [o + 0.5 * Lx for o, Lx in zip(grid.origin, grid.lengths)])
        c2 = spec.get("center2", [o + 0.3 * Lx for o, Lx in zip(grid.origin, grid.lengths)])
        s1 = float(spec.get("width1", 0.1 * L))
        s2 = float(spec.get("width2", 0.07 * L))
        u1 = float(spec.get("base1", 0.05)) + float(spec.get("amp1", 0.4)) * _gauss(x, _point(c1, grid.dim), s1)
        u2 = float(spec.get("base2", 0.05)) + float(spec.get("amp2", 0.3)) * _gauss(x, _point(c2, grid.dim), s2)
    elif kind == "barenblatt-split":
        if params is None:
            raise ValueError("barenblatt-split needs the run parameters")
        bp = BarenblattParams.for_limit_equation(
            params.mu, params.gamma, float(spec.get("mass", 1.0)), float(spec.get("t0", 0.15)),
            grid.dim, _point(spec.get("center", mid), grid.dim),
        )
        w = on_grid(grid, 0.0, bp)
        eta = float(spec.get("eta", 1.0))
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {eta}")
        u1, u2 = eta * w, (1.0 - eta) * w
    else:
        raise ValueError(f"unknown initial profile {kind!r}")
    return make_state(u1, u2)


# ---------------------------------------------------------------- Barenblatt / PME

@dataclass(frozen=True)
class BarenblattSetup:
    n: int = 128
    eta: float = 1.0
    gamma: float = 2.0
    mu: float = 1.0
    nu: float | None = None
    mass: float = 1.0
    t0: float = 0.15
    length: float = 4.0
    t_end: float = 1.0
    w_p: float = 1.0
    epsilon: float | None = None
    dt: float | None = None

    def oracle(self) -> BarenblattParams | None:
        # zero mass has no source profile; the exact solution is then w = 0
        if self.mass == 0:
            return None
        return BarenblattParams.for_limit_equation(self.mu, self.gamma, self.mass, self.t0, 1, (0.0,))

    def exact(self, grid: Grid, t: float) -> np.ndarray:
        p = self.oracle()
        return np.zeros(grid.shape) if p is None else on_grid(grid, t, p)

    def scenario(self) -> Scenario:
        grid = make_grid(1, self.n, self.length, -self.length / 2)
        h = grid.h[0]
        params = Params(
            mu=self.mu, nu=self.mu if self.nu is None else self.nu, gamma=self.gamma,
            epsilon=h if self.epsilon is None else self.epsilon,
        )
        w0 = self.exact(grid, 0.0)
        init = make_state(self.eta * w0, (1.0 - self.eta) * w0)
        dt = h if self.dt is None else self.dt
        return Scenario(grid, GrowthModel.zero(self.w_p), init, self.t_end, dt, params)


def _pme_level(setup: BarenblattSetup):
    sc = setup.scenario()
    traj = sc.run()
    exact = setup.exact(sc.grid, setup.t_end)
    err = sc.grid.integrate(np.abs(traj.final.w - exact))
    min_u = min(float(min(s.u1.min(), s.u2.min())) for s in traj.states)
    split = max(s.identity_residual for s in traj.states)
    return err, min_u, split, records(traj)


def pme_validation(
    levels: Sequence[int] = (128, 256, 512, 1024), eta: float = 1.0, gamma: float = 2.0, mu: float = 1.0,
    min_order: float = 0.8, max_rel_error: float = 0.02, workers: int = 1, **setup_kw,
) -> StudyReport:
    """L1 error of the simulated total density against the source-type solution.

    Rates vanish, ``mu = nu``, ``epsilon = h`` and ``dt = h`` at every level.
    """
    setups = [BarenblattSetup(n=n, eta=eta, gamma=gamma, mu=mu, **setup_kw) for n in levels]
    results = _fan_out(_pme_level, setups, workers)
    hs = [setups[0].length / n for n in levels]
    errs = [r[0] for r in results]
    # relative to the oracle mass; absolute when that mass is zero
    mass = setups[0].mass or 1.0
    orders = observed_orders(hs, errs)
    rep = StudyReport("pme", [float(h) for h in hs], errs, orders)
    rep.details = {
        "n": list(levels),
        "relative_errors": [e / mass for e in errs],
        "min_u": [r[1] for r in results],
        "max_split_residual": [r[2] for r in results],
        "min_order": min_order,
        "max_rel_error": max_rel_error,
    }
    rep.checks = {
        "order": bool(orders) and min(orders) >= min_order,
        "final_error": errs[-1] / mass <= max_rel_error,
        "nonnegative": min(r[1] for r in results) >= 0.0,
    }
    rep.passed = all(rep.checks.values())
    rep.series = {f"n{n}": r[3] for n, r in zip(levels, results)}
    return rep


# ---------------------------------------------------------------- epsilon sweeps

def h1_time_distance(a: Trajectory, b: Trajectory, power: float) -> float:
    """Discrete ``L2(0,T; H1)`` distance between ``w**power`` of two runs on one time grid."""
    ta, tb = a.times, b.times
    if len(ta) != len(tb) or np.max(np.abs(ta - tb)) > 1e-12 * max(1.0, abs(ta[-1])):
        raise ValueError("trajectories are stored on different time grids")
    grid = a.grid
    vals = []
    for sa, sb in zip(a.states, b.states):
        d = np.maximum(sa.w, 0.0) ** power - np.maximum(sb.w, 0.0) ** power
        v = grid.integrate(d * d)
        for ax in range(grid.dim):
            v += float(np.sum(face_difference(d, ax, grid) ** 2)) * grid.h[ax] * grid.face_measure(ax)
        vals.append(v)
    if len(vals) == 1:
        return math.sqrt(vals[0])
    return math.sqrt(float(np.trapezoid(vals, ta)))


def _eps_level(args):
    scenario, eps = args
    traj = scenario.run(epsilon=eps)
    return traj


def _invariants(traj: Trajectory) -> dict[str, float]:
    p = traj.params
    return {
        "max_w": max(float(s.w.max()) for s in traj.states),
        "min_u_before_clip": min(r.min_u_before_clip for r in traj.reports) if traj.reports else math.nan,
        "max_identity_residual": max(s.identity_residual for s in traj.states),
        "w_p": traj.model.w_p,
        "picard_tol": p.picard_tol,
        "linear_tol": p.linear_tol,
    }


def _sweep(name: str, scenario: Scenario, eps_levels: Sequence[float], workers: int) -> StudyReport:
    eps_levels = [float(e) for e in eps_levels]
    if any(b >= a for a, b in zip(eps_levels, eps_levels[1:])):
        raise ValueError("epsilon levels must be strictly decreasing")
    trajs = _fan_out(_eps_level, [(scenario, e) for e in eps_levels], workers)
    power = scenario.params.gamma + 1.0
    dists = [h1_time_distance(a, b, power) for a, b in zip(trajs, trajs[1:])]
    budgets = [dissipation_budget(t) for t in trajs]
    rep = StudyReport(name, eps_levels, dists)
    rep.details = {
        "distances": dists,
        "budgets": budgets,
        "invariants": [_invariants(t) for t in trajs],
        "mu": scenario.params.mu,
        "nu": scenario.params.nu,
    }
    rep.series = {f"eps{e:g}": records(t) for e, t in zip(eps_levels, trajs)}
    return rep


def budget_checks(budgets: Sequence[float], max_ratio: float = 2.0) -> dict[str, bool]:
    """Uniform-in-epsilon boundedness of the dissipation budgets along a decreasing sweep.

    ``bounded``: largest over smallest below ``max_ratio``.  ``no_growth``:
    the level-to-level changes shrink strictly, so the sequence settles
    rather than trending upward.
    """
    b = np.asarray(budgets, dtype=float)
    if len(b) == 0 or not np.all(np.isfinite(b)):
        return {"bounded": False, "no_growth": False}
    bounded = bool(b.min() > 0 and b.max() / b.min() < max_ratio) or bool(np.all(b == 0))
    steps = np.abs(np.diff(b))
    no_growth = bool(np.all(np.diff(steps) < 0)) if len(steps) > 1 else True
    return {"bounded": bounded, "no_growth": no_growth}


def epsilon_study(scenario: Scenario, eps_levels: Sequence[float], workers: int = 1) -> StudyReport:
    """Cauchy test of ``w**(gamma+1)`` in discrete ``L2(0,T;H1)`` along decreasing epsilon."""
    if scenario.params.mu != scenario.params.nu:
        raise ValueError("epsilon_study requires mu == nu; use asymmetric_mobility_study")
    rep = _sweep("epsilon", scenario, eps_levels, workers)
    d = rep.errors
    rep.checks = {"cauchy": all(b < a for a, b in zip(d, d[1:])), **budget_checks(rep.details["budgets"])}
    rep.passed = rep.checks["cauchy"]
    return rep


def asymmetric_mobility_study(scenario: Scenario, eps_levels: Sequence[float], workers: int = 1) -> StudyReport:
    """Same sweep for arbitrary mobilities; reports trends and per-level invariants only."""
    rep = _sweep("asymmetric", scenario, eps_levels, workers)
    d = rep.errors
    inv = rep.details["invariants"]
    p = scenario.params
    rep.checks = {
        "max_principle": all(i["max_w"] <= i["w_p"] + p.picard_tol for i in inv),
        "nonnegative": all(i["min_u_before_clip"] >= -10 * p.linear_tol for i in inv),
        "identity": all(i["max_identity_residual"] <= 10 * p.linear_tol for i in inv),
        "budgets_finite": all(math.isfinite(b) for b in rep.details["budgets"]),
    }
    rep.details["distances_decreasing"] = all(b < a for a, b in zip(d, d[1:]))
    rep.passed = all(rep.checks.values())
    return rep


# ---------------------------------------------------------------- segregation

def relative_overlap(state: State, grid: Grid) -> float:
    m1, m2 = grid.integrate(state.u1), grid.integrate(state.u2)
    if m1 <= 0 or m2 <= 0:
        return 0.0
    return grid.integrate(state.u1 * state.u2) / (m1 * m2)


def segregation_study(
    initial: State, params: Params, grid: Grid, t_end: float = 0.5, dt: float = 0.01,
    model: GrowthModel | None = None, threshold: float = 1e-6,
) -> StudyReport:
    """Track ``int u1 u2 / (mass1 mass2)`` over time.

    Exceeding ``threshold`` is a finding, not an error.
    """
    if grid.dim != 1:
        raise ValueError("segregation_study is one-dimensional")
    if params.mu != params.nu:
        raise ValueError("segregation_study requires mu == nu")
    model = GrowthModel.zero(max(1.0, float(initial.w.max()))) if model is None else model
    traj = run(initial, t_end, dt, params, model, grid)
    ov = [relative_overlap(s, grid) for s in traj.states]
    rep = StudyReport("segregation", [float(t) for t in traj.times], ov)
    rep.details = {
        "threshold": threshold,
        "max_relative_overlap": max(ov),
        "initial_relative_overlap": ov[0],
        "initially_disjoint": bool(np.all(initial.u1 * initial.u2 == 0)),
    }
    rep.checks = {"below_threshold": max(ov) < threshold}
    rep.passed = rep.checks["below_threshold"]
    rep.series = {"run": records(traj)}
    return rep


# ---------------------------------------------------------------- output

def _jsonable(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return _jsonable(v.item())
    return v


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, round-trip floats, non-finite values as strings."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, default=str)
    Path(path).write_text(text + "\n")


def write_study(report: StudyReport, out_dir, config: dict[str, Any] | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config is not None:
        dump_json(config, out / "config.json")
    for label, recs in report.series.items():
        write_records_csv(out / f"series_{label}.csv", recs)
    dump_json(report.summary(), out / "summary.json")
    return out
