"""Scalar functionals of a state and residual checks over a trajectory.

All gradient integrals use face differences, the same quadrature the
finite-volume operators are built from, so discrete integration by parts is
exact.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .grid import Grid, face_average, face_difference, face_mobilities, upwind_average
from .model import Params, reaction_rates
from .scheme import State, Trajectory


@dataclass
class DiagnosticsRecord:
    t: float
    mass_w: float
    mass_u1: float
    mass_u2: float
    min_u1: float
    max_u1: float
    min_u2: float
    max_u2: float
    min_w: float
    max_w: float
    identity_residual: float
    l2_w: float
    D1: float
    D2: float
    overlap: float
    eta1_min: float
    eta1_max: float
    eta2_min: float
    eta2_max: float
    eta_sum_dev: float

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        return [f"{v:.17g}" for v in asdict(self).values()]


def gradient_energy(f: np.ndarray, grid: Grid) -> float:
    """``int |grad f|^2`` by face differences."""
    total = 0.0
    for a in range(grid.dim):
        total += float(np.sum(face_difference(f, a, grid) ** 2)) * grid.h[a] * grid.face_measure(a)
    return total


def volume_fractions(state: State, params: Params):
    """``u_i / max(w, floor)`` on cells where the fractions are meaningful, and that mask."""
    floor = params.epsilon_floor
    mask = state.w > (10.0 * floor if floor > 0 else 0.0)
    den = np.maximum(state.w, floor) if floor > 0 else np.where(mask, state.w, 1.0)
    return state.u1 / den, state.u2 / den, mask


def record(state: State, params: Params, grid: Grid) -> DiagnosticsRecord:
    g = params.gamma
    u1, u2, w = state.u1, state.u2, state.w
    wp = np.maximum(w, 0.0)
    mob = face_mobilities(np.maximum(u1, 0), np.maximum(u2, 0), wp, params, grid, pressure=w)
    D2 = 0.0
    for a in range(grid.dim):
        D2 += float(np.sum(mob.combined[a] * face_difference(w, a, grid) ** 2)) * grid.h[a] * grid.face_measure(a)
    eta1, eta2, mask = volume_fractions(state, params)
    if mask.any():
        e1, e2 = eta1[mask], eta2[mask]
        eta = (float(e1.min()), float(e1.max()), float(e2.min()), float(e2.max()), float(np.max(np.abs(e1 + e2 - 1.0))))
    else:
        eta = (math.nan,) * 5
    return DiagnosticsRecord(
        t=state.t,
        mass_w=grid.integrate(w),
        mass_u1=grid.integrate(u1),
        mass_u2=grid.integrate(u2),
        min_u1=float(u1.min()),
        max_u1=float(u1.max()),
        min_u2=float(u2.min()),
        max_u2=float(u2.max()),
        min_w=float(w.min()),
        max_w=float(w.max()),
        identity_residual=state.identity_residual,
        l2_w=0.5 * grid.integrate(w * w),
        D1=gradient_energy(wp ** ((g + 1.0) / 2.0), grid),
        D2=D2,
        overlap=grid.integrate(u1 * u2),
        eta1_min=eta[0],
        eta1_max=eta[1],
        eta2_min=eta[2],
        eta2_max=eta[3],
        eta_sum_dev=eta[4],
    )


def records(traj: Trajectory) -> list[DiagnosticsRecord]:
    return [record(s, traj.params, traj.grid) for s in traj.states]


def write_records_csv(path, recs: list[DiagnosticsRecord]) -> None:
    with open(Path(path), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(DiagnosticsRecord.header())
        for r in recs:
            wr.writerow(r.row())


def dissipation_budget(traj: Trajectory) -> float:
    """Trapezoid time integral of ``int |grad w^((gamma+1)/2)|^2`` over the stored states."""
    g = traj.params.gamma
    D1 = np.array([gradient_energy(np.maximum(s.w, 0.0) ** ((g + 1.0) / 2.0), traj.grid) for s in traj.states])
    if len(D1) < 2:
        return 0.0
    return float(np.trapezoid(D1, traj.times))


@dataclass(frozen=True)
class TestFunction:
    label: str
    values: np.ndarray
    face_grad: tuple[np.ndarray, ...]


def cosine_family(grid: Grid, kmax: int = 3) -> list[TestFunction]:
    """``prod_a cos(k_a pi (x_a - x0_a) / L_a)`` for ``0 <= k_a <= kmax``.

    Each member has zero normal derivative on the box boundary.  Gradients are
    evaluated exactly at the interior face centres.
    """
    L = grid.lengths

    def along(a: int, x: np.ndarray) -> np.ndarray:
        shape = [1] * grid.dim
        shape[a] = -1
        return x.reshape(shape)

    out = []
    for ks in itertools.product(range(kmax + 1), repeat=grid.dim):
        phase = [lambda x, a=a: ks[a] * math.pi * (x - grid.origin[a]) / L[a] for a in range(grid.dim)]
        centers = [grid.axis_centers(a) for a in range(grid.dim)]
        vals = np.ones(grid.shape)
        for a in range(grid.dim):
            vals = vals * along(a, np.cos(phase[a](centers[a])))
        grads = []
        for a in range(grid.dim):
            g = np.ones(grid.face_shape(a))
            for b in range(grid.dim):
                if b == a:
                    xf = grid.axis_faces(b)
                    g = g * along(b, -ks[b] * math.pi / L[b] * np.sin(phase[b](xf)))
                else:
                    g = g * along(b, np.cos(phase[b](centers[b])))
            grads.append(g)
        label = "1" if not any(ks) else "*".join(f"cos({k}pi x{a})" for a, k in enumerate(ks) if k)
        out.append(TestFunction(label, vals, tuple(grads)))
    return out


@dataclass
class WeakResidual:
    species: int
    test: str
    residual: float


def _species_flux_pairing(u, w, gamma, phi: TestFunction, params: Params, grid: Grid) -> float:
    """``int u grad(w^gamma) . grad(phi)`` with the scheme's face averaging of ``u``."""
    p = np.maximum(w, 0.0) ** gamma
    total = 0.0
    for a in range(grid.dim):
        uf = upwind_average(u, w, a) if params.averaging == "upwind" else face_average(u, a)
        total += float(np.sum(uf * face_difference(p, a, grid) * phi.face_grad[a])) * grid.h[a] * grid.face_measure(a)
    return total


def weak_residual(traj: Trajectory, tests: list[TestFunction] | None = None) -> list[WeakResidual]:
    """Absolute residuals of the weak form of both species equations.

    For time-independent ``phi``::

        int u_i(T) phi - int u_i(0) phi + c_i int_0^T int u_i grad(w^gamma).grad(phi)
            - int_0^T int R_i phi

    with ``c_1 = mu``, ``c_2 = nu``; time integrals by the trapezoid rule over
    the stored states.
    """
    params, model, grid = traj.params, traj.model, traj.grid
    if tests is None:
        tests = cosine_family(grid)
    t = traj.times
    out = []
    for i, coef in ((1, params.mu), (2, params.nu)):
        for phi in tests:
            flux = []
            react = []
            for s in traj.states:
                u = s.u1 if i == 1 else s.u2
                R = reaction_rates(s.u1, s.u2, s.w, model)[i - 1]
                flux.append(_species_flux_pairing(u, s.w, params.gamma, phi, params, grid))
                react.append(grid.integrate(R * phi.values))
            first = traj.states[0].u1 if i == 1 else traj.states[0].u2
            last = traj.states[-1].u1 if i == 1 else traj.states[-1].u2
            res = grid.integrate(last * phi.values) - grid.integrate(first * phi.values)
            if len(t) > 1:
                res += coef * float(np.trapezoid(flux, t)) - float(np.trapezoid(react, t))
            out.append(WeakResidual(i, phi.label, abs(res)))
    return out


def mass_balance_errors(traj: Trajectory) -> np.ndarray:
    """Per stored step: ``|delta mass(w) - dt * int R(new state)|``."""
    grid, model = traj.grid, traj.model
    errs = []
    for a, b in zip(traj.states[:-1], traj.states[1:]):
        R1, R2 = reaction_rates(b.u1, b.u2, b.w, model)
        errs.append(abs(grid.integrate(b.w) - grid.integrate(a.w) - (b.t - a.t) * grid.integrate(R1 + R2)))
    return np.array(errs)


def l2_step_violations(recs: list[DiagnosticsRecord], M0: float, rel_tol: float = 1e-8) -> list[float]:
    """Backward-difference check of ``d/dt (1/2) int w^2 <= M0 int w^2`` between records.

    Returns the times where the inequality fails beyond ``rel_tol * int w^2``.
    """
    bad = []
    for a, b in zip(recs[:-1], recs[1:]):
        dt = b.t - a.t
        if dt <= 0:
            continue
        lhs = (b.l2_w - a.l2_w) / dt
        if lhs > M0 * 2.0 * b.l2_w + rel_tol * 2.0 * b.l2_w:
            bad.append(b.t)
    return bad


def gronwall_violations(recs: list[DiagnosticsRecord], M0: float, slack: float = 1e-6) -> list[float]:
    """Times where ``l2_w(t) > l2_w(0) exp(2 M0 (t - t0)) + slack``."""
    r0 = recs[0]
    return [r.t for r in recs if r.l2_w > r0.l2_w * math.exp(2.0 * M0 * (r.t - r0.t)) + slack]
