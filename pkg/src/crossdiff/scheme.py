"""Backward-Euler time stepping with a Picard (frozen-coefficient) sweep.

One sweep solves the linear total-density equation with coefficients taken
from the current iterate, then the two species equations with that new total
density, in that order.  Sweeps repeat until the iterate stops moving.
Every linear problem is ``(I/dt + K) x = rhs`` with ``K`` a nonnegatively
weighted graph Laplacian, hence symmetric positive definite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Collection, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import cg, splu

from .grid import Grid, diffusion_operator, div_flux, face_mobilities
from .model import GrowthModel, Params, reaction_rates, theta_p

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


class StepFailure(RuntimeError):
    """A step could not be completed; ``report`` has the residual history."""

    def __init__(self, message: str, report: StepReport):
        super().__init__(message)
        self.report = report


class SimulationError(RuntimeError):
    def __init__(self, message: str, t_reached: float, trajectory: Trajectory | None = None):
        super().__init__(f"{message} (t reached: {t_reached:.17g})")
        self.t_reached = t_reached
        self.trajectory = trajectory


@dataclass
class State:
    u1: np.ndarray
    u2: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def copy(self) -> State:
        return State(self.u1.copy(), self.u2.copy(), self.w.copy(), self.t)

    @property
    def identity_residual(self) -> float:
        return float(np.max(np.abs(self.w - (self.u1 + self.u2))))


def make_state(u1, u2, t: float = 0.0) -> State:
    u1 = np.array(u1, dtype=float)
    u2 = np.array(u2, dtype=float)
    return State(u1, u2, u1 + u2, float(t))


@dataclass
class StepReport:
    t: float
    dt: float
    converged: bool = False
    picard_iters: int = 0
    picard_residual: float = math.inf
    residual_history: list[float] = field(default_factory=list)
    linear_iters: int = 0
    identity_residual: float = math.nan
    min_u_before_clip: float = math.nan
    max_w: float = math.nan
    clipped: bool = False
    floored: bool = False
    # mass(w) change over the step vs dt * int R at the last Picard iterate
    mass_change: float = math.nan
    reaction_integral: float = math.nan

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "dt": self.dt,
            "converged": self.converged,
            "picard_iters": self.picard_iters,
            "picard_residual": self.picard_residual,
            "linear_iters": self.linear_iters,
            "identity_residual": self.identity_residual,
            "min_u_before_clip": self.min_u_before_clip,
            "max_w": self.max_w,
            "clipped": self.clipped,
            "floored": self.floored,
            "mass_change": self.mass_change,
            "reaction_integral": self.reaction_integral,
        }


@dataclass
class LinearSystem:
    """``(mass * I + coupling) x = rhs`` on flattened fields."""

    mass: float
    coupling: sp.csr_matrix
    rhs: np.ndarray

    @property
    def matrix(self) -> sp.csr_matrix:
        n = self.coupling.shape[0]
        return (self.mass * sp.identity(n, format="csr") + self.coupling).tocsr()

    def residual_norm(self, x: np.ndarray) -> float:
        b = self.rhs.ravel()
        return float(np.linalg.norm(b - self.matrix @ x.ravel()) / max(np.linalg.norm(b), 1e-300))

    def factorize(self, grid: Grid):
        """Return ``solve(b)`` for this matrix (banded Cholesky in 1D, sparse LU in 2D)."""
        A = self.matrix
        if grid.dim == 1:
            ab = np.zeros((2, grid.n_cells))
            ab[0, 1:] = A.diagonal(1)
            ab[1, :] = A.diagonal()
            cb = cholesky_banded(ab, check_finite=False)
            return lambda b: cho_solve_banded((cb, False), b, check_finite=False)
        return splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A").solve

    def solve(self, grid: Grid, params: Params, x0=None, factor=None) -> tuple[np.ndarray, int]:
        """Solve, returning ``(x, iterations)``; direct solves count one iteration."""
        method = params.solver
        if method == "auto":
            method = "direct"
        b = self.rhs.ravel()
        if method == "cg":
            A = self.matrix
            Minv = sp.diags(1.0 / A.diagonal())
            count = [0]

            def tick(_):
                count[0] += 1

            x, info = cg(
                A, b, x0=None if x0 is None else np.ravel(x0), rtol=params.linear_tol, atol=0.0,
                maxiter=10 * grid.n_cells, M=Minv, callback=tick,
            )
            if info != 0:
                raise LinearSolveError(f"CG did not converge (info={info})")
            return x.reshape(grid.shape), count[0]
        if factor is None:
            factor = self.factorize(grid)
        x = factor(b)
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("direct solve produced non-finite values")
        return x.reshape(grid.shape), 1


def _eps_faces(params: Params, grid: Grid) -> list[np.ndarray]:
    return [np.full(grid.face_shape(a), params.epsilon) for a in range(grid.dim)]


def _frozen(iterate, model: GrowthModel):
    omega, v1, v2 = iterate
    return theta_p(omega, model.w_p), theta_p(v1, model.w_p), theta_p(v2, model.w_p)


def assemble_w_system(prev: State, iterate, dt: float, params: Params, model: GrowthModel, grid: Grid):
    """Total-density system with mobility and reactions frozen at ``iterate = (omega, v1, v2)``."""
    t_omega, t1, t2 = _frozen(iterate, model)
    mob = face_mobilities(t1, t2, t1 + t2, params, grid, pressure=iterate[0])
    cond = [params.gamma * c + params.epsilon for c in mob.combined]
    R1, R2 = reaction_rates(t1, t2, t_omega, model)
    rhs = prev.w / dt + (R1 + R2)
    return LinearSystem(1.0 / dt, diffusion_operator(cond, grid), rhs), mob, (R1, R2)


def w_step(prev: State, iterate, dt: float, params: Params, model: GrowthModel, grid: Grid) -> np.ndarray:
    system, _, _ = assemble_w_system(prev, iterate, dt, params, model, grid)
    w, _ = system.solve(grid, params, x0=prev.w)
    return w


def assemble_species_system(
    prev_u: np.ndarray, w_new: np.ndarray, iterate, dt: float, params: Params, model: GrowthModel,
    grid: Grid, species: int, mob=None, reactions=None, eps_op=None,
) -> LinearSystem:
    if species not in (1, 2):
        raise ValueError("species must be 1 or 2")
    if mob is None or reactions is None:
        t_omega, t1, t2 = _frozen(iterate, model)
        mob = face_mobilities(t1, t2, t1 + t2, params, grid, pressure=iterate[0])
        reactions = reaction_rates(t1, t2, t_omega, model)
    if eps_op is None:
        eps_op = diffusion_operator(_eps_faces(params, grid), grid)
    m, coef = (mob.m1, params.mu) if species == 1 else (mob.m2, params.nu)
    transport = div_flux([params.gamma * coef * mf for mf in m], w_new, 1.0, grid)
    rhs = prev_u / dt + transport + reactions[species - 1]
    return LinearSystem(1.0 / dt, eps_op, rhs)


def species_step(
    prev_u: np.ndarray, w_new: np.ndarray, iterate, dt: float, params: Params, model: GrowthModel,
    grid: Grid, species: int,
) -> np.ndarray:
    system = assemble_species_system(prev_u, w_new, iterate, dt, params, model, grid, species)
    u, _ = system.solve(grid, params, x0=prev_u)
    return u


def picard_advance(prev: State, dt: float, params: Params, model: GrowthModel, grid: Grid) -> tuple[State, StepReport]:
    """Advance one step of size ``dt``; raise :class:`StepFailure` if Picard stalls."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    report = StepReport(t=prev.t + dt, dt=dt)
    eps_op = diffusion_operator(_eps_faces(params, grid), grid)
    # the species matrix is the same for both species and every sweep
    species_factor = None
    if params.solver != "cg":
        species_factor = LinearSystem(1.0 / dt, eps_op, prev.u1).factorize(grid)
    omega, v1, v2 = prev.w, prev.u1, prev.u2
    try:
        for k in range(1, params.max_picard + 1):
            iterate = (omega, v1, v2)
            sys_w, mob, reactions = assemble_w_system(prev, iterate, dt, params, model, grid)
            w, it = sys_w.solve(grid, params, x0=omega)
            report.linear_iters += it
            u = []
            for i, (pu, v) in enumerate(((prev.u1, v1), (prev.u2, v2)), start=1):
                sys_u = assemble_species_system(
                    pu, w, iterate, dt, params, model, grid, i, mob=mob, reactions=reactions, eps_op=eps_op,
                )
                ui, it = sys_u.solve(grid, params, x0=v, factor=species_factor)
                report.linear_iters += it
                u.append(ui)
            u1, u2 = u
            change = max(
                float(np.max(np.abs(w - omega))),
                float(np.max(np.abs(u1 - v1))),
                float(np.max(np.abs(u2 - v2))),
            )
            report.residual_history.append(change)
            report.picard_iters = k
            report.picard_residual = change
            omega, v1, v2 = w, u1, u2
            if not math.isfinite(change):
                raise StepFailure("Picard iterate became non-finite", report)
            if change <= params.picard_tol:
                report.converged = True
                break
    except LinearSolveError as exc:
        raise StepFailure(f"linear solve failed: {exc}", report) from exc
    if not report.converged:
        raise StepFailure(
            f"Picard did not converge in {params.max_picard} iterations (residual {report.picard_residual:.3e})",
            report,
        )

    w, u1, u2 = omega.copy(), v1.copy(), v2.copy()
    report.min_u_before_clip = float(min(u1.min(), u2.min()))
    clip_below = -10.0 * params.linear_tol
    for u in (u1, u2):
        bad = u < clip_below
        if bad.any():
            u[bad] = 0.0
            report.clipped = True
    if params.floor:
        deficit = params.epsilon - w
        low = deficit > 0
        if low.any():
            # keep w = u1 + u2 by routing the lift through u1
            w[low] += deficit[low]
            u1[low] += deficit[low]
            report.floored = True
    new = State(u1, u2, w, prev.t + dt)
    report.identity_residual = new.identity_residual
    report.max_w = float(w.max())
    # reactions of the final sweep: the w system conserves mass up to exactly these
    report.mass_change = grid.integrate(w) - grid.integrate(prev.w)
    report.reaction_integral = dt * grid.integrate(reactions[0] + reactions[1])
    return new, report


Hook = Callable[[State, Sequence[StepReport]], None]


@dataclass
class Trajectory:
    states: list[State] = field(default_factory=list)
    reports: list[StepReport] = field(default_factory=list)
    params: Params | None = None
    model: GrowthModel | None = None
    grid: Grid | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> State:
        return self.states[-1]


def check_initial_data(state: State, model: GrowthModel, tol: float = 0.0) -> list[str]:
    """Admissibility of initial data: nonnegative species, ``w <= w_p``, ``w = u1 + u2``."""
    problems = []
    for name, u in (("u1", state.u1), ("u2", state.u2), ("w", state.w)):
        if not np.all(np.isfinite(u)):
            problems.append(f"{name} has non-finite values")
    if state.u1.min() < 0 or state.u2.min() < 0:
        problems.append(f"initial densities must be nonnegative (min {min(state.u1.min(), state.u2.min()):.3e})")
    if state.w.max() > model.w_p + tol:
        problems.append(f"initial w exceeds w_p={model.w_p} (max {state.w.max():.17g})")
    if state.identity_residual > 1e-14 * max(1.0, float(np.abs(state.w).max())):
        problems.append("initial w differs from u1 + u2")
    return problems


def _advance(state, dt, params, model, grid, depth, max_halvings, reports):
    try:
        new, rep = picard_advance(state, dt, params, model, grid)
        reports.append(rep)
        return new
    except StepFailure as exc:
        if depth >= max_halvings:
            raise
        log.info("step at t=%.6g failed (%s); halving dt to %.3e", state.t, exc, dt / 2)
        mid = _advance(state, dt / 2, params, model, grid, depth + 1, max_halvings, reports)
        return _advance(mid, dt / 2, params, model, grid, depth + 1, max_halvings, reports)


def run(
    initial: State, t_end: float, dt: float, params: Params, model: GrowthModel, grid: Grid,
    hooks: Sequence[Hook] = (), max_halvings: int = 5, max_clipped_steps: int = 10,
    store_every: int = 1, store_at: Collection[int] | None = None,
) -> Trajectory:
    """Integrate from ``initial.t`` to ``t_end`` with nominal step ``dt``.

    A failed step is retried as two half steps, recursively, at most
    ``max_halvings`` deep.  States are stored at every ``store_every``-th
    nominal step (or at the step indices in ``store_at`` when given) and
    always at the final time.
    """
    if not params.epsilon > 0:
        raise ValueError("the regularized scheme needs epsilon > 0")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    problems = check_initial_data(initial, model)
    if problems:
        raise ValueError("inadmissible initial data: " + "; ".join(problems))
    if initial.u1.shape != grid.shape or initial.u2.shape != grid.shape:
        raise ValueError("initial fields do not match the grid")

    traj = Trajectory([initial.copy()], [], params, model, grid)
    t0 = initial.t
    n_steps = max(0, math.ceil((t_end - t0) / dt - 1e-9))
    state = initial.copy()
    clipped_steps = 0
    for k in range(1, n_steps + 1):
        t_next = t_end if k == n_steps else t0 + k * dt
        step_reports: list[StepReport] = []
        try:
            state = _advance(state, t_next - state.t, params, model, grid, 0, max_halvings, step_reports)
        except StepFailure as exc:
            traj.reports.extend(step_reports)
            raise SimulationError(str(exc), state.t, traj) from exc
        state.t = t_next
        traj.reports.extend(step_reports)
        if any(r.clipped for r in step_reports):
            clipped_steps += 1
            if clipped_steps > max_clipped_steps:
                raise SimulationError("negativity clipping persisted", state.t, traj)
        keep = k in store_at if store_at is not None else k % store_every == 0
        if keep or k == n_steps:
            traj.states.append(state.copy())
        for hook in hooks:
            hook(state, step_reports)
    return traj
