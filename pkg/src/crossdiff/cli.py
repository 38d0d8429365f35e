"""Command-line front end: ``crossdiff --config run.toml``.

Config schema (TOML; every table except ``[grid]`` and ``[time]`` optional)::

    [grid]     dim = 1 | 2, n = int or [nx, ny], length = float or list, origin = float or list
    [params]   mu, nu, gamma, epsilon, picard_tol, linear_tol, max_picard, floor, solver, averaging
    [model]    family = "zero" | "logistic" | "constant" | "custom", w_p,
               alphas = [4 floats] (logistic), values = [4 floats] (constant),
               F1/F2/G1/G2 = {kind = ..., ...} (custom), W_max
    [initial]  profile = "constant" | "bump" | "two-bumps" | "gaussians" | "barenblatt-split", ...
    [time]     t_end, dt
    [output]   dir, snapshots (count) or snapshot_interval (simulated time)
    [study]    name = "none" | "pme" | "epsilon" | "segregation" | "asymmetric",
               levels, eta, mass, t0, threshold

Exit status: 0 success, 1 usage or I/O error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .diagnostics import record, write_records_csv
from .experiments import (
    SUMMARY_SCHEMA,
    Scenario,
    asymmetric_mobility_study,
    dump_json,
    epsilon_study,
    initial_state,
    pme_validation,
    segregation_study,
    write_study,
)
from .grid import Grid, make_grid, write_fields_csv
from .model import GrowthModel, Params, rate_from_dict, reaction_bound, validate_h1
from .scheme import SimulationError, State, check_initial_data, run

log = logging.getLogger("crossdiff")

STUDIES = ("none", "pme", "epsilon", "segregation", "asymmetric")
FAMILIES = ("zero", "logistic", "constant", "custom")

# allowed keys per table; anything else is rejected
SCHEMA: dict[str, set[str]] = {
    "grid": {"dim", "n", "length", "origin"},
    "params": {f.name for f in fields(Params)},
    "model": {"family", "w_p", "alphas", "values", "F1", "F2", "G1", "G2", "W_max"},
    "initial": {
        "profile", "u1", "u2", "center", "center1", "center2", "radius", "amp1", "amp2",
        "base1", "base2", "width1", "width2", "eta", "mass", "t0",
    },
    "time": {"t_end", "dt"},
    "output": {"dir", "snapshots", "snapshot_interval"},
    "study": {"name", "levels", "eta", "mass", "t0", "threshold"},
}

# tolerances of the post-run invariant checks
MAX_PRINCIPLE_TOL = 1e-8
NEGATIVITY_TOL = 1e-10
IDENTITY_TOL = 1e-10


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass
class RunConfig:
    grid: Grid
    params: Params
    model: GrowthModel
    initial: State
    t_end: float
    dt: float
    out_dir: Path
    study: str = "none"
    snapshots: int = 20
    snapshot_interval: float | None = None
    W_max: float | None = None
    study_options: dict[str, Any] = field(default_factory=dict)
    # the parsed tables with defaults filled, written back verbatim
    effective: dict[str, Any] = field(default_factory=dict)


def _as_list(v, dim):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v] * dim


def _number(errors, path, v, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{path}: expected a number, got {v!r}")
        return None
    if kind is int and not float(v).is_integer():
        errors.append(f"{path}: expected an integer, got {v!r}")
        return None
    return kind(v)


def _build_model(m: dict, errors: list[str]) -> GrowthModel | None:
    family = m.get("family", "zero")
    w_p = _number(errors, "model.w_p", m.get("w_p", 1.0))
    if family not in FAMILIES:
        errors.append(f"model.family: must be one of {', '.join(FAMILIES)}, got {family!r}")
        return None
    if w_p is None:
        return None
    if not w_p > 0:
        errors.append(f"model.w_p: must be > 0, got {w_p}")
        return None
    try:
        if family == "zero":
            return GrowthModel.zero(w_p)
        if family == "logistic":
            alphas = m.get("alphas", [1.0, 1.0, 1.0, 1.0])
            if len(alphas) != 4:
                errors.append("model.alphas: expected 4 values for F1, F2, G1, G2")
                return None
            return GrowthModel.logistic(w_p, alphas)
        if family == "constant":
            vals = m.get("values", [0.0, 0.0, 0.0, 0.0])
            if len(vals) != 4:
                errors.append("model.values: expected 4 values for F1, F2, G1, G2")
                return None
            return GrowthModel.from_dict({"w_p": w_p, **{k: {"kind": "constant", "value": v} for k, v in zip(("F1", "F2", "G1", "G2"), vals)}})
        rates = {}
        for k in ("F1", "F2", "G1", "G2"):
            rates[k] = rate_from_dict(m.get(k, {"kind": "constant"}), w_p)
        return GrowthModel(rates["F1"], rates["F2"], rates["G1"], rates["G2"], w_p)
    except (ValueError, KeyError, TypeError) as exc:
        errors.append(f"model: {exc}")
        return None


def config_from_dict(raw: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
    """Validate a parsed config table; raise :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    for key, val in raw.items():
        if key not in SCHEMA:
            errors.append(f"{key}: unknown table")
        elif not isinstance(val, dict):
            errors.append(f"{key}: expected a table")
        else:
            errors.extend(f"{key}.{k}: unknown key" for k in val if k not in SCHEMA[key])
    tables = {k: dict(raw.get(k, {})) if isinstance(raw.get(k, {}), dict) else {} for k in SCHEMA}
    for required in ("grid", "time"):
        if required not in raw:
            errors.append(f"{required}: missing table")

    g = tables["grid"]
    dim = g.get("dim", 1)
    grid = None
    if dim not in (1, 2):
        errors.append(f"grid.dim: must be 1 or 2, got {dim!r}")
    else:
        n = _as_list(g.get("n", 64), dim)
        length = _as_list(g.get("length", 1.0), dim)
        origin = _as_list(g.get("origin", 0.0), dim)
        bad = len(errors)
        if len(n) != dim or len(length) != dim or len(origin) != dim:
            errors.append(f"grid: n, length and origin need {dim} entries")
        else:
            for i in range(dim):
                ni = _number(errors, f"grid.n[{i}]", n[i], int)
                if ni is not None and ni < 2:
                    errors.append(f"grid.n[{i}]: need at least 2 cells, got {ni}")
                li = _number(errors, f"grid.length[{i}]", length[i])
                if li is not None and not li > 0:
                    errors.append(f"grid.length[{i}]: must be > 0, got {li}")
                _number(errors, f"grid.origin[{i}]", origin[i])
        if len(errors) == bad:
            grid = make_grid(dim, [int(v) for v in n], [float(v) for v in length], [float(v) for v in origin])
            tables["grid"] = {"dim": dim, "n": [int(v) for v in n], "length": [float(v) for v in length], "origin": [float(v) for v in origin]}

    p = {f.name: f.default for f in fields(Params)}
    p.update(tables["params"])
    params = None
    try:
        params = Params(**p)
    except (ValueError, TypeError) as exc:
        for msg in str(exc).split("; "):
            key, _, rest = msg.partition(" ")
            errors.append(f"params.{key}: {rest}" if key in SCHEMA["params"] else f"params: {msg}")
    tables["params"] = p
    if params is not None and not params.epsilon > 0:
        errors.append("params.epsilon: the regularized scheme needs epsilon > 0")

    m = tables["model"]
    m.setdefault("family", "zero")
    m.setdefault("w_p", 1.0)
    model = _build_model(m, errors)
    W_max = m.get("W_max")
    if W_max is not None and model is not None and not W_max > model.w_p:
        errors.append(f"model.W_max: must exceed w_p={model.w_p}, got {W_max}")
    if model is not None:
        tables["model"] = {**model.to_dict(), "family": m["family"], **({"W_max": W_max} if W_max is not None else {})}

    t = tables["time"]
    t_end = _number(errors, "time.t_end", t.get("t_end", 1.0))
    dt = _number(errors, "time.dt", t.get("dt", 0.01))
    if t_end is not None and not t_end > 0:
        errors.append(f"time.t_end: must be > 0, got {t_end}")
    if dt is not None and not dt > 0:
        errors.append(f"time.dt: must be > 0, got {dt}")
    tables["time"] = {"t_end": t_end, "dt": dt}

    o = tables["output"]
    out_dir = Path(o.get("dir", "out"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    snapshots = _number(errors, "output.snapshots", o.get("snapshots", 20), int)
    if snapshots is not None and snapshots < 1:
        errors.append(f"output.snapshots: must be >= 1, got {snapshots}")
    interval = o.get("snapshot_interval")
    if interval is not None:
        interval = _number(errors, "output.snapshot_interval", interval)
        if interval is not None and not interval > 0:
            errors.append(f"output.snapshot_interval: must be > 0, got {interval}")
    tables["output"] = {"dir": str(out_dir), "snapshots": snapshots, "snapshot_interval": interval}

    s = tables["study"]
    study = s.get("name", "none")
    if study not in STUDIES:
        errors.append(f"study.name: must be one of {', '.join(STUDIES)}, got {study!r}")
    tables["study"] = {"name": study, **{k: v for k, v in s.items() if k != "name"}}

    init = tables["initial"]
    init.setdefault("profile", "constant")
    initial = None
    if grid is not None and model is not None:
        try:
            initial = initial_state(init, grid, params)
        except (ValueError, TypeError, KeyError) as exc:
            errors.append(f"initial: {exc}")
        else:
            errors.extend(f"initial: {msg}" for msg in check_initial_data(initial, model))
    tables["initial"] = init

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        grid=grid, params=params, model=model, initial=initial, t_end=t_end, dt=dt,
        out_dir=out_dir, study=study, snapshots=snapshots, snapshot_interval=interval,
        W_max=W_max, study_options={k: v for k, v in s.items() if k != "name"}, effective=tables,
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: malformed TOML: {exc}"]) from exc
    return config_from_dict(raw, path.parent)


# ---------------------------------------------------------------- single run

def snapshot_steps(n_steps: int, dt: float, count: int, interval: float | None) -> set[int]:
    """Nominal step indices at which snapshots are written (step 0 is the initial state)."""
    if interval is not None:
        every = max(1, round(interval / dt))
        return set(range(every, n_steps + 1, every))
    return {max(1, round(k * n_steps / count)) for k in range(1, count + 1)}


def _violations(cfg: RunConfig, traj) -> list[str]:
    w_p = cfg.model.w_p
    out = []
    max_w = max([float(cfg.initial.w.max())] + [r.max_w for r in traj.reports])
    if max_w > w_p + MAX_PRINCIPLE_TOL:
        out.append(f"max principle: max w = {max_w:.17g} exceeds w_p = {w_p:.17g}")
    min_u = min([math.inf] + [r.min_u_before_clip for r in traj.reports])
    if min_u < -NEGATIVITY_TOL:
        out.append(f"nonnegativity: min u = {min_u:.17g} before clipping")
    ident = max([0.0] + [r.identity_residual for r in traj.reports])
    if ident > IDENTITY_TOL:
        out.append(f"identity: max |w - u1 - u2| = {ident:.17g}")
    return out


def run_simulation(cfg: RunConfig, out: Path) -> tuple[dict[str, Any], list[str]]:
    n_steps = max(0, math.ceil(cfg.t_end / cfg.dt - 1e-9))
    keep = snapshot_steps(n_steps, cfg.dt, cfg.snapshots, cfg.snapshot_interval)
    diag = [record(cfg.initial, cfg.params, cfg.grid)]

    def on_step(state, reports):
        diag.append(record(state, cfg.params, cfg.grid))

    error = None
    try:
        traj = run(cfg.initial, cfg.t_end, cfg.dt, cfg.params, cfg.model, cfg.grid, hooks=[on_step], store_at=keep)
    except SimulationError as exc:
        traj, error = exc.trajectory, exc

    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for i, s in enumerate(traj.states):
        write_fields_csv(snap_dir / f"snapshot_{i:04d}.csv", cfg.grid, {"u1": s.u1, "u2": s.u2, "w": s.w})
    (out / "snapshot_times.csv").write_text("index,t\n" + "".join(f"{i},{s.t:.17g}\n" for i, s in enumerate(traj.states)))
    write_records_csv(out / "diagnostics.csv", diag)
    with open(out / "steps.jsonl", "w") as fh:
        for r in traj.reports:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")

    violations = _violations(cfg, traj)
    if error is not None:
        violations.append(f"step convergence: {error} (t reached {error.t_reached:.17g})")
    h1 = validate_h1(cfg.model, cfg.W_max)
    M0 = reaction_bound(cfg.model).M0
    summary = {
        "t_reached": traj.final.t,
        "steps": len(traj.reports),
        "snapshots": len(traj.states),
        "max_w": max([float(cfg.initial.w.max())] + [r.max_w for r in traj.reports]),
        "min_u_before_clip": min([math.inf] + [r.min_u_before_clip for r in traj.reports]),
        "max_identity_residual": max([0.0] + [r.identity_residual for r in traj.reports]),
        "max_picard_iters": max([0] + [r.picard_iters for r in traj.reports]),
        "clipped_steps": sum(r.clipped for r in traj.reports),
        "mass_w": [diag[0].mass_w, diag[-1].mass_w],
        "M0": M0,
        "h1_valid": h1.passed,
        "h1_failures": [c.name for c in h1.failures()],
        "final": asdict(diag[-1]),
    }
    return summary, violations


# ---------------------------------------------------------------- studies

def _eps_levels(cfg: RunConfig) -> list[float]:
    levels = cfg.study_options.get("levels", [1e-1, 1e-2, 1e-3, 1e-4])
    if not all(isinstance(e, (int, float)) and e > 0 for e in levels):
        raise ValueError(f"study.levels: epsilon levels must be positive numbers, got {levels}")
    return [float(e) for e in levels]


def run_named_study(cfg: RunConfig, out: Path, workers: int):
    opts = cfg.study_options
    p = cfg.params
    if cfg.study == "pme":
        levels = opts.get("levels", [128, 256, 512, 1024])
        if not all(isinstance(n, int) and n >= 2 for n in levels):
            raise ValueError(f"study.levels: the pme study expects cell counts >= 2, got {levels}")
        rep = pme_validation(
            levels, eta=float(opts.get("eta", 1.0)), gamma=p.gamma, mu=p.mu, workers=workers,
            mass=float(opts.get("mass", 1.0)), t0=float(opts.get("t0", 0.15)),
            length=cfg.grid.lengths[0], t_end=cfg.t_end, w_p=cfg.model.w_p,
        )
    elif cfg.study in ("epsilon", "asymmetric"):
        sc = Scenario(cfg.grid, cfg.model, cfg.initial, cfg.t_end, cfg.dt, p)
        fn = epsilon_study if cfg.study == "epsilon" else asymmetric_mobility_study
        rep = fn(sc, _eps_levels(cfg), workers=workers)
    else:
        rep = segregation_study(
            cfg.initial, p, cfg.grid, cfg.t_end, cfg.dt, cfg.model, float(opts.get("threshold", 1e-6)),
        )
    write_study(rep, out)
    violations = []
    # an exceeded segregation threshold is a finding, everything else is a failed check
    if cfg.study != "segregation":
        violations = [f"{cfg.study} study: check '{k}' failed" for k, ok in rep.checks.items() if not ok]
    return rep.summary(), violations


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossdiff", description="Regularized two-population cross-diffusion simulator.")
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--study", choices=STUDIES, help="study selector (overrides study.name)")
    ap.add_argument("--workers", type=int, default=1, help="parallel runs for studies")
    ap.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        ap.print_usage(sys.stderr)
        print("crossdiff: --workers must be >= 1", file=sys.stderr)
        return 1

    try:
        cfg = parse_config(args.config)
    except FileNotFoundError:
        ap.print_usage(sys.stderr)
        print(f"crossdiff: config not found: {args.config}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"crossdiff: cannot read config: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print("crossdiff: invalid config:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return 1
    if args.out:
        cfg.out_dir = Path(args.out)
        cfg.effective["output"]["dir"] = args.out
    if args.study:
        cfg.study = args.study
        cfg.effective["study"]["name"] = args.study

    started = time.time()
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        dump_json(cfg.effective, cfg.out_dir / "effective_config.json")
        if cfg.study == "none":
            result, violations = run_simulation(cfg, cfg.out_dir)
        else:
            result, violations = run_named_study(cfg, cfg.out_dir, args.workers)
        summary = {
            "schema": SUMMARY_SCHEMA,
            "version": __version__,
            "study": cfg.study,
            "passed": not violations,
            "violations": violations,
            "result": result,
        }
        dump_json(summary, cfg.out_dir / "summary.json")
        dump_json({"started": started, "finished": time.time()}, cfg.out_dir / "timing.json")
    except OSError as exc:
        print(f"crossdiff: output error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"crossdiff: {exc}", file=sys.stderr)
        return 1

    for v in violations:
        print(f"crossdiff: invariant violated: {v}", file=sys.stderr)
    log.info("wrote %s", cfg.out_dir)
    return 2 if violations else 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
