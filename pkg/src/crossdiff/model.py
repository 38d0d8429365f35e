"""Growth-rate model, parameters and the algebraic checks attached to them.

The four rate functions act on the total density ``w``.  They come from a
small serializable family (constant, logistic ``alpha * (center - w)``,
piecewise-linear table) so that the threshold hypothesis can be checked by
sampling and configs can be written back verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

RATE_NAMES = ("F1", "F2", "G1", "G2")


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, w):
        return np.full_like(np.asarray(w, dtype=float), self.value)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Logistic:
    """Affine rate ``alpha * (center - w)``."""

    alpha: float
    center: float

    def __call__(self, w):
        return self.alpha * (self.center - np.asarray(w, dtype=float))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "logistic", "alpha": self.alpha, "center": self.center}


@dataclass(frozen=True)
class Table:
    """Piecewise-linear interpolant, held constant outside the nodes."""

    nodes: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.nodes) != len(self.values) or len(self.nodes) < 1:
            raise ValueError("table needs matching, non-empty nodes and values")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("table nodes must be strictly increasing")

    def __call__(self, w):
        return np.interp(np.asarray(w, dtype=float), self.nodes, self.values)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "table", "nodes": list(self.nodes), "values": list(self.values)}


def rate_from_dict(spec: dict[str, Any], w_p: float):
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(float(spec.get("value", 0.0)))
    if kind == "logistic":
        return Logistic(float(spec["alpha"]), float(spec.get("center", w_p)))
    if kind == "table":
        return Table(tuple(map(float, spec["nodes"])), tuple(map(float, spec["values"])))
    raise ValueError(f"unknown rate kind {kind!r}")


@dataclass(frozen=True)
class GrowthModel:
    F1: Any
    F2: Any
    G1: Any
    G2: Any
    w_p: float

    def __post_init__(self):
        if not self.w_p > 0:
            raise ValueError(f"w_p must be positive, got {self.w_p}")

    @classmethod
    def zero(cls, w_p: float = 1.0) -> GrowthModel:
        z = Constant(0.0)
        return cls(z, z, z, z, w_p)

    @classmethod
    def logistic(cls, w_p: float, alphas=(1.0, 1.0, 1.0, 1.0)) -> GrowthModel:
        """All four rates ``alpha_k * (w_p - w)``; these satisfy the threshold hypothesis for ``alpha_k >= 0``."""
        return cls(*(Logistic(float(a), w_p) for a in alphas), w_p)

    def F(self, w):
        return self.F1(w) + self.F2(w)

    def G(self, w):
        return self.G1(w) + self.G2(w)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"w_p": self.w_p}
        for name in RATE_NAMES:
            out[name] = getattr(self, name).to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> GrowthModel:
        w_p = float(d["w_p"])
        rates = [rate_from_dict(d.get(name, {"kind": "constant"}), w_p) for name in RATE_NAMES]
        return cls(*rates, w_p)


@dataclass(frozen=True)
class Params:
    mu: float = 1.0
    nu: float = 1.0
    gamma: float = 2.0
    epsilon: float = 1e-3
    picard_tol: float = 1e-10
    linear_tol: float = 1e-12
    max_picard: int = 50
    # hold w >= epsilon (lower bound used for the volume fractions)
    floor: bool = False
    solver: str = "auto"
    averaging: str = "upwind"

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not self.mu > 0:
            out.append(f"mu must be > 0, got {self.mu}")
        if not self.nu > 0:
            out.append(f"nu must be > 0, got {self.nu}")
        if not self.gamma > 1:
            out.append(f"gamma must be > 1, got {self.gamma}")
        if not self.epsilon >= 0:
            out.append(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.picard_tol > 0:
            out.append(f"picard_tol must be > 0, got {self.picard_tol}")
        if not self.linear_tol > 0:
            out.append(f"linear_tol must be > 0, got {self.linear_tol}")
        if not (isinstance(self.max_picard, int) and self.max_picard > 0):
            out.append(f"max_picard must be a positive integer, got {self.max_picard}")
        if self.solver not in ("auto", "direct", "cg"):
            out.append(f"solver must be auto, direct or cg, got {self.solver!r}")
        if self.averaging not in ("upwind", "arithmetic"):
            out.append(f"averaging must be upwind or arithmetic, got {self.averaging!r}")
        return out

    @property
    def epsilon_floor(self) -> float:
        return self.epsilon if self.floor else 0.0


@dataclass(frozen=True)
class ReactionBound:
    M0: float
    w_p: float

    @property
    def max_reaction(self) -> float:
        return self.w_p * self.M0


def theta_p(s, w_p: float):
    """Clamp densities to ``[0, w_p]``."""
    if not w_p > 0:
        raise ValueError(f"w_p must be positive, got {w_p}")
    return np.clip(s, 0.0, w_p)


def reaction_rates(u1, u2, w, model: GrowthModel):
    """Return ``(R1, R2)`` for densities ``u1, u2`` at total density ``w``."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    R1 = u1 * model.F1(w) + u2 * model.G1(w)
    R2 = u1 * model.F2(w) + u2 * model.G2(w)
    return R1, R2


@dataclass
class H1Check:
    name: str
    passed: bool
    worst_value: float
    worst_w: float


@dataclass
class H1Report:
    checks: list[H1Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[H1Check]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            tag = "ok  " if c.passed else "FAIL"
            lines.append(f"{tag} {c.name}: worst {c.worst_value:.3e} at w={c.worst_w:.6g}")
        return "\n".join(lines)


def _max_jump(model: GrowthModel, lo: float, hi: float, n: int) -> float:
    ws = np.linspace(lo, hi, n)
    return max(float(np.max(np.abs(np.diff(getattr(model, k)(ws))))) for k in RATE_NAMES)


def validate_h1(model: GrowthModel, W_max: float | None = None, n_samples: int = 10_000) -> H1Report:
    """Check the sign conditions of the growth hypothesis by dense sampling.

    Samples ``[0, max(W_max, 2 w_p)]`` uniformly (``w_p`` itself is always
    included).  Never raises on a violation; the report carries the worst
    sample of each inequality.
    """
    w_p = model.w_p
    if W_max is None:
        W_max = 2.0 * w_p
    if not W_max > w_p:
        raise ValueError(f"W_max must exceed w_p={w_p}, got {W_max}")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    hi = max(W_max, 2.0 * w_p)
    ws = np.union1d(np.linspace(0.0, hi, n_samples), [w_p])

    report = H1Report()
    upper = ws[ws >= w_p]
    for name, fn in (("F<=0 on [w_p,W_max]", model.F), ("G<=0 on [w_p,W_max]", model.G)):
        vals = fn(upper)
        k = int(np.argmax(vals))
        report.checks.append(H1Check(name, bool(vals[k] <= 0.0), float(vals[k]), float(upper[k])))

    lower = ws[ws < w_p]
    E = np.min([getattr(model, k)(lower) for k in RATE_NAMES], axis=0)
    k = int(np.argmin(E))
    report.checks.append(H1Check("E>=0 on [0,w_p)", bool(E[k] >= 0.0), float(E[k]), float(lower[k])))

    # a continuous rate's largest sample-to-sample jump shrinks under refinement
    j1 = _max_jump(model, 0.0, hi, n_samples)
    j2 = _max_jump(model, 0.0, hi, 2 * n_samples)
    report.checks.append(H1Check("continuity", bool(j2 <= 0.75 * j1 + 1e-12), j2, float("nan")))
    return report


def quadratic_form_nonneg(A: float, B: float, C: float) -> bool:
    """True iff ``A|xi|^2 + B xi.eta + C|eta|^2 >= 0`` for all vectors xi, eta."""
    if A < 0 or C < 0:
        return False
    if A == 0:
        return B == 0
    return B * B <= 4.0 * A * C


def reaction_bound(model: GrowthModel, n_samples: int = 10_000) -> ReactionBound:
    """Sampled ``max(max F, max G)`` over ``[0, w_p]``, floored at zero."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    ws = np.linspace(0.0, model.w_p, n_samples)
    m = max(float(np.max(model.F(ws))), float(np.max(model.G(ws))), 0.0)
    return ReactionBound(m, model.w_p)
