"""Self-similar source solution of ``v_t = c * Laplace(v**m)``, ``m > 1``."""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma as gamma_fn
from math import pi

import numpy as np


@dataclass(frozen=True)
class BarenblattParams:
    m: float
    c: float
    mass: float
    t0: float
    d: int = 1
    center: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"m must exceed 1, got {self.m}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.t0 > 0:
            raise ValueError(f"t0 must be positive, got {self.t0}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if len(self.center) != self.d:
            object.__setattr__(self, "center", tuple(self.center[:1]) * self.d)

    @classmethod
    def for_limit_equation(cls, mu: float, gamma: float, mass: float, t0: float, d: int = 1, center=None):
        """Oracle for ``w_t = mu*gamma/(gamma+1) * Laplace(w**(gamma+1))``."""
        center = (0.0,) * d if center is None else tuple(center)
        return cls(gamma + 1.0, mu * gamma / (gamma + 1.0), mass, t0, d, center)

    @property
    def alpha(self) -> float:
        return self.d / (self.d * (self.m - 1.0) + 2.0)

    @property
    def k(self) -> float:
        return self.alpha * (self.m - 1.0) / (2.0 * self.m * self.d)

    @property
    def C(self) -> float:
        """Profile constant fixed by the mass."""
        p = 1.0 / (self.m - 1.0)
        d = self.d
        unit = pi ** (d / 2) * gamma_fn(p + 1) / gamma_fn(p + 1 + d / 2)
        return (self.mass * self.k ** (d / 2) / unit) ** (1.0 / (p + d / 2))

    def tau(self, t):
        return self.c * (t + self.t0)

    def radius(self, t) -> float:
        beta = self.alpha / self.d
        return float(np.sqrt(self.C / self.k) * self.tau(t) ** beta)


def barenblatt(x, t, p: BarenblattParams):
    """Profile at points ``x`` (shape ``(..., d)`` or, for ``d == 1``, any shape)."""
    if not t + p.t0 > 0:
        raise ValueError("need t + t0 > 0")
    x = np.asarray(x, dtype=float)
    if p.d == 1:
        r2 = (x - p.center[0]) ** 2
    else:
        r2 = np.sum((x - np.asarray(p.center)) ** 2, axis=-1)
    tau = p.tau(t)
    beta = p.alpha / p.d
    core = np.maximum(p.C - p.k * r2 * tau ** (-2.0 * beta), 0.0)
    return tau ** (-p.alpha) * core ** (1.0 / (p.m - 1.0))


def barenblatt_dt(x, t, p: BarenblattParams):
    """Analytic time derivative of :func:`barenblatt` (valid inside the support)."""
    x = np.asarray(x, dtype=float)
    if p.d == 1:
        r2 = (x - p.center[0]) ** 2
    else:
        r2 = np.sum((x - np.asarray(p.center)) ** 2, axis=-1)
    tau = p.tau(t)
    a, beta, q = p.alpha, p.alpha / p.d, 1.0 / (p.m - 1.0)
    core = np.maximum(p.C - p.k * r2 * tau ** (-2.0 * beta), 0.0)
    dcore = 2.0 * beta * p.k * r2 * tau ** (-2.0 * beta - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dv = -a * tau ** (-a - 1.0) * core**q + tau ** (-a) * q * np.where(core > 0, core ** (q - 1.0), 0.0) * dcore
    return p.c * np.where(core > 0, dv, 0.0)


def on_grid(grid, t, p: BarenblattParams) -> np.ndarray:
    coords = grid.coords()
    if grid.dim == 1:
        return barenblatt(coords[0], t, p)
    return barenblatt(np.stack(coords, axis=-1), t, p)
