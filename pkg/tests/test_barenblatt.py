import math

import numpy as np
import pytest
from scipy.integrate import quad

from crossdiff.barenblatt import BarenblattParams, barenblatt, barenblatt_dt, on_grid
from crossdiff.grid import make_grid


@pytest.fixture
def bp():
    return BarenblattParams.for_limit_equation(mu=1.0, gamma=2.0, mass=1.0, t0=0.15)


def test_reference_values(bp):
    assert bp.m == 3.0 and bp.c == pytest.approx(2.0 / 3.0)
    assert bp.alpha == pytest.approx(0.25)
    assert bp.C == pytest.approx(0.18378, rel=1e-4)
    assert bp.radius(0.0) == pytest.approx(0.835, abs=1e-3)
    assert bp.radius(1.0) == pytest.approx(1.390, abs=1e-3)


def test_zero_outside_support(bp):
    r = bp.radius(0.5)
    assert barenblatt(np.array([r * 1.01, -r * 1.5, 10.0]), 0.5, bp).tolist() == [0.0, 0.0, 0.0]
    assert barenblatt(0.0, 0.5, bp) > 0


@pytest.mark.parametrize("t", [0.0, 0.3, 2.0])
def test_mass_by_quadrature(bp, t):
    r = bp.radius(t)
    mass, _ = quad(lambda x: float(barenblatt(x, t, bp)), -r, r)
    assert mass == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("d", [2, 3])
def test_mass_higher_dims(d):
    p = BarenblattParams(m=2.5, c=0.7, mass=0.8, t0=0.2, d=d)
    r = p.radius(0.4)
    shell = 2 * math.pi if d == 2 else 4 * math.pi
    radial = lambda s: float(barenblatt(np.array([s] + [0.0] * (d - 1)), 0.4, p)) * shell * s ** (d - 1)
    mass, _ = quad(radial, 0, r)
    assert mass == pytest.approx(0.8, rel=1e-8)


def test_cell_sums_agree_across_times(bp):
    g = make_grid(1, 4000, 4.0, -2.0)
    m0 = g.integrate(on_grid(g, 0.0, bp))
    m1 = g.integrate(on_grid(g, 1.0, bp))
    assert m0 == pytest.approx(1.0, rel=1e-4)
    assert m1 == pytest.approx(m0, rel=1e-4)


def test_peak_decays(bp):
    peaks = [float(barenblatt(0.0, t, bp)) for t in (0.0, 0.5, 1.0, 4.0)]
    assert all(b < a for a, b in zip(peaks, peaks[1:]))


def test_pme_residual_second_order(bp):
    # centred-difference residual of v_t - c (v^m)_xx at points well inside the support
    t = 0.4
    x = np.linspace(-0.5 * bp.radius(t), 0.5 * bp.radius(t), 9)
    errs = []
    for h in (0.02, 0.01, 0.005):
        vm = lambda s: barenblatt(s, t, bp) ** bp.m
        lap = (vm(x + h) - 2 * vm(x) + vm(x - h)) / h**2
        errs.append(np.max(np.abs(barenblatt_dt(x, t, bp) - bp.c * lap)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


def test_dt_matches_finite_difference(bp):
    x = np.linspace(-0.5, 0.5, 7)
    k = 1e-6
    fd = (barenblatt(x, 0.3 + k, bp) - barenblatt(x, 0.3 - k, bp)) / (2 * k)
    np.testing.assert_allclose(barenblatt_dt(x, 0.3, bp), fd, rtol=1e-6, atol=1e-9)


def test_on_grid_2d():
    p = BarenblattParams(m=3.0, c=1.0, mass=1.0, t0=0.1, d=2, center=(1.0, 1.0))
    assert p.radius(0.0) < 1.0
    g = make_grid(2, (200, 200), (2.0, 2.0))
    assert g.integrate(on_grid(g, 0.0, p)) == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("kw", [dict(m=1.0), dict(c=0.0), dict(mass=-1.0), dict(t0=0.0), dict(d=4)])
def test_invalid(kw):
    base = dict(m=3.0, c=1.0, mass=1.0, t0=0.1)
    base.update(kw)
    with pytest.raises(ValueError):
        BarenblattParams(**base)


def test_requires_positive_shifted_time(bp):
    with pytest.raises(ValueError):
        barenblatt(0.0, -0.2, bp)
