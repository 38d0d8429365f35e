import json

import numpy as np
import pytest

from crossdiff.experiments import (
    BarenblattSetup,
    Scenario,
    asymmetric_mobility_study,
    budget_checks,
    epsilon_study,
    h1_time_distance,
    initial_state,
    observed_orders,
    pme_validation,
    relative_overlap,
    segregation_study,
    write_study,
)
from crossdiff.grid import make_grid
from crossdiff.model import GrowthModel, Params
from crossdiff.scheme import make_state


def _constant_scenario():
    g = make_grid(1, 16, 1.0)
    s = make_state(np.full(16, 0.3), np.full(16, 0.2))
    return Scenario(g, GrowthModel.zero(), s, 0.1, 0.02, Params())


def _small_barenblatt(mu=1.0, nu=None, eta=0.5):
    return BarenblattSetup(n=48, eta=eta, mu=mu, nu=nu, t_end=0.1, dt=0.02).scenario()


@pytest.mark.parametrize("profile", ["constant", "bump", "two-bumps", "gaussians", "barenblatt-split"])
@pytest.mark.parametrize("dim", [1, 2])
def test_profiles_admissible(profile, dim):
    g = make_grid(dim, 20, 1.0)
    s = initial_state({"profile": profile, "u1": 0.2, "u2": 0.1, "mass": 0.05}, g, Params())
    assert s.u1.shape == g.shape
    assert s.u1.min() >= 0 and s.u2.min() >= 0
    assert s.identity_residual == 0.0


def test_unknown_profile():
    with pytest.raises(ValueError, match="profile"):
        initial_state({"profile": "spiral"}, make_grid(1, 8, 1.0))


def test_two_bumps_disjoint():
    s = initial_state({"profile": "two-bumps"}, make_grid(1, 128, 1.0))
    assert np.all(s.u1 * s.u2 == 0)


def test_observed_orders():
    assert observed_orders([0.1, 0.05, 0.025], [1.0, 0.25, 0.0625]) == pytest.approx([2.0, 2.0])


def test_pme_zero_data_zero_error():
    rep = pme_validation(levels=(16, 32), mass=0.0, t_end=0.1)
    assert rep.errors == [0.0, 0.0]


def test_pme_split_consistency():
    rep = pme_validation(levels=(32, 64), eta=0.3, t_end=0.2)
    assert min(rep.details["min_u"]) >= 0
    assert max(rep.details["max_split_residual"]) <= 1e-10
    assert all(np.isfinite(rep.errors))


def test_pme_matches_between_splits():
    a = pme_validation(levels=(32,), eta=1.0, t_end=0.2)
    b = pme_validation(levels=(32,), eta=0.3, t_end=0.2)
    assert a.errors[0] == pytest.approx(b.errors[0], abs=1e-9)


def test_epsilon_constant_scenario_zero_distances():
    rep = epsilon_study(_constant_scenario(), [1e-1, 1e-2, 1e-3])
    assert len(rep.errors) == 2
    assert max(rep.errors) < 1e-14


def test_epsilon_single_level_vacuous():
    rep = epsilon_study(_constant_scenario(), [1e-2])
    assert rep.errors == [] and rep.passed


def test_epsilon_requires_equal_mobilities():
    with pytest.raises(ValueError, match="mu == nu"):
        epsilon_study(_small_barenblatt(mu=1.0, nu=2.0), [1e-1, 1e-2])


def test_epsilon_levels_decreasing():
    with pytest.raises(ValueError, match="decreasing"):
        epsilon_study(_constant_scenario(), [1e-2, 1e-1])


def test_distance_symmetric_and_zero():
    sc = _small_barenblatt()
    a, b = sc.run(epsilon=1e-1), sc.run(epsilon=1e-2)
    assert h1_time_distance(a, b, 3.0) == h1_time_distance(b, a, 3.0) > 0
    assert h1_time_distance(a, a, 3.0) == 0.0


def test_asymmetric_degenerates_to_epsilon_pipeline():
    sc = _small_barenblatt()
    a = epsilon_study(sc, [1e-1, 1e-2])
    b = asymmetric_mobility_study(sc, [1e-1, 1e-2])
    assert a.errors == b.errors
    assert a.details["budgets"] == b.details["budgets"]


def test_asymmetric_invariants():
    rep = asymmetric_mobility_study(_small_barenblatt(mu=2.0, nu=1.0), [1e-1, 1e-2])
    assert rep.passed, rep.checks
    assert len(rep.details["invariants"]) == 2


def test_budget_checks():
    assert budget_checks([0.3, 0.4, 0.43, 0.44]) == {"bounded": True, "no_growth": True}
    assert not budget_checks([0.1, 0.3])["bounded"]
    assert not budget_checks([0.3, 0.31, 0.33, 0.37])["no_growth"]


def test_segregation_single_species():
    g = make_grid(1, 64, 1.0)
    s = initial_state({"profile": "two-bumps", "amp2": 0.0}, g)
    rep = segregation_study(s, Params(epsilon=1e-4), g, t_end=0.05)
    assert rep.errors == [0.0] * len(rep.errors)


def test_segregation_control_overlaps():
    g = make_grid(1, 64, 1.0)
    s = initial_state({"profile": "two-bumps", "center1": 0.45, "center2": 0.55}, g)
    assert relative_overlap(s, g) > 1e-6
    rep = segregation_study(s, Params(epsilon=1e-4), g, t_end=0.05)
    assert not rep.passed


def test_segregation_preconditions():
    g = make_grid(2, 8, 1.0)
    s = make_state(np.zeros(g.shape), np.zeros(g.shape))
    with pytest.raises(ValueError):
        segregation_study(s, Params(), g)


def test_write_study(tmp_path):
    rep = epsilon_study(_small_barenblatt(), [1e-1, 1e-2])
    out = write_study(rep, tmp_path / "study", config={"a": 1})
    names = sorted(p.name for p in out.iterdir())
    assert names == ["config.json", "series_eps0.01.csv", "series_eps0.1.csv", "summary.json"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"].startswith("crossdiff.study/")
    assert summary["errors"] == rep.errors


def test_fan_out_matches_serial():
    sc = _small_barenblatt()
    a = epsilon_study(sc, [1e-1, 1e-2], workers=1)
    b = epsilon_study(sc, [1e-1, 1e-2], workers=2)
    assert a.errors == b.errors
