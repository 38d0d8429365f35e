import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossdiff.model import (
    Constant,
    GrowthModel,
    Logistic,
    Params,
    Table,
    quadratic_form_nonneg,
    reaction_bound,
    reaction_rates,
    theta_p,
    validate_h1,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_theta_branches():
    assert theta_p(-0.5, 1.0) == 0.0
    assert theta_p(0.4, 1.0) == 0.4
    assert theta_p(3.0, 1.0) == 1.0


def test_theta_rejects_nonpositive_threshold():
    with pytest.raises(ValueError):
        theta_p(0.5, 0.0)


@given(finite, st.floats(1e-3, 1e3))
def test_theta_idempotent(s, w_p):
    once = theta_p(s, w_p)
    assert theta_p(once, w_p) == once
    assert 0.0 <= once <= w_p


def test_reaction_rates_zero_model():
    R1, R2 = reaction_rates(0.3, 0.2, 0.5, GrowthModel.zero())
    assert (R1, R2) == (0.0, 0.0)


def test_reaction_rates_substitution():
    model = GrowthModel(Constant(1.0), Constant(0.0), Constant(2.0), Constant(-1.0), 1.0)
    R1, R2 = reaction_rates(2.0, 3.0, 0.5, model)
    assert (float(R1), float(R2)) == (8.0, -3.0)


def test_reaction_rates_vacuum(logistic_model):
    R1, R2 = reaction_rates(0.0, 0.0, 0.0, logistic_model)
    assert (R1, R2) == (0.0, 0.0)


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1))
def test_reactions_nonnegative_and_bounded_below_threshold(a, b):
    model = GrowthModel.logistic(1.0, (1.0, 0.5, 0.2, 1.0))
    u1, u2 = a / 2, b / 2
    w = u1 + u2
    R1, R2 = reaction_rates(u1, u2, w, model)
    M0 = reaction_bound(model).M0
    assert R1 >= 0 and R2 >= 0
    assert R1 + R2 <= model.w_p * M0 + 1e-12


def test_h1_logistic_passes():
    lin = Logistic(1.0, 1.0)
    report = validate_h1(GrowthModel(lin, lin, lin, lin, 1.0), W_max=3.0)
    assert report.passed, str(report)


def test_h1_positive_constant_fails():
    z = Constant(0.0)
    report = validate_h1(GrowthModel(Constant(1.0), z, z, z, 1.0))
    assert not report.passed
    names = [c.name for c in report.failures()]
    assert names == ["F<=0 on [w_p,W_max]"]
    assert report.failures()[0].worst_w == pytest.approx(1.0)


def test_h1_zero_passes():
    assert validate_h1(GrowthModel.zero(1.0)).passed


def test_h1_detects_negative_rate_below_threshold():
    z = Constant(0.0)
    report = validate_h1(GrowthModel(z, z, Constant(-0.1), z, 1.0))
    assert [c.name for c in report.failures()] == ["E>=0 on [0,w_p)"]


def test_h1_detects_jump():
    # a step placed between samples still shows up as a jump that does not shrink
    step = Table((0.0, 0.7, 0.7 + 1e-9, 2.0), (0.0, 0.0, 1.0, 1.0))
    z = Constant(0.0)
    report = validate_h1(GrowthModel(z, z, z, Table((0, 1), (0, 0)), 1.0))
    assert report.passed
    bad = validate_h1(GrowthModel(z, z, step, z, 1.0))
    assert "continuity" in [c.name for c in bad.failures()]


def test_h1_rejects_small_wmax():
    with pytest.raises(ValueError):
        validate_h1(GrowthModel.zero(1.0), W_max=0.5)


@pytest.mark.parametrize(
    "abc, expected",
    [((1, 2, 1), True), ((1, 3, 1), False), ((0, 1, 1), False), ((0, 0, 1), True), ((-1, 0, 1), False), ((1, 0, 0), True)],
)
def test_quadratic_form_examples(abc, expected):
    assert quadratic_form_nonneg(*abc) is expected


def test_reaction_bound_examples():
    assert reaction_bound(GrowthModel.zero(1.0)).M0 == 0.0
    lin = Logistic(1.0, 1.0)
    assert reaction_bound(GrowthModel(lin, lin, lin, lin, 1.0)).M0 == pytest.approx(2.0)
    z = Constant(0.0)
    rb = reaction_bound(GrowthModel(lin, z, z, z, 1.0))
    assert rb.M0 == pytest.approx(1.0)
    assert rb.max_reaction == pytest.approx(1.0)


def test_model_roundtrip(logistic_model):
    d = logistic_model.to_dict()
    back = GrowthModel.from_dict(d)
    assert back == logistic_model
    tab = GrowthModel(Table((0.0, 1.0), (1.0, 0.0)), Constant(0.0), Constant(0.0), Constant(0.0), 1.0)
    assert GrowthModel.from_dict(tab.to_dict()) == tab


def test_rates_vectorize():
    w = np.linspace(0, 2, 7)
    for r in (Constant(0.5), Logistic(2.0, 1.0), Table((0.0, 1.0), (1.0, 0.0))):
        assert r(w).shape == w.shape


def test_params_validation():
    with pytest.raises(ValueError, match="gamma"):
        Params(gamma=1.0)
    with pytest.raises(ValueError, match="mu"):
        Params(mu=0.0)
    assert Params(gamma=1.0001).problems() == []
    p = Params(epsilon=0.01, floor=True)
    assert p.epsilon_floor == 0.01
    assert Params(epsilon=0.01).epsilon_floor == 0.0
