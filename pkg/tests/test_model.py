import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roadfield.errors import ParameterDomainError
from roadfield.model import ModelParams, ReactionSpec, linearization, validate_hypotheses

finite = st.floats(-3, 3, allow_nan=False)
positive = st.floats(0.05, 5, allow_nan=False)


def test_params_accept_valid_and_default_c():
    p = ModelParams(D=2, d=1, nu=1, mu=1)
    assert p.c == 0.0 and p.ell == 1.0


@pytest.mark.parametrize("field", ["D", "d", "nu", "mu", "ell"])
@pytest.mark.parametrize("value", [0.0, -1.0, math.inf, math.nan])
def test_params_reject_nonpositive_or_nonfinite(field, value):
    kw = dict(D=2, d=1, nu=1, mu=1, ell=1)
    kw[field] = value
    with pytest.raises(ParameterDomainError):
        ModelParams(**kw)


def test_params_reject_negative_c():
    with pytest.raises(ParameterDomainError):
        ModelParams(D=1, d=1, nu=1, mu=1, c=-0.1)


def test_linearization_examples():
    assert linearization(ReactionSpec.homogeneous(1.0), 0.37) == 1.0
    r = ReactionSpec.logistic_periodic(0.0, 1.0)
    assert linearization(r, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert linearization(r, 0.5) == pytest.approx(-1.0, abs=1e-15)
    assert linearization(ReactionSpec.logistic_periodic(2.0, 1.0, alpha=3.0), 0.0) == pytest.approx(9.0)


@settings(max_examples=50, deadline=None)
@given(a0=finite, a1=finite, alpha=positive, ell=positive)
def test_linearization_is_periodic(a0, a1, alpha, ell):
    r = ReactionSpec.logistic_periodic(a0, a1, alpha=alpha, ell=ell)
    x = np.random.default_rng(0).uniform(-10, 10, 1000)
    scale = alpha * (abs(a0) + abs(a1) + 1)
    assert np.max(np.abs(r.linearization(x + ell) - r.linearization(x))) <= 1e-12 * scale


@settings(max_examples=50, deadline=None)
@given(a0=finite, a1=finite, alpha=positive)
def test_f_matches_linearization_form(a0, a1, alpha):
    r = ReactionSpec.logistic_periodic(a0, a1, alpha=alpha)
    rng = np.random.default_rng(1)
    x, v = rng.uniform(0, 1, 200), rng.uniform(0, 5, 200)
    np.testing.assert_allclose(r.f(x, v), v * (r.linearization(x) - alpha * v), rtol=1e-12, atol=1e-12)


def test_validate_canonical_logistic_passes():
    rep = validate_hypotheses(ReactionSpec.logistic_periodic(1.0, 0.0, M=1.0), samples=32)
    assert rep.passed and set(rep.checks) == {"zero_equilibrium", "saturation", "kpp", "periodicity"}


def test_validate_negative_mean_logistic_passes():
    assert validate_hypotheses(ReactionSpec.logistic_periodic(-0.5, 1.0, M=1.0)).passed


def test_validate_quadratic_fails_kpp():
    rep = validate_hypotheses(ReactionSpec("Custom", expr="v**2", M=1.0))
    assert not rep.checks["kpp"] and "kpp" in rep.details


def test_validate_saturation_failure_when_M_too_small():
    rep = validate_hypotheses(ReactionSpec.logistic_periodic(2.0, 0.0, M=1.0))
    assert not rep.checks["saturation"]


def test_validate_nonperiodic_custom_fails():
    rep = validate_hypotheses(ReactionSpec("Custom", expr="v*(1 + x - v)", M=3.0))
    assert not rep.checks["periodicity"]


def test_validate_rejects_few_samples():
    with pytest.raises(ParameterDomainError):
        validate_hypotheses(ReactionSpec.homogeneous(1.0), samples=8)


def test_validate_is_deterministic():
    r = ReactionSpec.logistic_periodic(-0.3, 0.7, M=1.0)
    assert validate_hypotheses(r).to_dict() == validate_hypotheses(r).to_dict()


def test_reaction_rejections():
    with pytest.raises(ParameterDomainError):
        ReactionSpec.homogeneous(1.0, M=0.0)
    with pytest.raises(ParameterDomainError):
        ReactionSpec.homogeneous(1.0, alpha=-1.0)
    with pytest.raises(ParameterDomainError):
        ReactionSpec("Homogeneous", a0=1.0, a1=0.5)
    with pytest.raises(ParameterDomainError):
        ReactionSpec("Custom")
    with pytest.raises(ParameterDomainError):
        ReactionSpec("Custom", expr="__import__('os')")
    with pytest.raises(ParameterDomainError):
        ReactionSpec("Nope")


def test_custom_samples_and_expr_linearization():
    r = ReactionSpec("Custom", a_samples=(1.0, 0.0, -1.0, 0.0))
    assert r.linearization(0.0) == pytest.approx(1.0)
    assert r.linearization(0.5) == pytest.approx(-1.0)
    e = ReactionSpec("Custom", expr="v*(cos(2*pi*x/ell) - v)")
    assert e.linearization(np.array([0.0, 0.5])) == pytest.approx([1.0, -1.0], abs=1e-8)


def test_mean_and_max_linearization():
    r = ReactionSpec.logistic_periodic(-0.5, 1.0, alpha=2.0)
    assert r.mean_linearization() == pytest.approx(-1.0, abs=1e-12)
    assert r.max_linearization() == pytest.approx(1.0, abs=1e-12)


def test_lipschitz_bound_dominates_sampled_slope():
    r = ReactionSpec.logistic_periodic(0.5, 1.0, alpha=2.0, M=2.0)
    vmax = 2.0
    x = np.linspace(0, 1, 101)[:, None]
    v = np.linspace(0, vmax, 201)[None, :]
    slope = np.max(np.abs(np.diff(r.f(x, v), axis=1))) / (v[0, 1] - v[0, 0])
    assert slope <= r.lipschitz(vmax) + 1e-12
