import numpy as np
import pytest

from roadfield import analysis as an
from roadfield import dynamics as dyn
from roadfield.errors import ParameterDomainError
from roadfield.model import ModelParams, ReactionSpec

P = ModelParams(D=2.0, d=1.0, nu=1.0, mu=1.0)
NUM = an.Numerics.for_period(1.0, dt=0.05, t_max=300.0)


def test_sign_classification_band():
    assert an.classify_sign(-0.01, 1e-3) == an.NEGATIVE
    assert an.classify_sign(0.01, 1e-3) == an.NONNEGATIVE
    assert an.classify_sign(5e-4, 1e-3) == an.INDETERMINATE
    assert an.classify_sign(-1e-3, 1e-3) == an.INDETERMINATE


def test_classify_growth_confirmed():
    v = an.classify(P, ReactionSpec.homogeneous(1.0), NUM)
    assert (v.sign, v.predicted, v.dynamics_outcome) == (an.NEGATIVE, an.PERSISTENCE, dyn.CONVERGED_POSITIVE)
    assert v.agreement is True and v.confirmed
    assert v.to_dict()["status"] == "confirmed"


def test_classify_decay_confirmed():
    v = an.classify(P, ReactionSpec.homogeneous(-1.0), NUM)
    assert (v.sign, v.predicted, v.dynamics_outcome) == (an.NONNEGATIVE, an.EXTINCTION, dyn.DECAYED_TO_ZERO)
    assert v.confirmed


def test_classify_mean_zero_cosine_persists():
    v = an.classify(P, ReactionSpec.logistic_periodic(0.0, 1.0, M=1.0), NUM, run_dynamics=False)
    assert v.sign == an.NEGATIVE and v.predicted == an.PERSISTENCE
    assert v.agreement is None and v.to_dict()["status"] == "not contradicted"


def test_classify_undecided_is_not_asserted():
    num = an.Numerics.for_period(1.0, dt=0.05, t_max=1.0)
    v = an.classify(P, ReactionSpec.homogeneous(1.0), num)
    assert v.dynamics_outcome == dyn.UNDECIDED and v.agreement is None and not v.confirmed


def test_classify_indeterminate_predicts_unknown():
    num = an.Numerics.for_period(1.0, delta_sign=10.0)
    v = an.classify(P, ReactionSpec.homogeneous(1.0), num, run_dynamics=False)
    assert v.sign == an.INDETERMINATE and v.predicted == an.UNKNOWN


def test_drivers_require_c0():
    p = ModelParams(D=2, d=1, nu=1, mu=1, c=0.3)
    r = ReactionSpec.homogeneous(1.0)
    for call in (lambda: an.classify(p, r, NUM, run_dynamics=False), lambda: an.road_effect(p, r, NUM),
                 lambda: an.amplitude_sweep(p, ReactionSpec.homogeneous(-1.0), [1.0, 2.0], NUM)):
        with pytest.raises(ParameterDomainError):
            call()


def test_road_effect_growth():
    rep = an.road_effect(P, ReactionSpec.homogeneous(1.0), NUM)
    assert rep.lambda_without_road == pytest.approx(-1.0, abs=1e-12)
    assert rep.lambda_with_road < 0 and rep.signs_agree and rep.ordering_holds


def test_road_effect_decay_road_bound():
    rep = an.road_effect(P, ReactionSpec.homogeneous(-1.0), NUM)
    assert rep.lambda_without_road == pytest.approx(1.0, abs=1e-12)
    assert 0 <= rep.lambda_with_road <= P.mu + 1e-6
    assert rep.signs_agree and rep.ordering_holds and rep.below_mu


def test_road_effect_random_periodic_sign_agreement():
    rng = np.random.default_rng(20)
    num = an.Numerics.for_period(1.0, sizes=[2.0, 4.0, 8.0])
    determinate = 0
    for _ in range(20):
        p = ModelParams(D=rng.uniform(0.5, 5), d=rng.uniform(0.5, 2), nu=rng.uniform(0.3, 3), mu=rng.uniform(0.3, 3))
        a0, a1 = rng.uniform(-1, 1), rng.uniform(-2, 2)
        rep = an.road_effect(p, ReactionSpec.logistic_periodic(a0, a1, M=max(1.0, a0 + abs(a1))), num, method="periodic")
        if rep.signs_agree is not None:
            determinate += 1
            assert rep.signs_agree
        assert rep.ordering_holds and rep.below_mu
    assert determinate >= 15


def test_amplitude_sweep_transition():
    num = an.Numerics.for_period(1.0, hx=1 / 32, hy=1 / 32)
    rep = an.amplitude_sweep(P, ReactionSpec.logistic_periodic(-0.5, 1.0), [0.1, 1.0, 10.0, 100.0], num)
    signs = [s for _, _, s in rep.rows]
    assert signs[0] == an.NONNEGATIVE and signs[-1] == an.NEGATIVE
    assert rep.expect_change and rep.transition_observed and rep.sign_changes == 1


def test_amplitude_sweep_negative_constant_stays_positive():
    rep = an.amplitude_sweep(P, ReactionSpec.homogeneous(-1.0), [0.1, 1.0, 10.0], NUM)
    assert not rep.expect_change and rep.sign_changes == 0
    assert all(s == an.NONNEGATIVE for _, _, s in rep.rows)


def test_amplitude_sweep_preconditions():
    with pytest.raises(ParameterDomainError):
        an.amplitude_sweep(P, ReactionSpec.logistic_periodic(0.5, 1.0), [0.1, 1.0], NUM)
    with pytest.raises(ParameterDomainError):
        an.amplitude_sweep(P, ReactionSpec.homogeneous(-1.0), [1.0, 0.1], NUM)


@pytest.mark.parametrize("reaction", [ReactionSpec.homogeneous(0.5), ReactionSpec.logistic_periodic(-0.2, 1.0)],
                         ids=["homogeneous", "periodic"])
def test_ordering_audit_passes(reaction):
    rep = an.ordering_audit(P, reaction, [1.0, 2.0, 4.0], NUM)
    assert rep.passed, [c.to_dict() for c in rep.failures]
    assert {"cell", "strip", "rect", "tol"} <= set(rep.limits)


def test_ordering_audit_homogeneous_analytic_slack():
    rep = an.ordering_audit(P, ReactionSpec.homogeneous(0.5), [1.0, 2.0], NUM)
    assert rep.limits["cell"] == pytest.approx(-0.5, abs=1e-12)
    for c in rep.checks:
        assert c.rhs - c.lhs > 1e-3


def test_ordering_audit_with_drift():
    p = ModelParams(D=2.0, d=1.0, nu=1.0, mu=1.0, c=0.3)
    rep = an.ordering_audit(p, ReactionSpec.logistic_periodic(0.0, 1.0), [1.0, 2.0, 4.0], NUM)
    incl = [c for c in rep.checks if c.name.startswith("coupled")]
    assert incl and all(c.passed for c in incl)
    assert "strip" not in rep.limits


def test_ordering_check_reports_failure():
    bad = an.OrderingCheck("x", 1.0, 2.0, 1.0, 1e-9)
    rep = an.OrderingReport([bad], {})
    assert not rep.passed and rep.failures == [bad]


def test_fixtures_load():
    fx = an.load_fixtures()
    assert len(fx) == 12 and len({name for name, _, _ in fx}) == 12
    for _, p, r in fx:
        assert p.c == 0.0 and p.ell == 1.0
        assert r.M >= r.max_linearization()


def test_numerics_scale_with_period():
    n = an.Numerics.for_period(2.0)
    assert n.hx == 0.25 and n.sizes == [4.0, 8.0, 16.0, 32.0] and n.dyn_height == 16.0
