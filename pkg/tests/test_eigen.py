import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roadfield.eigen import (
    DENSE_MAX_ORDER,
    dense_oracle,
    extrapolate_limit,
    map_jobs,
    periodic_cell_eigen,
    periodic_roadfield_eigen,
    principal_eigenpair,
    rayleigh_quotient,
    strip_eigen,
    truncation_sweep,
)
from roadfield.errors import ConvergenceError, ParameterDomainError
from roadfield.grids import (
    DIRICHLET_RECT,
    PERIODIC_HALF_STRIP,
    PERIODIC_STRIP,
    TRUNCATED_ROAD_FIELD,
    Geometry,
    assemble_coupled_operator,
    assemble_field_operator,
)
from roadfield.model import ModelParams, ReactionSpec

P = ModelParams(D=2.0, d=1.0, nu=1.0, mu=1.0)
UNIT = ModelParams(D=1.0, d=1.0, nu=1.0, mu=1.0)
ZERO = ReactionSpec.homogeneous(0.0)

# Frozen values from independent closed forms / hand-built matrices (see comments).
RECT_H16 = 12.303356377381192     # sum of (2 - 2cos(pi h/L))/h^2 over L = 2, 1
STRIP_HY64 = 2.4672772406947843   # (2 - 2cos(pi h/2))/h^2
HALF_NEUMANN_H16 = 2.4654199438351725
CELL_COS_N32 = -0.012702334035561674  # dense eigvalsh of a hand-built circulant-plus-diagonal matrix
REDUCED_COUPLED = 0.13971573666565362  # x-constant reduction to a (ny+1) chain, numpy eigvals


def test_periodic_cell_homogeneous_exact():
    res = periodic_cell_eigen(UNIT, ReactionSpec.homogeneous(1.0), 64)
    assert abs(res.lam + 1.0) <= 1e-12
    np.testing.assert_allclose(res.vec_field, 1.0, atol=1e-12)


def test_periodic_cell_cosine_against_hand_matrix():
    res = periodic_cell_eigen(UNIT, ReactionSpec.logistic_periodic(0.0, 1.0), 32)
    assert res.lam == pytest.approx(CELL_COS_N32, abs=1e-12)
    assert res.lam < 0.0


def test_periodic_cell_rejects_small_n():
    with pytest.raises(ParameterDomainError):
        periodic_cell_eigen(UNIT, ZERO, 4)


def test_dirichlet_rect_sine_product():
    op = assemble_field_operator(Geometry.dirichlet_rect(1.0, 1.0, 1 / 16), UNIT, ZERO)
    res = principal_eigenpair(op)
    assert res.lam == pytest.approx(RECT_H16, rel=1e-10)
    assert abs(res.lam - 5 * math.pi**2 / 4) / (5 * math.pi**2 / 4) < 0.01


def test_dense_oracle_rect_spectrum_matches_sine_product():
    g = Geometry.dirichlet_rect(1.0, 1.0, 1 / 4, 1 / 4)
    ev = dense_oracle(assemble_field_operator(g, UNIT, ZERO))
    kx = np.arange(1, g.nx + 1)
    ky = np.arange(1, g.ny + 1)
    lx = 4 / g.hx**2 * np.sin(kx * math.pi * g.hx / 4) ** 2
    ly = 4 / g.hy**2 * np.sin(ky * math.pi * g.hy / 2) ** 2
    np.testing.assert_allclose(ev, np.sort((lx[:, None] + ly[None, :]).ravel()), rtol=1e-12)


def test_dense_oracle_circulant():
    ev = dense_oracle(assemble_field_operator(Geometry.periodic_cell(1.0, 8), UNIT, ZERO))
    k = np.arange(8)
    expected = np.sort(2 * (1 - np.cos(2 * math.pi * k / 8)) * 64)
    np.testing.assert_allclose(ev, expected, atol=1e-11)
    assert abs(ev[0]) < 1e-11


def test_dense_oracle_order_limit():
    g = Geometry.dirichlet_rect(8.0, 8.0, 1 / 8)
    assert g.nx * g.ny > DENSE_MAX_ORDER
    with pytest.raises(ParameterDomainError):
        dense_oracle(assemble_field_operator(g, UNIT, ZERO))


def test_strip_quarter_wave():
    res = strip_eigen(1.0, UNIT, ZERO, hx=1 / 8, hy=1 / 64)
    assert res.lam == pytest.approx(STRIP_HY64, rel=1e-10)
    assert abs(res.lam - math.pi**2 / 4) / (math.pi**2 / 4) < 0.02


def test_strip_large_r_approaches_minus_a0_from_above():
    lams = [strip_eigen(r, UNIT, ReactionSpec.homogeneous(1.0), hx=1 / 4).lam for r in (1.0, 2.0, 4.0)]
    assert all(lam > -1.0 for lam in lams)
    assert lams[0] > lams[1] > lams[2]


def test_half_strip_without_road_is_quarter_wave():
    op = assemble_field_operator(Geometry.periodic_half_strip(1.0, 1.0, 1 / 8, 1 / 16), UNIT, ZERO)
    assert principal_eigenpair(op).lam == pytest.approx(HALF_NEUMANN_H16, rel=1e-10)


def test_periodic_roadfield_reduced_chain():
    p = ModelParams(D=2.0, d=1.0, nu=2.0, mu=0.5)
    res = periodic_roadfield_eigen(1.0, p, ReactionSpec.homogeneous(0.5), 1 / 8)
    assert res.lam == pytest.approx(REDUCED_COUPLED, abs=1e-11)


def test_periodic_roadfield_simple_gap():
    op = assemble_coupled_operator(Geometry.periodic_half_strip(2.0, 1.0, 1 / 8), P, ReactionSpec.logistic_periodic(0.1, 1.0))
    ev = dense_oracle(op)
    assert ev[1] - ev[0] > 1e-3


def test_periodic_roadfield_sign_and_road_bound():
    grow = periodic_roadfield_eigen(8.0, P, ReactionSpec.homogeneous(1.0), 1 / 4).lam
    decay = periodic_roadfield_eigen(8.0, P, ReactionSpec.homogeneous(-1.0), 1 / 4).lam
    assert grow < 0 < decay <= P.mu + 1e-6


def random_op(seed):
    rng = np.random.default_rng(seed)
    p = ModelParams(D=rng.uniform(0.2, 5), d=rng.uniform(0.2, 5), nu=rng.uniform(0.2, 3), mu=rng.uniform(0.2, 3),
                    c=float(rng.choice([0.0, rng.uniform(0, 1)])))
    r = ReactionSpec.logistic_periodic(rng.uniform(-1, 1), rng.uniform(-2, 2))
    kind = seed % 4
    if kind == 0:
        g = Geometry.truncated_road_field(2.0, 2.0, 1 / 4)
        return assemble_coupled_operator(g, p, r)
    if kind == 1:
        return assemble_coupled_operator(Geometry.periodic_half_strip(2.0, 1.0, 1 / 8, 1 / 4), p, r)
    if kind == 2:
        return assemble_field_operator(Geometry.dirichlet_rect(2.0, 2.0, 1 / 4), p, r)
    return assemble_field_operator(Geometry.periodic_strip(1.0, 1.0, 1 / 8), p, r)


@pytest.mark.parametrize("seed", range(8))
def test_inverse_iteration_matches_dense(seed):
    op = random_op(seed)
    res = principal_eigenpair(op, tol=1e-12)
    assert abs(res.lam - dense_oracle(op)[0]) <= 1e-8
    assert res.min_entry > 0
    assert np.max(res.vector) == pytest.approx(1.0)


def test_nonconvergence_raises_with_residual():
    op = assemble_coupled_operator(Geometry.truncated_road_field(2.0, 2.0, 1 / 8), P, ReactionSpec.homogeneous(1.0))
    with pytest.raises(ConvergenceError) as err:
        principal_eigenpair(op, tol=1e-15, maxiter=1)
    assert math.isfinite(err.value.residual)


def test_rayleigh_at_eigenpair_and_above():
    op = assemble_coupled_operator(Geometry.truncated_road_field(2.0, 2.0, 1 / 4), P, ReactionSpec.logistic_periodic(0.2, 1.0))
    res = principal_eigenpair(op, tol=1e-12)
    assert rayleigh_quotient(res.vec_road, res.vec_field, op) == pytest.approx(res.lam, abs=1e-8)
    rng = np.random.default_rng(7)
    for _ in range(20):
        w = rng.uniform(0.01, 1, op.order)
        assert rayleigh_quotient(w[: op.dim_road], w[op.dim_road:], op) >= res.lam - 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rayleigh_equals_weighted_matrix_quotient(seed):
    rng = np.random.default_rng(seed)
    p = ModelParams(D=rng.uniform(0.2, 5), d=rng.uniform(0.2, 5), nu=rng.uniform(0.2, 3), mu=rng.uniform(0.2, 3))
    r = ReactionSpec.logistic_periodic(rng.uniform(-1, 1), rng.uniform(-2, 2))
    geoms = [Geometry.truncated_road_field(1.0, 1.0, 1 / 4), Geometry.periodic_half_strip(1.0, 1.0, 1 / 4)]
    for g in geoms:
        op = assemble_coupled_operator(g, p, r)
        w = rng.normal(size=op.order)
        expected = w @ (op.weights * (op.matrix @ w)) / (w @ (op.weights * w))
        assert rayleigh_quotient(w[: op.dim_road], w[op.dim_road:], op) == pytest.approx(expected, rel=1e-10, abs=1e-10)


def test_rayleigh_constant_pair_decays_with_R():
    vals = []
    for R in (2.0, 4.0, 8.0):
        op = assemble_coupled_operator(Geometry.truncated_road_field(R, R, 1 / 4), P, ZERO)
        vals.append(rayleigh_quotient(np.full(op.dim_road, P.nu / P.mu), np.ones(op.dim_field), op))
    assert vals[0] > vals[1] > vals[2] > 0


def test_rayleigh_errors():
    op = assemble_coupled_operator(Geometry.truncated_road_field(1.0, 1.0, 1 / 4), ModelParams(D=1, d=1, nu=1, mu=1, c=0.5), ZERO)
    with pytest.raises(ParameterDomainError):
        rayleigh_quotient(np.ones(op.dim_road), np.ones(op.dim_field), op)
    op = assemble_coupled_operator(Geometry.truncated_road_field(1.0, 1.0, 1 / 4), P, ZERO)
    with pytest.raises(ZeroDivisionError):
        rayleigh_quotient(np.zeros(op.dim_road), np.zeros(op.dim_field), op)
    with pytest.raises(ValueError):
        rayleigh_quotient(np.ones(3), np.ones(op.dim_field), op)


def test_extrapolate_geometric_sequence_exact():
    seq = [2.0 + 3.0 * 0.25**k for k in range(4)]
    assert extrapolate_limit(seq) == pytest.approx(2.0, abs=1e-12)
    assert extrapolate_limit([1.0, 0.5, 0.6]) == 0.6
    assert extrapolate_limit([1.0, 0.9]) == 0.9
    # slowly shrinking increments: no extrapolation, last value kept
    assert extrapolate_limit([0.46, 0.26, 0.124]) == 0.124


def test_dirichlet_family_scaling():
    sw = truncation_sweep(DIRICHLET_RECT, [1.0, 2.0, 4.0], UNIT, ReactionSpec.homogeneous(0.5), 1 / 4)
    excess = np.array(sw.lambdas) + 0.5
    assert sw.monotone and np.all(excess > 0)
    ratios = excess[:-1] / excess[1:]
    assert np.all((ratios > 3.0) & (ratios < 4.5))


@pytest.mark.parametrize("kind", [TRUNCATED_ROAD_FIELD, PERIODIC_STRIP, PERIODIC_HALF_STRIP, DIRICHLET_RECT])
def test_sweeps_monotone(kind):
    sw = truncation_sweep(kind, [1.0, 2.0, 4.0], P, ReactionSpec.logistic_periodic(-0.2, 1.0), 1 / 4)
    assert sw.monotone and all(b <= a + 1e-9 for a, b in zip(sw.lambdas, sw.lambdas[1:]))
    assert len(sw.to_rows()) == 3


def test_coupled_sweep_homogeneous_growth_negative_limit():
    sw = truncation_sweep(TRUNCATED_ROAD_FIELD, [2.0, 4.0, 8.0], P, ReactionSpec.homogeneous(1.0), 1 / 4)
    assert sw.limit_estimate < 0


def test_sweep_rejects_bad_sizes():
    with pytest.raises(ParameterDomainError):
        truncation_sweep(DIRICHLET_RECT, [2.0, 1.0, 4.0], P, ZERO, 1 / 4)
    with pytest.raises(ParameterDomainError):
        truncation_sweep(DIRICHLET_RECT, [1.0, 2.0], P, ZERO, 1 / 4)


def test_map_jobs_keeps_key_order(monkeypatch):
    monkeypatch.setenv("ROADFIELD_THREADS", "3")
    assert map_jobs(lambda k: k * k, [3, 1, 2, 5]) == [9, 1, 4, 25]


def test_sweep_thread_count_does_not_change_results(monkeypatch):
    args = (TRUNCATED_ROAD_FIELD, [1.0, 2.0, 3.0], P, ReactionSpec.logistic_periodic(0.0, 1.0), 1 / 4)
    monkeypatch.setenv("ROADFIELD_THREADS", "1")
    one = truncation_sweep(*args).lambdas
    monkeypatch.setenv("ROADFIELD_THREADS", "3")
    assert truncation_sweep(*args).lambdas == one
