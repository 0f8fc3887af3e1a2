"""Drivers turning eigenvalues and trajectories into verdicts.

Each driver returns a plain dataclass with a ``to_dict`` for JSON output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Sequence

from . import dynamics as dyn
from .eigen import TruncationSweep, periodic_cell_eigen, principal_eigenpair, strip_eigen, truncation_sweep
from .errors import ParameterDomainError
from .grids import (
    DIRICHLET_RECT,
    PERIODIC_HALF_STRIP,
    PERIODIC_STRIP,
    TRUNCATED_ROAD_FIELD,
    Geometry,
    assemble_coupled_operator,
    assemble_field_operator,
)
from .model import ModelParams, ReactionSpec

NEGATIVE = "Negative"
NONNEGATIVE = "NonNegative"
INDETERMINATE = "Indeterminate"

PERSISTENCE = "Persistence"
EXTINCTION = "Extinction"
UNKNOWN = "Unknown"

METHODS = ("truncated", "periodic")
ORDERING_TOL = 1e-6
AUDIT_TOL = 1e-9


@dataclass
class Numerics:
    """Discretization and solver knobs; lengths are absolute (not in units of ``ell``).

    ``sizes`` are truncation half-widths ``R`` (or strip heights ``r``).
    ``lambda1_method`` picks how the road-field eigenvalue is estimated:
    ``truncated`` sweeps ``(-R, R) x (0, R)`` domains, ``periodic`` sweeps
    one-period half-strips of height ``r``. ``None`` means each driver's
    default (truncated for classify/road-effect, periodic for amplitude).
    """

    hx: float = 0.125
    hy: float = 0.125
    dt: float = 0.01
    tol: float = 1e-10
    maxiter: int = 2000
    sizes: List[float] = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    alphas: List[float] = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    t_max: float = 1000.0
    delta_sign: float = 1e-3
    dyn_height: float = 8.0
    periods_k: int = 1
    lambda1_method: Optional[str] = None

    @classmethod
    def for_period(cls, ell, **overrides):
        """Defaults scaled to the period ``ell``: h = ell/8, sizes 2..16 ell, H_dyn = 8 ell."""
        base = dict(hx=ell / 8, hy=ell / 8, sizes=[2.0 * ell, 4.0 * ell, 8.0 * ell, 16.0 * ell], dyn_height=8.0 * ell)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return {
            "hx": self.hx, "hy": self.hy, "dt": self.dt, "tol": self.tol, "maxiter": self.maxiter,
            "sizes": list(self.sizes), "alphas": list(self.alphas), "t_max": self.t_max,
            "delta_sign": self.delta_sign, "dyn_height": self.dyn_height, "periods_k": self.periods_k,
            "lambda1_method": self.lambda1_method,
        }


def classify_sign(lam: float, delta: float) -> str:
    if lam < -delta:
        return NEGATIVE
    if lam > delta:
        return NONNEGATIVE
    return INDETERMINATE


def _prediction(sign):
    return {NEGATIVE: PERSISTENCE, NONNEGATIVE: EXTINCTION}.get(sign, UNKNOWN)


def estimate_lambda1(params: ModelParams, reaction: ReactionSpec, numerics: Numerics,
                     method: str = "truncated") -> TruncationSweep:
    """Road-field generalized eigenvalue as the limit of a nested sweep.

    ``truncated`` uses ``(-R, R) x (0, R)`` domains with the road on the
    bottom edge; ``periodic`` (valid for ``c = 0``, where both limits agree)
    uses one-period half-strips of height ``r``, which is far cheaper.
    """
    if method not in METHODS:
        raise ParameterDomainError(f"unknown lambda1 method {method!r}")
    kind = TRUNCATED_ROAD_FIELD if method == "truncated" else PERIODIC_HALF_STRIP
    return truncation_sweep(kind, numerics.sizes, params, reaction, numerics.hx, numerics.hy,
                            tol=numerics.tol, maxiter=numerics.maxiter)


def cell_eigenvalue(params, reaction, numerics):
    n = int(round(params.ell / numerics.hx))
    return periodic_cell_eigen(params, reaction, max(n, 8), tol=numerics.tol, maxiter=numerics.maxiter)


def _require_c0(params, what):
    if params.c != 0.0:
        raise ParameterDomainError(f"{what} is only established for c = 0 (got c = {params.c})")


@dataclass
class DichotomyVerdict:
    lambda1_estimate: float
    sign: str
    predicted: str
    dynamics_outcome: Optional[str]
    agreement: Optional[bool]
    sweep: TruncationSweep = field(repr=False, default=None)
    outcome: Optional[dyn.SteadyOutcome] = field(repr=False, default=None)

    @property
    def confirmed(self):
        return self.agreement is True

    def to_dict(self):
        return {
            "lambda1_estimate": self.lambda1_estimate,
            "sign": self.sign,
            "predicted": self.predicted,
            "dynamics_outcome": self.dynamics_outcome,
            "agreement": self.agreement,
            "status": "confirmed" if self.confirmed else ("contradicted" if self.agreement is False else "not contradicted"),
            "sweep": [list(p) for p in self.sweep.points] if self.sweep else None,
            "sweep_monotone": self.sweep.monotone if self.sweep else None,
        }


def classify(params: ModelParams, reaction: ReactionSpec, numerics: Numerics, run_dynamics: bool = True,
             method: str = None) -> DichotomyVerdict:
    """Persistence/extinction prediction from the sign of the road-field eigenvalue.

    The optional dynamics start from a bump of height ``M/2`` over one
    period cell; agreement is asserted only when both the sign and the
    dynamics are decided.
    """
    _require_c0(params, "the persistence/extinction dichotomy")
    sweep = estimate_lambda1(params, reaction, numerics, method or numerics.lambda1_method or "truncated")
    lam = sweep.limit_estimate
    sign = classify_sign(lam, numerics.delta_sign)
    predicted = _prediction(sign)
    outcome = None
    kind = None
    agreement = None
    if run_dynamics:
        geom = dyn.dynamic_geometry(params, numerics.hx, numerics.hy, numerics.dyn_height, numerics.periods_k)
        outcome = dyn.evolve(dyn.bump_datum(geom, reaction.M), params, reaction, numerics.dt, numerics.t_max)
        kind = outcome.kind
        if predicted != UNKNOWN and kind != dyn.UNDECIDED:
            expected = dyn.CONVERGED_POSITIVE if predicted == PERSISTENCE else dyn.DECAYED_TO_ZERO
            agreement = kind == expected
    return DichotomyVerdict(lam, sign, predicted, kind, agreement, sweep, outcome)


@dataclass
class RoadEffectReport:
    lambda_with_road: float
    lambda_without_road: float
    sign_with: str
    sign_without: str
    signs_agree: Optional[bool]
    ordering_holds: bool
    ordering_tol: float
    below_mu: bool
    sweep: TruncationSweep = field(repr=False, default=None)

    def to_dict(self):
        return {
            "lambda_with_road": self.lambda_with_road,
            "lambda_without_road": self.lambda_without_road,
            "sign_with": self.sign_with,
            "sign_without": self.sign_without,
            "signs_agree": self.signs_agree,
            "ordering_holds": self.ordering_holds,
            "ordering_tol": self.ordering_tol,
            "below_mu": self.below_mu,
        }


def road_effect(params: ModelParams, reaction: ReactionSpec, numerics: Numerics, method: str = None) -> RoadEffectReport:
    """Compare the road-field eigenvalue with the periodic cell eigenvalue of the roadless problem.

    The ordering ``lambda_without >= lambda_with`` is tested with tolerance
    ``max(1e-6, last sweep increment)``, since the road-field value is a
    limit estimate approached from above.
    """
    _require_c0(params, "the road-effect comparison")
    sweep = estimate_lambda1(params, reaction, numerics, method or numerics.lambda1_method or "truncated")
    lam_with = sweep.limit_estimate
    lam_without = cell_eigenvalue(params, reaction, numerics).lam
    s_with = classify_sign(lam_with, numerics.delta_sign)
    s_without = classify_sign(lam_without, numerics.delta_sign)
    agree = None if INDETERMINATE in (s_with, s_without) else s_with == s_without
    tol = max(ORDERING_TOL, sweep.last_increment)
    return RoadEffectReport(lam_with, lam_without, s_with, s_without, agree, lam_without >= lam_with - tol, tol,
                            lam_with <= params.mu + ORDERING_TOL, sweep)


@dataclass
class AmplitudeReport:
    rows: List[tuple]
    expect_change: bool
    sign_changes: int
    transition_observed: bool

    def to_dict(self):
        return {
            "rows": [{"alpha": a, "lambda1": lam, "sign": s} for a, lam, s in self.rows],
            "expect_change": self.expect_change,
            "sign_changes": self.sign_changes,
            "transition_observed": self.transition_observed,
        }


def amplitude_sweep(params: ModelParams, base: ReactionSpec, alphas: Sequence[float], numerics: Numerics,
                    method: str = None) -> AmplitudeReport:
    """Sign of the road-field eigenvalue for ``alpha*f`` over increasing ``alpha``.

    Requires a negative period mean of ``f_v(x, 0)``. A change from
    positive to negative is expected only when ``f_v(x, 0)`` is somewhere
    positive; the observed pattern is reported either way.
    """
    _require_c0(params, "the amplitude sweep")
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas) or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ParameterDomainError("alphas must be positive and strictly increasing")
    unit = base.with_alpha(1.0)
    if unit.mean_linearization() >= 0:
        raise ParameterDomainError("amplitude sweep needs a negative period mean of f_v(x, 0)")
    expect = unit.max_linearization() > 0
    method = method or numerics.lambda1_method or "periodic"
    rows = []
    for a in alphas:
        lam = estimate_lambda1(params, unit.with_alpha(a), numerics, method).limit_estimate
        rows.append((a, lam, classify_sign(lam, numerics.delta_sign)))
    signs = [s for _, _, s in rows if s != INDETERMINATE]
    changes = sum(1 for s, t in zip(signs, signs[1:]) if s != t)
    observed = bool(signs) and signs[0] == NONNEGATIVE and signs[-1] == NEGATIVE
    return AmplitudeReport(rows, expect, changes, observed)


@dataclass
class OrderingCheck:
    name: str
    size: float
    lhs: float
    rhs: float
    tol: float

    @property
    def passed(self):
        return self.lhs <= self.rhs + self.tol

    def to_dict(self):
        return {"name": self.name, "size": self.size, "lhs": self.lhs, "rhs": self.rhs, "tol": self.tol,
                "passed": self.passed}


@dataclass
class OrderingReport:
    checks: List[OrderingCheck]
    limits: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks], "limits": self.limits}


def ordering_audit(params: ModelParams, reaction: ReactionSpec, sizes: Sequence[float], numerics: Numerics,
                   tol: float = AUDIT_TOL) -> OrderingReport:
    """Audit the eigenvalue inequalities at one matched discretization.

    For each ``R`` in ``sizes``:

    * coupled ``(-3R, 3R) x (0, 3R)`` <= Dirichlet rectangle ``(-R, R) x (0, 2R)``;
    * periodic cell <= periodic strip of half-height ``R`` <= the same rectangle.

    At ``c = 0`` the cell value and the strip and rectangle sweep limits must
    also agree within ``max(1e-3, 2*largest last increment)``. Every check is
    stored as ``lhs <= rhs + tol``.
    """
    hx, hy = numerics.hx, numerics.hy
    opts = dict(tol=numerics.tol, maxiter=numerics.maxiter)
    sizes = [float(s) for s in sizes]
    cell = cell_eigenvalue(params, reaction, numerics).lam
    checks = []
    rect_vals, strip_vals = [], []
    for R in sizes:
        rect = principal_eigenpair(assemble_field_operator(Geometry.dirichlet_rect(R, 2 * R, hx, hy), params, reaction),
                                   **opts).lam
        big = principal_eigenpair(
            assemble_coupled_operator(Geometry.truncated_road_field(3 * R, 3 * R, hx, hy), params, reaction), **opts).lam
        strip = strip_eigen(R, params, reaction, hx, hy, **opts).lam
        rect_vals.append(rect)
        strip_vals.append(strip)
        checks.append(OrderingCheck("coupled(3R) <= rect(R)", R, big, rect, tol))
        checks.append(OrderingCheck("cell <= strip(R)", R, cell, strip, tol))
        checks.append(OrderingCheck("strip(R) <= rect(R)", R, strip, rect, tol))
    limits = {"cell": cell}
    if params.c == 0.0 and len(sizes) >= 3:
        strip_sw = truncation_sweep(PERIODIC_STRIP, sizes, params, reaction, hx, hy, **opts)
        rect_sw = truncation_sweep(DIRICHLET_RECT, sizes, params, reaction, hx, hy, height_ratio=2.0, **opts)
        agree_tol = max(1e-3, 2.0 * max(strip_sw.last_increment, rect_sw.last_increment))
        limits.update(strip=strip_sw.limit_estimate, rect=rect_sw.limit_estimate, tol=agree_tol)
        vals = [cell, strip_sw.limit_estimate, rect_sw.limit_estimate]
        spread = max(vals) - min(vals)
        checks.append(OrderingCheck("limit spread (cell, strip, rect)", sizes[-1], spread, 0.0, agree_tol))
    return OrderingReport(checks, limits)


def load_fixtures():
    """The versioned regression matrix: list of ``(name, ModelParams, ReactionSpec)``."""
    text = resources.files("roadfield").joinpath("data/fixtures.json").read_text(encoding="utf-8")
    data = json.loads(text)
    out = []
    for item in data["fixtures"]:
        params = ModelParams(**item["model"])
        rx = dict(item["reaction"])
        kind = rx.pop("kind")
        out.append((item["name"], params, ReactionSpec(kind, ell=params.ell, **rx)))
    return out


def is_finite(x):
    return x is not None and math.isfinite(x)
