"""Model parameters, the reaction-term family and checks of its standing hypotheses.

Sign conventions used everywhere in the package:

* the field operator is ``L(psi) = d*Lap(psi) + c*psi_x + a(x)*psi`` with
  ``a(x) = f_v(x, 0)``; discrete operators store ``-L``;
* the road operator is ``R(phi, psi) = D*phi'' + c*phi' + nu*psi|_{y=0} - mu*phi``;
* the exchange condition is ``-d*psi_y + nu*psi - mu*phi = 0`` at ``y = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterDomainError

KINDS = ("LogisticPeriodic", "Homogeneous", "Custom")

# Adopted sign of f_v(x, 0) inside the field operator; recorded in every ValidationReport.
OPERATOR_CONVENTION = "L(psi) = d*Lap(psi) + c*psi_x + f_v(x,0)*psi (plus sign on the linearization)"

_EXPR_NAMESPACE = {
    "pi": math.pi,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}


def _finite(name, value):
    if not math.isfinite(value):
        raise ParameterDomainError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the road-field system.

    Parameters
    ----------
    D : float
        Diffusivity on the road.
    d : float
        Diffusivity in the field.
    nu : float
        Field-to-road exchange rate.
    mu : float
        Road-to-field exchange rate.
    c : float
        Advection speed, ``c >= 0``.
    ell : float
        Spatial period of the medium.
    """

    D: float
    d: float
    nu: float
    mu: float
    c: float = 0.0
    ell: float = 1.0

    def __post_init__(self):
        for name in ("D", "d", "nu", "mu", "c", "ell"):
            value = float(getattr(self, name))
            _finite(name, value)
            object.__setattr__(self, name, value)
        for name in ("D", "d", "nu", "mu", "ell"):
            if getattr(self, name) <= 0:
                raise ParameterDomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.c < 0:
            raise ParameterDomainError(f"c must be non-negative, got {self.c}")

    def to_dict(self):
        return {"D": self.D, "d": self.d, "nu": self.nu, "mu": self.mu, "c": self.c, "ell": self.ell}


@dataclass(frozen=True)
class ReactionSpec:
    """Reaction term ``f(x, v)`` and its linearization at ``v = 0``.

    ``LogisticPeriodic`` is ``f = alpha*v*(a0 + a1*cos(2*pi*x/ell) - v)``;
    ``Homogeneous`` is the same with ``a1 = 0``. ``Custom`` carries either
    tabulated samples of ``a(x)`` over one period (then ``f`` is logistic in
    that ``a``), or a numpy expression ``expr`` in ``x``, ``v`` and ``ell``
    for ``f`` itself, or both. The amplitude ``alpha`` always multiplies the
    whole of ``f``, so the linearization is ``alpha*a(x)``.
    """

    kind: str
    a0: float = 0.0
    a1: float = 0.0
    alpha: float = 1.0
    M: float = 1.0
    ell: float = 1.0
    a_samples: Optional[tuple] = None
    expr: Optional[str] = None
    _code: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterDomainError(f"unknown reaction kind {self.kind!r}; expected one of {KINDS}")
        for name in ("a0", "a1", "alpha", "M", "ell"):
            value = float(getattr(self, name))
            _finite(name, value)
            object.__setattr__(self, name, value)
        for name in ("alpha", "M", "ell"):
            if getattr(self, name) <= 0:
                raise ParameterDomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kind == "Homogeneous" and self.a1 != 0.0:
            raise ParameterDomainError("Homogeneous reaction takes no a1")
        if self.kind == "Custom":
            if self.a_samples is None and self.expr is None:
                raise ParameterDomainError("Custom reaction needs a_samples, expr, or both")
            if self.a_samples is not None:
                samples = tuple(float(s) for s in self.a_samples)
                if len(samples) < 2 or not all(math.isfinite(s) for s in samples):
                    raise ParameterDomainError("a_samples needs at least two finite values")
                object.__setattr__(self, "a_samples", samples)
            if self.expr is not None:
                try:
                    code = compile(self.expr, "<reaction expr>", "eval")
                except SyntaxError as exc:
                    raise ParameterDomainError(f"cannot parse reaction expr: {exc}") from None
                allowed = set(_EXPR_NAMESPACE) | {"x", "v", "ell"}
                unknown = set(code.co_names) - allowed
                if unknown:
                    raise ParameterDomainError(f"reaction expr uses unknown names {sorted(unknown)}")
                object.__setattr__(self, "_code", code)
        elif self.a_samples is not None or self.expr is not None:
            raise ParameterDomainError(f"{self.kind} reaction takes no a_samples/expr")

    @classmethod
    def homogeneous(cls, a0, M=1.0, alpha=1.0, ell=1.0):
        return cls("Homogeneous", a0=a0, M=M, alpha=alpha, ell=ell)

    @classmethod
    def logistic_periodic(cls, a0, a1, M=1.0, alpha=1.0, ell=1.0):
        return cls("LogisticPeriodic", a0=a0, a1=a1, M=M, alpha=alpha, ell=ell)

    def with_alpha(self, alpha):
        return ReactionSpec(self.kind, a0=self.a0, a1=self.a1, alpha=alpha, M=self.M, ell=self.ell,
                            a_samples=self.a_samples, expr=self.expr)

    def _base_a(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "Homogeneous":
            return np.full_like(x, self.a0)
        if self.kind == "LogisticPeriodic":
            return self.a0 + self.a1 * np.cos(2.0 * np.pi * x / self.ell)
        if self.a_samples is not None:
            n = len(self.a_samples)
            xp = np.arange(n) * (self.ell / n)
            return np.interp(np.mod(x, self.ell), xp, self.a_samples, period=self.ell)
        # f(x, 0) is not assumed zero here; the one-sided formula is exact for quadratics.
        h = 1e-6
        f0, f1, f2 = (self._base_f(x, np.full_like(x, s)) for s in (0.0, h, 2 * h))
        return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)

    def _base_f(self, x, v):
        if self._code is not None:
            env = dict(_EXPR_NAMESPACE, x=x, v=v, ell=self.ell)
            out = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - names checked in __post_init__
            return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, v).shape).copy()
        return v * (self._base_a(x) - v)

    def linearization(self, x):
        """Return ``f_v(x, 0)``, i.e. ``alpha*a(x)`` (vectorized in ``x``)."""
        return self.alpha * self._base_a(x)

    def f(self, x, v):
        """Evaluate ``f(x, v)``; broadcasts ``x`` against ``v``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return self.alpha * self._base_f(x, v)

    def lipschitz(self, vmax, nx=64, nv=65):
        """Sampled bound on ``|f_v|`` over one period and ``0 <= v <= vmax``."""
        x = np.linspace(0.0, self.ell, nx, endpoint=False)[:, None]
        v = np.linspace(0.0, vmax, nv)[None, :]
        if self.kind != "Custom" or self.expr is None:
            # |f_v| = alpha*|a - 2v| is affine in v, so its maximum is at an endpoint.
            a = self._base_a(x)
            return float(self.alpha * max(np.max(np.abs(a)), np.max(np.abs(a - 2.0 * vmax))))
        vals = self.f(x, v)
        return float(np.max(np.abs(np.diff(vals, axis=1)) / (v[0, 1] - v[0, 0])))

    def mean_linearization(self, n=4096):
        """Period average of ``f_v(x, 0)`` by the (spectrally accurate) rectangle rule."""
        x = np.arange(n) * (self.ell / n)
        return float(np.mean(self.linearization(x)))

    def max_linearization(self, n=4096):
        x = np.arange(n) * (self.ell / n)
        return float(np.max(self.linearization(x)))

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind != "Custom" or self.a0 != 0.0:
            out["a0"] = self.a0
        if self.kind == "LogisticPeriodic" or self.a1 != 0.0:
            out["a1"] = self.a1
        if self.a_samples is not None:
            out["a_samples"] = list(self.a_samples)
        if self.expr is not None:
            out["expr"] = self.expr
        out["alpha"] = self.alpha
        out["M"] = self.M
        return out


def linearization(reaction: ReactionSpec, x):
    """``f_v(x, 0)`` of ``reaction`` at ``x``; scalar in, float out."""
    out = reaction.linearization(x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ValidationReport:
    """Outcome of the sampled hypothesis checks.

    ``checks`` maps a hypothesis name to pass/fail; ``details`` holds the
    worst sampled violation for each failing check.
    """

    checks: dict
    details: dict
    samples: int
    convention: str = OPERATOR_CONVENTION

    @property
    def passed(self):
        return all(self.checks.values())

    def to_dict(self):
        return {"passed": self.passed, "checks": dict(self.checks), "details": dict(self.details),
                "samples": self.samples, "convention": self.convention}


def validate_hypotheses(reaction: ReactionSpec, samples: int = 64) -> ValidationReport:
    """Check zero equilibrium, saturation, KPP monotonicity and periodicity on a lattice.

    The lattice is ``samples`` points ``x_k = k*ell/samples`` in ``[0, ell)``
    crossed with ``samples`` points ``v_j = 2*M*j/samples``, ``j = 1..samples``.
    """
    if samples < 16:
        raise ParameterDomainError(f"samples must be >= 16, got {samples}")
    if reaction.M <= 0 or reaction.alpha <= 0:
        raise ParameterDomainError("M and alpha must be positive")
    ell, M = reaction.ell, reaction.M
    x = (np.arange(samples) * (ell / samples))[:, None]
    v = (2.0 * M * np.arange(1, samples + 1) / samples)[None, :]
    with np.errstate(all="ignore"):
        f0 = reaction.f(x[:, 0], 0.0)
        fv = reaction.f(x, v)
        fshift = reaction.f(x + ell, v)
    checks, details = {}, {}

    scale = max(1.0, float(np.max(np.abs(fv))))
    err0 = float(np.max(np.abs(f0)))
    checks["zero_equilibrium"] = bool(err0 <= 1e-12 * scale)
    if not checks["zero_equilibrium"]:
        details["zero_equilibrium"] = f"max |f(x,0)| = {err0:.3e}"

    above = v[0] > M
    worst = float(np.max(fv[:, above])) if above.any() else -math.inf
    checks["saturation"] = bool(worst < 0.0)
    if not checks["saturation"]:
        details["saturation"] = f"max f(x,v) for v>M is {worst:.3e}"

    ratio = fv / v
    incr = np.diff(ratio, axis=1)
    worst = float(np.max(incr))
    checks["kpp"] = bool(worst < 0.0)
    if not checks["kpp"]:
        details["kpp"] = f"f(x,s)/s not strictly decreasing: max increment {worst:.3e}"

    err = float(np.max(np.abs(fshift - fv)))
    checks["periodicity"] = bool(err <= 1e-10 * scale)
    if not checks["periodicity"]:
        details["periodicity"] = f"max |f(x+ell,v) - f(x,v)| = {err:.3e}"

    if not np.isfinite(fv).all():
        checks["kpp"] = False
        details["kpp"] = "non-finite values of f on the lattice"
    return ValidationReport(checks=checks, details=details, samples=samples)
