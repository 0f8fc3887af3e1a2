"""Principal eigenpairs, the discrete Rayleigh quotient, truncation sweeps and a dense oracle."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, GeometryError, ParameterDomainError
from .grids import (
    DIRICHLET_RECT,
    NEUMANN_RECT,
    PERIODIC_HALF_STRIP,
    PERIODIC_STRIP,
    TRUNCATED_ROAD_FIELD,
    DiscreteOperator,
    Geometry,
    assemble_coupled_operator,
    assemble_field_operator,
    gershgorin_lower,
)
from .model import ModelParams, ReactionSpec

log = logging.getLogger(__name__)

DENSE_MAX_ORDER = 4096
MONOTONE_TOL = 1e-9
# Entries below this fraction of the sup norm are ignored when bracketing the
# eigenvalue from the componentwise ratios; their relative accuracy is poor.
_BRACKET_FLOOR = 1e-6
_MAX_RESHIFTS = 4
# Largest increment ratio for which the geometric extrapolation is trusted.
_MAX_RATIO = 0.5


@dataclass
class EigenResult:
    """Principal eigenpair, normalized so the stacked vector has sup norm 1 and is positive."""

    lam: float
    vec_road: np.ndarray
    vec_field: np.ndarray
    residual: float
    iters: int
    shift: float = float("nan")

    @property
    def vector(self):
        return np.concatenate([self.vec_road, self.vec_field])

    @property
    def min_entry(self):
        return float(np.min(self.vector))


@dataclass
class TruncationSweep:
    """Eigenvalues over a growing family of truncated domains at fixed spacing."""

    kind: str
    points: List[tuple]
    results: List[EigenResult] = field(repr=False, default_factory=list)
    limit_estimate: float = float("nan")
    monotone: bool = True
    diagnostic: str = ""

    @property
    def sizes(self):
        return [p[0] for p in self.points]

    @property
    def lambdas(self):
        return [p[1] for p in self.points]

    @property
    def last_increment(self):
        lam = self.lambdas
        return abs(lam[-1] - lam[-2]) if len(lam) > 1 else float("nan")

    def to_rows(self):
        return [(s, lam, res.residual, res.iters) for (s, lam), res in zip(self.points, self.results)]


def _factor(A, sigma):
    n = A.shape[0]
    return spla.splu((A - sigma * sp.identity(n, format="csc")).tocsc())


def _estimate(A, w, weights, symmetric):
    Aw = A @ w
    if symmetric:
        lam = float(np.dot(w, weights * Aw) / np.dot(w, weights * w))
    else:
        lam = float(np.dot(w, Aw) / np.dot(w, w))
    return lam, Aw


def principal_eigenpair(op: DiscreteOperator, tol: float = 1e-10, maxiter: int = 2000,
                        x0=None) -> EigenResult:
    """Smallest-real-part eigenpair of ``op`` with a positive eigenvector.

    Shifted inverse power iteration. The first shift is the Gershgorin lower
    bound minus one; ``A - sigma*I`` is then a nonsingular M-matrix whose
    inverse is positive, so the iterates stay positive. Once the
    componentwise ratios ``(A w)_i / w_i`` bracket the eigenvalue well above
    the shift, the shift is moved up to just below the bracket's lower end
    and the matrix refactored (at most a few times).

    Converged when the eigenvalue estimate changes by at most
    ``tol*max(1, |lam|)`` between iterations and the residual
    ``|A v - lam v|_inf`` (``|v|_inf = 1``) is at most ``tol*max(1, |A|_inf)``.
    """
    if tol <= 0:
        raise ParameterDomainError("tol must be positive")
    A = op.matrix.tocsr()
    n = A.shape[0]
    symmetric = op.params.c == 0.0
    weights = op.weights
    a_norm = float(abs(A).sum(axis=1).max())
    res_tol = tol * max(1.0, a_norm)

    sigma = gershgorin_lower(A) - 1.0
    try:
        lu = _factor(A, sigma)
    except RuntimeError:
        sigma -= 1.0
        try:
            lu = _factor(A, sigma)
        except RuntimeError as exc:
            raise ConvergenceError(f"shifted matrix singular at sigma={sigma}: {exc}") from None

    v = np.ones(n) if x0 is None else np.abs(np.asarray(x0, dtype=float)) + 1e-300
    lam_old = math.inf
    reshifts = 0
    res = math.inf
    for it in range(1, maxiter + 1):
        w = lu.solve(v)
        w /= w[np.argmax(np.abs(w))]
        lam, Aw = _estimate(A, w, weights, symmetric)
        res = float(np.max(np.abs(Aw - lam * w)))
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)) and res <= res_tol:
            return EigenResult(lam, w[: op.dim_road].copy(), w[op.dim_road:].copy(), res, it, sigma)
        lam_old = lam
        v = w
        if reshifts < _MAX_RESHIFTS:
            mask = w > _BRACKET_FLOOR
            if mask.any():
                ratios = Aw[mask] / w[mask]
                lo, hi = float(ratios.min()), float(ratios.max())
                gap = lam - sigma
                if lo > sigma and (hi - lo) < 0.25 * gap:
                    new_sigma = lo - max(hi - lo, 1e-7 * max(1.0, abs(lam)))
                    if new_sigma > sigma + 0.1 * gap:
                        try:
                            lu = _factor(A, new_sigma)
                            sigma = new_sigma
                            reshifts += 1
                            log.debug("reshift to %.12g at iteration %d", sigma, it)
                        except RuntimeError:
                            reshifts = _MAX_RESHIFTS
    raise ConvergenceError(f"inverse iteration did not converge in {maxiter} iterations (residual {res:.3e})", res)


def dense_oracle(op: DiscreteOperator) -> np.ndarray:
    """All eigenvalues (real parts, ascending) of ``op`` by dense LAPACK routines.

    At ``c = 0`` the weighted-symmetric matrix is symmetrized as
    ``W^{1/2} A W^{-1/2}`` and handed to the symmetric tridiagonal QR solver;
    otherwise the Hessenberg QR algorithm on ``A`` itself is used.
    """
    if op.order > DENSE_MAX_ORDER:
        raise ParameterDomainError(f"dense oracle limited to order {DENSE_MAX_ORDER}, got {op.order}")
    A = op.matrix.toarray()
    if op.params.c == 0.0:
        s = np.sqrt(op.weights)
        S = (s[:, None] * A) / s[None, :]
        S = 0.5 * (S + S.T)
        return np.sort(scipy.linalg.eigvalsh(S))
    return np.sort(scipy.linalg.eigvals(A).real)


def _field_energy(op, v2):
    """Dirichlet energy and potential terms of the field part; ``v2`` is shaped (ny, nx)."""
    g, p = op.geometry, op.params
    rw = g.row_weights()[:, None]
    cell = g.hx * g.hy
    if g.periodic_x:
        dx = np.roll(v2, -1, axis=1) - v2
    else:
        dx = np.diff(np.pad(v2, ((0, 0), (1, 1))), axis=1)
    dx2 = dx**2 * rw
    if g.bottom_row_at_zero:
        dy = np.diff(np.pad(v2, ((0, 1), (0, 0))), axis=0)
    else:
        dy = np.diff(np.pad(v2, ((1, 1), (0, 0))), axis=0)
    grad = p.d * (dx2.sum() / g.hx**2 + (dy**2).sum() / g.hy**2) * cell
    pot = float(np.sum(op.a_field[None, :] * v2**2 * rw) * cell)
    mass = float(np.sum(v2**2 * rw) * cell)
    return float(grad), pot, mass


def rayleigh_quotient(vec_road, vec_field, op: DiscreteOperator) -> float:
    """Discrete ``Q_R(u, v)`` built from edge differences and trapezoidal weights.

    For coupled operators::

        Q = [mu*sum D|u'|^2 + nu*sum(d|grad v|^2 - a v^2) + sum(mu*u - nu*v(.,0))^2]
            / [mu*sum u^2 + nu*sum v^2]

    and for field-only operators ``Q = sum(d|grad v|^2 - a v^2) / sum v^2``.
    It coincides with ``<v, W A v> / <v, W v>``; only defined for ``c = 0``.
    """
    if op.params.c != 0.0:
        raise ParameterDomainError("Rayleigh quotient characterization needs c = 0")
    g, p = op.geometry, op.params
    u = np.asarray(vec_road, dtype=float)
    v = np.asarray(vec_field, dtype=float)
    if u.shape != (op.dim_road,) or v.shape != (op.dim_field,):
        raise ValueError("vectors do not conform to the operator")
    if g.ny == 0:
        dx = np.roll(v, -1) - v
        num = p.d * np.sum(dx**2) / g.hx - np.sum(op.a_field * v**2) * g.hx
        den = np.sum(v**2) * g.hx
    else:
        grad, pot, mass = _field_energy(op, v.reshape(g.ny, g.nx))
        if op.coupled:
            du = np.roll(u, -1) - u if g.periodic_x else np.diff(np.pad(u, 1))
            road = p.D * np.sum(du**2) / g.hx
            exchange = np.sum((p.mu * u - p.nu * v[: g.nx]) ** 2) * g.hx
            num = p.mu * road + p.nu * (grad - pot) + exchange
            den = p.mu * np.sum(u**2) * g.hx + p.nu * mass
        else:
            num, den = grad - pot, mass
    if den == 0.0:
        raise ZeroDivisionError("Rayleigh quotient of the zero pair")
    return float(num / den)


# -- geometry families for sweeps ------------------------------------------

def family_geometry(kind: str, size: float, params: ModelParams, hx: float, hy: float,
                    height_ratio: float = 1.0) -> Geometry:
    """Member of a truncation family at ``size`` (half-width ``R`` or height ``r``)."""
    if kind == TRUNCATED_ROAD_FIELD:
        return Geometry.truncated_road_field(size, height_ratio * size, hx, hy)
    if kind == DIRICHLET_RECT:
        return Geometry.dirichlet_rect(size, height_ratio * size, hx, hy)
    if kind == NEUMANN_RECT:
        return Geometry.neumann_rect(size, height_ratio * size, hx, hy)
    if kind == PERIODIC_STRIP:
        return Geometry.periodic_strip(size, params.ell, hx, hy)
    if kind == PERIODIC_HALF_STRIP:
        return Geometry.periodic_half_strip(size, params.ell, hx, hy)
    raise GeometryError(f"no truncation family for {kind}")


def assemble(geom: Geometry, params: ModelParams, reaction: ReactionSpec) -> DiscreteOperator:
    """Coupled assembly for road geometries, field assembly otherwise."""
    if geom.kind in (TRUNCATED_ROAD_FIELD, PERIODIC_HALF_STRIP):
        return assemble_coupled_operator(geom, params, reaction)
    return assemble_field_operator(geom, params, reaction)


def worker_count() -> int:
    env = os.environ.get("ROADFIELD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer ROADFIELD_THREADS=%r", env)
    return os.cpu_count() or 1


def map_jobs(fn: Callable, keys: Sequence):
    """Run ``fn`` over ``keys`` on a thread pool; results come back in key order."""
    keys = list(keys)
    workers = min(worker_count(), len(keys))
    if workers <= 1:
        return [fn(k) for k in keys]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, keys))


def extrapolate_limit(lambdas: Sequence[float]) -> float:
    """Limit of ``lam(s) = lam_inf + C*q^k`` fitted to the last three values.

    Used only when the two last increments have the same sign and their
    ratio is at most ``_MAX_RATIO``; otherwise the last value (an upper
    bracket for a nonincreasing sweep) is returned. Ratios close to 1 mean
    the sweep is still pre-asymptotic and the fit overshoots.
    """
    if len(lambdas) < 3:
        return float(lambdas[-1])
    l0, l1, l2 = lambdas[-3:]
    d1, d2 = l1 - l0, l2 - l1
    if d1 == 0.0 or d2 == 0.0 or (d1 > 0) != (d2 > 0) or abs(d2) > _MAX_RATIO * abs(d1):
        return float(l2)
    q = d2 / d1
    return float(l2 + d2 * q / (1.0 - q))


def truncation_sweep(kind: str, sizes: Sequence[float], params: ModelParams, reaction: ReactionSpec,
                     hx: float, hy: float = None, tol: float = 1e-10, maxiter: int = 2000,
                     height_ratio: float = 1.0) -> TruncationSweep:
    """Principal eigenvalue over a nested family of domains at fixed spacing.

    Nodes of each member are a subset of the next one's, so in exact
    arithmetic the sequence is nonincreasing; violations beyond 1e-9 are
    flagged in ``monotone``/``diagnostic`` rather than raised.
    """
    hy = hx if hy is None else hy
    sizes = [float(s) for s in sizes]
    if len(sizes) < 3 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ParameterDomainError("sizes must be strictly increasing with at least 3 entries")

    def solve(size):
        geom = family_geometry(kind, size, params, hx, hy, height_ratio)
        return principal_eigenpair(assemble(geom, params, reaction), tol=tol, maxiter=maxiter)

    results = map_jobs(solve, sizes)
    lambdas = [r.lam for r in results]
    bad = [(sizes[k], sizes[k + 1]) for k in range(len(sizes) - 1) if lambdas[k + 1] > lambdas[k] + MONOTONE_TOL]
    diagnostic = ""
    if bad:
        diagnostic = "non-monotone between sizes " + ", ".join(f"{a:g}->{b:g}" for a, b in bad)
        log.warning("%s sweep: %s", kind, diagnostic)
    return TruncationSweep(kind, list(zip(sizes, lambdas)), results, extrapolate_limit(lambdas), not bad, diagnostic)


# -- named eigenproblems ----------------------------------------------------

def periodic_cell_eigen(params: ModelParams, reaction: ReactionSpec, n: int, tol: float = 1e-12,
                        maxiter: int = 2000) -> EigenResult:
    """Periodic principal eigenpair of ``-d psi'' - c psi' - a(x) psi`` on one period (``n`` nodes)."""
    if n < 8:
        raise ParameterDomainError("periodic cell needs n >= 8")
    geom = Geometry.periodic_cell(params.ell, n)
    return principal_eigenpair(assemble_field_operator(geom, params, reaction), tol=tol, maxiter=maxiter)


def strip_eigen(r: float, params: ModelParams, reaction: ReactionSpec, hx: float, hy: float = None,
                tol: float = 1e-10, maxiter: int = 2000) -> EigenResult:
    """Principal eigenpair on the x-periodic strip ``(-r, r)`` with Dirichlet top and bottom."""
    if r <= 0:
        raise ParameterDomainError("r must be positive")
    geom = Geometry.periodic_strip(r, params.ell, hx, hx if hy is None else hy)
    return principal_eigenpair(assemble_field_operator(geom, params, reaction), tol=tol, maxiter=maxiter)


def periodic_roadfield_eigen(r: float, params: ModelParams, reaction: ReactionSpec, hx: float, hy: float = None,
                             tol: float = 1e-10, maxiter: int = 2000) -> EigenResult:
    """Principal eigenpair of the road-field operator on the x-periodic half-strip of height ``r``."""
    if r <= 0:
        raise ParameterDomainError("r must be positive")
    geom = Geometry.periodic_half_strip(r, params.ell, hx, hx if hy is None else hy)
    return principal_eigenpair(assemble_coupled_operator(geom, params, reaction), tol=tol, maxiter=maxiter)
