"""Time integration of the road-field system and its roadless counterpart.

The dynamic domain is ``k`` periods wide and periodic in x, truncated in y at
``H_dyn`` with a Dirichlet far field. Each step is backward Euler on the
linear diffusion/exchange operator with the reaction taken explicitly::

    (I + dt*A) w_new = w_old + dt*[0; f(x, v_old)]

``(I + dt*A)^{-1}`` is entrywise nonnegative and ``v -> v + dt*f(x, v)`` is
nondecreasing when ``dt*Lip(f) <= 1``, so the scheme is monotone and the
discrete comparison principle holds exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import principal_eigenpair
from .errors import ConvergenceError, GeometryError, NoSubsolutionError, ParameterDomainError, StabilityError
from .grids import (
    PERIODIC_HALF_STRIP,
    Geometry,
    assemble_coupled_operator,
    assemble_field_operator,
    embed_indices,
)
from .model import ModelParams, ReactionSpec

log = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-12
MAX_HALVINGS = 4
DT_LIP_BOUND = 0.5

CONVERGED_POSITIVE = "ConvergedPositive"
DECAYED_TO_ZERO = "DecayedToZero"
UNDECIDED = "Undecided"


@dataclass
class State:
    """Road values ``u`` (length nx, empty without a road) and field values ``v`` shaped (ny, nx)."""

    t: float
    u: np.ndarray
    v: np.ndarray
    geometry: Geometry

    @property
    def has_road(self):
        return self.u.size > 0

    def stacked(self):
        return np.concatenate([self.u, self.v.ravel()])

    def sup(self):
        return max(float(np.max(self.u, initial=0.0)), float(np.max(self.v)))

    def copy(self, t=None):
        return State(self.t if t is None else t, self.u.copy(), self.v.copy(), self.geometry)


@dataclass
class SteadyOutcome:
    """Classified long-time behaviour of one trajectory.

    ``sup_history`` rows are ``(t, sup_u, sup_v, min_u, min_v, deriv_residual)``.
    """

    kind: str
    final: State
    t_at_threshold: Optional[float] = None
    sup_history: List[tuple] = field(default_factory=list)
    states: List[State] = field(default_factory=list, repr=False)
    projections: int = 0
    snapshots: List[State] = field(default_factory=list, repr=False)

    @property
    def steady(self):
        return self.final if self.kind == CONVERGED_POSITIVE else None


@dataclass
class ComparisonReport:
    max_violation: float
    scale: float
    passed: bool
    t_worst: float


def dynamic_geometry(params: ModelParams, hx: float, hy: float = None, height: float = None,
                     periods: int = 1) -> Geometry:
    """Periodic half-strip used for dynamics; ``height`` defaults to ``8*ell``."""
    height = 8.0 * params.ell if height is None else height
    return Geometry.periodic_half_strip(height, params.ell, hx, hx if hy is None else hy, periods=periods)


@lru_cache(maxsize=16)
def _linear_part(geom: Geometry, params: ModelParams, road: bool):
    if geom.kind != PERIODIC_HALF_STRIP:
        raise GeometryError(f"dynamics run on PeriodicHalfStrip grids, got {geom.kind}")
    if road:
        return assemble_coupled_operator(geom, params, None).matrix.tocsc()
    return assemble_field_operator(geom, params, None).matrix.tocsc()


@lru_cache(maxsize=16)
def _implicit_solver(geom: Geometry, params: ModelParams, road: bool, dt: float):
    A = _linear_part(geom, params, road)
    return spla.factorized((sp.identity(A.shape[0], format="csc") + dt * A).tocsc())


def _x_field(geom):
    return geom.x_nodes()[None, :]


def _check_grid(state, params):
    g = state.geometry
    if state.v.shape != (g.ny, g.nx) or (state.has_road and state.u.shape != (g.nx,)):
        raise GeometryError("state arrays do not match geometry")
    if not math.isclose(g.ell, params.ell):
        raise GeometryError("geometry period differs from params.ell")


def _advance(state, dt, params, reaction, depth, counter):
    g = state.geometry
    road = state.has_road
    reac = reaction.f(_x_field(g), state.v)
    rhs = np.concatenate([state.u, (state.v + dt * reac).ravel()])
    new = _implicit_solver(g, params, road, float(dt))(rhs)
    worst = float(new.min())
    if worst < -NEGATIVE_TOL:
        if depth >= MAX_HALVINGS:
            raise StabilityError(f"negative state {worst:.3e} after {MAX_HALVINGS} dt halvings; reduce dt")
        half = _advance(state, dt / 2, params, reaction, depth + 1, counter)
        return _advance(half, dt / 2, params, reaction, depth + 1, counter)
    if worst < 0.0:
        counter[0] += 1
        log.debug("projected %d entries >= %.1e to zero at t=%g", int(np.sum(new < 0)), -NEGATIVE_TOL, state.t + dt)
        np.maximum(new, 0.0, out=new)
    nu = g.nx if road else 0
    return State(state.t + dt, new[:nu], new[nu:].reshape(g.ny, g.nx), g)


def step_imex(state: State, dt: float, params: ModelParams, reaction: ReactionSpec,
              check_dt: bool = True, _counter=None) -> State:
    """One IMEX step: implicit diffusion and exchange, explicit reaction.

    Raises ``StabilityError`` when ``dt*Lip(f)`` exceeds 1/2 on
    ``[0, max(M, sup state)]`` (unless ``check_dt`` is off) or when the
    step still produces entries below ``-1e-12`` after 4 halvings.
    """
    if dt <= 0:
        raise ParameterDomainError("dt must be positive")
    _check_grid(state, params)
    if check_dt:
        lip = reaction.lipschitz(max(reaction.M, state.sup()))
        if dt * lip > DT_LIP_BOUND:
            raise StabilityError(f"dt*Lip(f) = {dt * lip:.3g} > {DT_LIP_BOUND}; use dt <= {DT_LIP_BOUND / lip:.3g}")
    return _advance(state, dt, params, reaction, 0, _counter if _counter is not None else [0])


def supersolution_level(params: ModelParams, reaction: ReactionSpec, u0, v0) -> float:
    """``V = max(M, sup v0, (mu/nu) sup u0)``."""
    su = float(np.max(u0)) if np.size(u0) else 0.0
    return max(reaction.M, float(np.max(v0)), params.mu / params.nu * su)


def linear_residual(state: State, params: ModelParams, reaction: ReactionSpec) -> np.ndarray:
    """Stationary residual ``A w - [0; f(x, v)]`` of a state (sign tells sub/super)."""
    A = _linear_part(state.geometry, params, state.has_road)
    res = A @ state.stacked()
    res[state.u.size:] -= reaction.f(_x_field(state.geometry), state.v).ravel()
    return res


def build_supersolution(params: ModelParams, reaction: ReactionSpec, u0, v0, geom: Geometry) -> State:
    """Constant supersolution ``(nu/mu*V, V)`` dominating the datum ``(u0, v0)``."""
    v0 = np.asarray(v0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    V = supersolution_level(params, reaction, u0, v0)
    road = u0.size > 0
    u = np.full(geom.nx, params.nu / params.mu * V) if road else np.zeros(0)
    state = State(0.0, u, np.full((geom.ny, geom.nx), V), geom)
    res = linear_residual(state, params, reaction)
    scale = 1e-12 * max(1.0, V) * max(1.0, float(abs(_linear_part(geom, params, road)).sum(axis=1).max()))
    if res.min() < -scale:
        raise ParameterDomainError(f"constant state V={V} is not a supersolution (residual {res.min():.3e})")
    return state


def build_subsolution(params: ModelParams, reaction: ReactionSpec, R: float, geom: Geometry,
                      height: float = None, tol: float = 1e-12, road: bool = True) -> State:
    """``eps*(u_R, v_R)``: truncated principal eigenpair, extended by zero into ``geom``.

    The truncated domain is ``(-R, R) x (0, height)`` (``height = R`` by
    default), with the road for ``road=True`` and a Neumann bottom
    otherwise. ``eps`` is the largest power of 1/2 with a nonpositive
    stationary residual at every node and ``eps*sup <= M/2``.
    """
    height = R if height is None else height
    if 2 * R > geom.nx * geom.hx + 1e-12 or height > geom.ny * geom.hy + 1e-12:
        raise GeometryError("truncated domain does not fit in the dynamic domain")
    if road:
        small = Geometry.truncated_road_field(R, height, geom.hx, geom.hy)
        op = assemble_coupled_operator(small, params, reaction)
    else:
        small = Geometry.neumann_rect(R, height, geom.hx, geom.hy)
        op = assemble_field_operator(small, params, reaction)
    eig = principal_eigenpair(op, tol=tol)
    if eig.lam >= 0:
        raise NoSubsolutionError(f"truncated principal eigenvalue {eig.lam:.6g} >= 0 at R={R}")
    idx = embed_indices(small, geom)
    u_shape = np.zeros(geom.nx) if road else np.zeros(0)
    v_shape = np.zeros(geom.nx * geom.ny)
    v_shape[idx] = eig.vec_field
    if road:
        u_shape[idx[: small.nx]] = eig.vec_road
    base = State(0.0, u_shape, v_shape.reshape(geom.ny, geom.nx), geom)
    A = _linear_part(geom, params, road)
    slack = 1e-10 * max(1.0, float(abs(A).sum(axis=1).max())) * tol
    eps = 1.0
    for _ in range(80):
        if eps * base.sup() <= reaction.M / 2:
            trial = State(0.0, eps * base.u, eps * base.v, geom)
            if linear_residual(trial, params, reaction).max() <= eps * slack:
                return trial
        eps *= 0.5
    raise ConvergenceError("no power of 1/2 makes the eigenfunction a subsolution")


def bump_datum(geom: Geometry, M: float, road: bool = True) -> State:
    """Compactly supported bump of height ``M/2`` over the first period cell, zero road."""
    x = geom.x_nodes()
    y = geom.y_nodes()
    ell = geom.ell
    bx = np.where(x <= ell, np.sin(np.pi * x / ell) ** 2, 0.0)
    by = np.clip(1.0 - y / ell, 0.0, None)
    v = 0.5 * M * by[:, None] * bx[None, :]
    return State(0.0, np.zeros(geom.nx) if road else np.zeros(0), v, geom)


def _interior(state):
    # The far-field Dirichlet row is excluded from steady-state norms.
    return np.concatenate([state.u, state.v[:-1].ravel()]) if state.v.shape[0] > 1 else state.stacked()


def evolve(state0: State, params: ModelParams, reaction: ReactionSpec, dt: float, t_max: float,
           steady_tol: float = None, decay_tol: float = None, stride: int = 100,
           keep_states: bool = False, stop_early: bool = True, check_dt: bool = True,
           snapshot_times: Sequence[float] = ()) -> SteadyOutcome:
    """Integrate until steady, decayed, or ``t_max``.

    Defaults: ``decay_tol = 1e-6*V`` and ``steady_tol = 1e-8*V`` per unit
    time, with ``V`` the supersolution level of the datum. Every ``stride``
    steps a history row is recorded (and the state, with ``keep_states``).
    With ``stop_early=False`` the run always reaches ``t_max`` and the
    classification refers to the final state. A copy of the state is kept
    at the first step reaching each of ``snapshot_times``.
    """
    if dt <= 0 or t_max <= 0:
        raise ParameterDomainError("dt and t_max must be positive")
    if np.min(state0.v) < 0 or (state0.has_road and np.min(state0.u) < 0):
        raise ParameterDomainError("initial datum must be nonnegative")
    V = supersolution_level(params, reaction, state0.u, state0.v)
    decay_tol = 1e-6 * V if decay_tol is None else decay_tol
    steady_tol = 1e-8 * V if steady_tol is None else steady_tol
    if decay_tol <= 0 or steady_tol <= 0:
        raise ParameterDomainError("tolerances must be positive")
    if check_dt:
        lip = reaction.lipschitz(V)
        if dt * lip > DT_LIP_BOUND:
            raise StabilityError(f"dt*Lip(f) = {dt * lip:.3g} > {DT_LIP_BOUND}; use dt <= {DT_LIP_BOUND / lip:.3g}")

    nsteps = int(math.ceil(t_max / dt - 1e-9))
    counter = [0]
    state = state0.copy()
    history, states, snaps = [], [], []
    pending = sorted(float(t) for t in snapshot_times)
    while pending and pending[0] <= state.t:
        snaps.append(state.copy())
        pending.pop(0)

    def record(s, deriv):
        u = s.u if s.has_road else np.zeros(1)
        history.append((s.t, float(u.max()), float(s.v.max()), float(u.min()), float(s.v.min()), deriv))
        if keep_states:
            states.append(s.copy())

    kind, t_hit = UNDECIDED, None
    deriv = math.inf
    record(state, math.nan)
    for n in range(1, nsteps + 1):
        new = _advance(state, dt, params, reaction, 0, counter)
        new.t = n * dt  # avoid drift from repeated addition
        inner = _interior(new)
        deriv = float(np.max(np.abs(inner - _interior(state)))) / dt
        state = new
        while pending and pending[0] <= state.t + 1e-9 * dt:
            snaps.append(state.copy())
            pending.pop(0)
        if n % stride == 0 or n == nsteps:
            record(state, deriv)
        if state.sup() < decay_tol:
            kind, t_hit = DECAYED_TO_ZERO, state.t
        elif deriv < steady_tol and float(inner.min()) > decay_tol:
            kind, t_hit = CONVERGED_POSITIVE, state.t
        else:
            kind = UNDECIDED
        if stop_early and kind != UNDECIDED:
            if history[-1][0] != state.t:
                record(state, deriv)
            break
    return SteadyOutcome(kind, state, t_hit, history, states, counter[0], snaps)


def evolve_roadless(state0: State, params: ModelParams, reaction: ReactionSpec, dt: float, t_max: float,
                    steady_tol: float = None, decay_tol: float = None, **kwargs) -> SteadyOutcome:
    """``evolve`` for the field-only system with Neumann condition at ``y = 0``."""
    if state0.has_road:
        state0 = State(state0.t, np.zeros(0), state0.v, state0.geometry)
    return evolve(state0, params, reaction, dt, t_max, steady_tol, decay_tol, **kwargs)


def monitor_comparison(traj_low: List[State], traj_high: List[State], rel_tol: float = 1e-10) -> ComparisonReport:
    """Largest ``max(0, low - high)`` over logged times and components.

    Passes when the violation is at most ``rel_tol*max(1, sup high)``.
    """
    if len(traj_low) != len(traj_high):
        raise ValueError("trajectories have different numbers of logged states")
    worst, t_worst, scale = 0.0, math.nan, 1.0
    for lo, hi in zip(traj_low, traj_high):
        if lo.geometry != hi.geometry or not math.isclose(lo.t, hi.t, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"trajectories not on the same grid/times (t={lo.t} vs {hi.t})")
        scale = max(scale, hi.sup())
        gap = float(np.max(lo.stacked() - hi.stacked()))
        if gap > worst:
            worst, t_worst = gap, lo.t
    return ComparisonReport(worst, scale, worst <= rel_tol * scale, t_worst)


def exchange_residual(state: State, params: ModelParams, reaction: ReactionSpec) -> np.ndarray:
    """``-d*v_y + nu*v - mu*u`` at the road nodes of a (near-)stationary state.

    ``v_y`` is the centred difference through the ghost row ``v(x, -hy)``
    recovered from the stationary field equation on the ``y = 0`` row, so
    the value vanishes exactly at a discrete steady state.
    """
    g = state.geometry
    if not state.has_road:
        raise GeometryError("exchange residual needs a road")
    v0, v1 = state.v[0], state.v[1]
    right, left = np.roll(v0, -1), np.roll(v0, 1)
    lap_x = (right - 2.0 * v0 + left) / g.hx**2
    adv = params.c * (right - left) / (2.0 * g.hx)
    f0 = reaction.f(g.x_nodes(), v0)
    ghost = 2.0 * v0 - v1 - g.hy**2 * (lap_x + (adv + f0) / params.d)
    return -params.d * (v1 - ghost) / (2.0 * g.hy) + params.nu * v0 - params.mu * state.u


def translation_defect(state: State) -> float:
    """``max|w(x + ell) - w(x)| / max|w|`` on a multi-period domain."""
    g = state.geometry
    if g.periods < 2:
        raise GeometryError("translation check needs at least two periods")
    shift = g.nx // g.periods
    w = np.vstack([state.u[None, :], state.v]) if state.has_road else state.v
    return float(np.max(np.abs(np.roll(w, -shift, axis=1) - w)) / np.max(np.abs(w)))
