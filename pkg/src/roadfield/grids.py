"""Structured grids and sparse finite-difference operators.

Every operator is assembled as ``A ~ -L`` (field) or the block operator
``-(R, L)`` acting on the stacked vector ``[phi (road nodes), psi (field nodes)]``
with all boundary conditions eliminated, so principal eigenvalues of ``A``
approximate the continuous principal eigenvalues directly.

Node layout
-----------
x, Dirichlet on ``(-R, R)``:  ``x_i = -R + i*hx``, ``i = 1..nx``, ``hx = 2R/(nx+1)``.
x, periodic on ``[0, k*ell)``: ``x_i = i*hx``, ``i = 0..nx-1``, ``hx = k*ell/nx``.
y, Dirichlet on ``(0, H)``:   ``y_j = j*hy``, ``j = 1..ny``, ``hy = H/(ny+1)``.
y, Dirichlet on ``(-r, r)``:  ``y_j = -r + j*hy``, ``j = 1..ny``, ``hy = 2r/(ny+1)``.
y, road or Neumann at 0, Dirichlet at ``H``: ``y_j = j*hy``, ``j = 0..ny-1``, ``hy = H/ny``.

Field unknowns are ordered row by row (``k = j*nx + i``). The exchange and
Neumann conditions at ``y = 0`` are eliminated through a mirrored ghost row
``psi(x, -hy)`` with the centred (second-order) normal difference; with the
half trapezoidal weight on the ``y = 0`` row this keeps the ``c = 0``
operator exactly self-adjoint in the ``mu, nu``-weighted inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, StabilityError
from .model import ModelParams, ReactionSpec

TRUNCATED_ROAD_FIELD = "TruncatedRoadField"
DIRICHLET_RECT = "DirichletRect"
NEUMANN_RECT = "NeumannRect"
PERIODIC_CELL_1D = "PeriodicCell1D"
PERIODIC_STRIP = "PeriodicStrip"
PERIODIC_HALF_STRIP = "PeriodicHalfStrip"

FIELD_KINDS = (DIRICHLET_RECT, NEUMANN_RECT, PERIODIC_CELL_1D, PERIODIC_STRIP, PERIODIC_HALF_STRIP)
COUPLED_KINDS = (TRUNCATED_ROAD_FIELD, PERIODIC_HALF_STRIP)


def _count(extent, h, name):
    n = extent / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise GeometryError(f"spacing {h} does not divide {name} extent {extent}")
    return k


@dataclass(frozen=True)
class Geometry:
    """A structured grid for one of the six domain families.

    Use the ``Geometry.<family>(...)`` constructors; they derive node counts
    from a target spacing and check that the spacing divides the extent.
    """

    kind: str
    nx: int
    ny: int
    hx: float
    hy: float
    R: float = 0.0
    H: float = 0.0
    r: float = 0.0
    ell: float = 1.0
    periods: int = 1

    def __post_init__(self):
        if self.nx < 1 or self.ny < 0 or self.hx <= 0 or (self.ny > 0 and self.hy <= 0):
            raise GeometryError(f"degenerate grid: {self}")
        if self.kind == PERIODIC_CELL_1D and self.ny != 0:
            raise GeometryError("PeriodicCell1D has ny = 0")

    # -- constructors -----------------------------------------------------
    @classmethod
    def truncated_road_field(cls, R, H, hx, hy=None):
        hy = hx if hy is None else hy
        return cls(TRUNCATED_ROAD_FIELD, nx=_count(2 * R, hx, "x") - 1, ny=_count(H, hy, "y"),
                   hx=float(hx), hy=float(hy), R=float(R), H=float(H))

    @classmethod
    def dirichlet_rect(cls, R, H, hx, hy=None):
        hy = hx if hy is None else hy
        return cls(DIRICHLET_RECT, nx=_count(2 * R, hx, "x") - 1, ny=_count(H, hy, "y") - 1,
                   hx=float(hx), hy=float(hy), R=float(R), H=float(H))

    @classmethod
    def neumann_rect(cls, R, H, hx, hy=None):
        hy = hx if hy is None else hy
        return cls(NEUMANN_RECT, nx=_count(2 * R, hx, "x") - 1, ny=_count(H, hy, "y"),
                   hx=float(hx), hy=float(hy), R=float(R), H=float(H))

    @classmethod
    def periodic_cell(cls, ell, nx, periods=1):
        return cls(PERIODIC_CELL_1D, nx=int(nx) * periods, ny=0, hx=float(ell) / int(nx), hy=0.0,
                   ell=float(ell), periods=periods)

    @classmethod
    def periodic_strip(cls, r, ell, hx, hy=None, periods=1):
        hy = hx if hy is None else hy
        return cls(PERIODIC_STRIP, nx=_count(periods * ell, hx, "x"), ny=_count(2 * r, hy, "y") - 1,
                   hx=float(hx), hy=float(hy), r=float(r), ell=float(ell), periods=periods)

    @classmethod
    def periodic_half_strip(cls, r, ell, hx, hy=None, periods=1):
        hy = hx if hy is None else hy
        return cls(PERIODIC_HALF_STRIP, nx=_count(periods * ell, hx, "x"), ny=_count(r, hy, "y"),
                   hx=float(hx), hy=float(hy), r=float(r), ell=float(ell), periods=periods)

    # -- node coordinates -------------------------------------------------
    @property
    def periodic_x(self):
        return self.kind in (PERIODIC_CELL_1D, PERIODIC_STRIP, PERIODIC_HALF_STRIP)

    @property
    def bottom_row_at_zero(self):
        """True when the first field row sits on ``y = 0`` (road or Neumann row)."""
        return self.kind in (TRUNCATED_ROAD_FIELD, NEUMANN_RECT, PERIODIC_HALF_STRIP)

    def x_nodes(self):
        if self.periodic_x:
            return np.arange(self.nx) * self.hx
        return -self.R + np.arange(1, self.nx + 1) * self.hx

    def y_nodes(self):
        if self.kind == PERIODIC_CELL_1D:
            return np.zeros(0)
        if self.bottom_row_at_zero:
            return np.arange(self.ny) * self.hy
        if self.kind == PERIODIC_STRIP:
            return -self.r + np.arange(1, self.ny + 1) * self.hy
        return np.arange(1, self.ny + 1) * self.hy

    @property
    def n_field(self):
        return self.nx * max(self.ny, 1)

    def row_weights(self):
        """Trapezoidal row weights (1/2 on a ``y = 0`` row, 1 elsewhere)."""
        if self.kind == PERIODIC_CELL_1D:
            return np.ones(1)
        w = np.ones(self.ny)
        if self.bottom_row_at_zero:
            w[0] = 0.5
        return w


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse discretization of ``-L`` or ``-(R, L)`` with boundary conditions eliminated.

    ``weights`` is the full diagonal of the inner product in which the
    ``c = 0`` operator is self-adjoint: ``mu*hx`` on road nodes and
    ``nu*hx*hy*w_j`` on field nodes (``w_0 = 1/2`` on a ``y = 0`` row). For
    field-only operators the ``nu`` factor is dropped.
    """

    dim_road: int
    dim_field: int
    matrix: sp.csr_matrix
    weights: np.ndarray
    geometry: Geometry
    params: ModelParams
    reaction: Optional[ReactionSpec]
    a_field: np.ndarray

    @property
    def order(self):
        return self.dim_road + self.dim_field

    @property
    def weight_road(self):
        return self.params.mu * self.geometry.hx if self.dim_road else 0.0

    @property
    def weight_field(self):
        g = self.geometry
        nu = self.params.nu if self.dim_road else 1.0
        return nu * g.hx * (g.hy if g.ny else 1.0)

    @property
    def coupled(self):
        return self.dim_road > 0

    def split(self, vec):
        vec = np.asarray(vec)
        return vec[: self.dim_road], vec[self.dim_road:]


def _check_peclet(params, hx):
    for name, diff in (("d", params.d), ("D", params.D)):
        pe = abs(params.c) * hx / (2.0 * diff)
        if pe >= 1.0:
            raise StabilityError(
                f"grid Peclet number |c|*hx/(2*{name}) = {pe:.3g} >= 1; refine hx below {2.0 * diff / abs(params.c):.6g}"
            )


def _x_stencil(n, h, diff, c, periodic):
    """1D matrix of ``-diff*u'' - c*u'`` (central differences)."""
    lo = -diff / h**2 + c / (2.0 * h)
    hi = -diff / h**2 - c / (2.0 * h)
    main = np.full(n, 2.0 * diff / h**2)
    if n == 1:
        if periodic:
            return sp.csr_matrix(np.zeros((1, 1)))
        return sp.csr_matrix(main.reshape(1, 1))
    m = sp.diags([np.full(n - 1, lo), main, np.full(n - 1, hi)], [-1, 0, 1], format="lil")
    if periodic:
        if n == 2:
            m[0, 1] = lo + hi
            m[1, 0] = lo + hi
        else:
            m[0, n - 1] += lo
            m[n - 1, 0] += hi
    return m.tocsr()


def _y_stencil(n, h, diff, bottom):
    """1D matrix of ``-diff*v''`` in y; ``bottom`` is 'dirichlet' or 'mirror' (ghost row at y=-h)."""
    main = np.full(n, 2.0 * diff / h**2)
    off = np.full(n - 1, -diff / h**2)
    m = sp.diags([off, main, off.copy()], [-1, 0, 1], format="lil")
    if bottom == "mirror" and n > 1:
        m[0, 1] = -2.0 * diff / h**2
    return m.tocsr()


def _field_block(geom, params, a_x, bottom):
    ex = _x_stencil(geom.nx, geom.hx, params.d, params.c, geom.periodic_x)
    if geom.ny == 0:
        return ex - sp.diags(a_x)
    ey = _y_stencil(geom.ny, geom.hy, params.d, bottom)
    lap = sp.kron(sp.identity(geom.ny), ex) + sp.kron(ey, sp.identity(geom.nx))
    return (lap - sp.diags(np.tile(a_x, geom.ny))).tocsr()


def _sample_a(geom, reaction):
    if reaction is None:
        return np.zeros(geom.nx)
    return np.asarray(reaction.linearization(geom.x_nodes()), dtype=float)


def assemble_field_operator(geom: Geometry, params: ModelParams, reaction: Optional[ReactionSpec]) -> DiscreteOperator:
    """Assemble ``A ~ -L = -d*Lap - c*d/dx - a(x)`` on a field-only geometry.

    ``PeriodicHalfStrip`` is accepted here as the roadless counterpart:
    periodic in x, Neumann at ``y = 0``, Dirichlet at ``y = r``.
    Passing ``reaction=None`` drops the ``a(x)`` term.
    """
    if geom.kind not in FIELD_KINDS:
        raise GeometryError(f"field operator not defined on {geom.kind}")
    _check_peclet(params, geom.hx)
    a_x = _sample_a(geom, reaction)
    bottom = "mirror" if geom.bottom_row_at_zero else "dirichlet"
    matrix = _field_block(geom, params, a_x, bottom)
    weights = np.kron(geom.row_weights(), np.full(geom.nx, geom.hx * (geom.hy if geom.ny else 1.0)))
    return DiscreteOperator(0, geom.n_field, matrix.tocsr(), weights, geom, params, reaction, a_x)


def assemble_coupled_operator(geom: Geometry, params: ModelParams, reaction: Optional[ReactionSpec]) -> DiscreteOperator:
    """Assemble the road-field block operator on ``TruncatedRoadField`` or ``PeriodicHalfStrip``.

    Road rows: ``-D*phi'' - c*phi' + mu*phi - nu*psi(x, 0)``.
    Field rows: ``-L psi``; on the ``y = 0`` row the ghost value from the
    exchange condition, ``psi(x,-hy) = psi(x,hy) - (2*hy/d)*(nu*psi(x,0) - mu*phi)``,
    adds ``2*nu/hy`` to the diagonal and ``-2*mu/hy`` against ``phi``.
    """
    if geom.kind not in COUPLED_KINDS:
        raise GeometryError(f"coupled operator not defined on {geom.kind}")
    if geom.ny < 1:
        raise GeometryError("coupled operator needs at least one field row")
    _check_peclet(params, geom.hx)
    nx, hy = geom.nx, geom.hy
    a_x = _sample_a(geom, reaction)
    field = _field_block(geom, params, a_x, "mirror")
    field = field + sp.diags(np.concatenate([np.full(nx, 2.0 * params.nu / hy), np.zeros(nx * (geom.ny - 1))]))
    road = _x_stencil(nx, geom.hx, params.D, params.c, geom.periodic_x) + params.mu * sp.identity(nx)
    eye = sp.identity(nx, format="csr")
    zeros = sp.csr_matrix((nx, nx * (geom.ny - 1)))
    road_to_field = sp.hstack([-params.nu * eye, zeros])
    field_to_road = sp.vstack([-(2.0 * params.mu / hy) * eye, zeros.T])
    matrix = sp.bmat([[road, road_to_field], [field_to_road, field]], format="csr")
    w_field = np.kron(geom.row_weights(), np.full(nx, params.nu * geom.hx * hy))
    weights = np.concatenate([np.full(nx, params.mu * geom.hx), w_field])
    return DiscreteOperator(nx, geom.n_field, matrix, weights, geom, params, reaction, a_x)


def apply(op: DiscreteOperator, vec) -> np.ndarray:
    """Matrix-vector product ``A @ vec``."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (op.order,):
        raise ValueError(f"vector length {vec.shape} does not match operator order {op.order}")
    return op.matrix @ vec


def weighted_asymmetry(op: DiscreteOperator) -> float:
    """``max|W A - A^T W| / max|W A|``; zero (to roundoff) when ``c = 0``."""
    W = sp.diags(op.weights)
    wa = (W @ op.matrix).tocsr()
    diff = wa - wa.T
    scale = abs(wa).max()
    return float(abs(diff).max() / scale) if diff.nnz else 0.0


def gershgorin_lower(matrix) -> float:
    """Smallest Gershgorin disc left end, ``min_i (a_ii - sum_{j!=i} |a_ij|)``."""
    m = sp.csr_matrix(matrix)
    diag = m.diagonal()
    off = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def dump_matrix(op: DiscreteOperator, path) -> None:
    """Write the matrix as ``row col value`` lines (0-based, 17 significant digits)."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"% {op.order} {op.order} {coo.nnz}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")


def embed_indices(small: Geometry, large: Geometry, x_offset=0.0, y_offset=0.0):
    """Flat field indices in ``large`` of the field nodes of ``small``.

    ``small`` nodes are translated by ``(x_offset, y_offset)``; periodic
    ``large`` grids wrap in x. Raises if a node does not land on ``large``.
    """
    if not math.isclose(small.hx, large.hx, rel_tol=1e-12) or (
        small.ny and not math.isclose(small.hy, large.hy, rel_tol=1e-12)
    ):
        raise GeometryError("embedding needs identical spacings")
    xs = small.x_nodes() + x_offset
    ys = small.y_nodes() + y_offset
    if large.periodic_x:
        period = large.nx * large.hx
        ix = np.rint(np.mod(xs, period) / large.hx).astype(int) % large.nx
        ok_x = np.allclose(np.mod(ix * large.hx - np.mod(xs, period) + period / 2, period) - period / 2, 0.0,
                           atol=1e-9 * large.hx)
    else:
        ix = np.rint((xs + large.R) / large.hx).astype(int) - 1
        ok_x = np.allclose(large.x_nodes()[np.clip(ix, 0, large.nx - 1)], xs, atol=1e-9 * large.hx)
    if not ok_x or ix.min() < 0 or ix.max() >= large.nx:
        raise GeometryError("x nodes do not embed")
    if small.ny == 0:
        return ix
    y_large = large.y_nodes()
    iy = np.rint((ys - y_large[0]) / large.hy).astype(int)
    if iy.min() < 0 or iy.max() >= large.ny or not np.allclose(y_large[iy], ys, atol=1e-9 * large.hy):
        raise GeometryError("y nodes do not embed")
    return (iy[:, None] * large.nx + ix[None, :]).ravel()
