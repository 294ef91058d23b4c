"""
Structured space-time grids and finite element operators.

The spatial domain is a box ``[a_1, b_1] x ... x [a_d, b_d]`` with ``d`` in
{1, 2}, discretized by piecewise linear (1D) or tensor-product bilinear (2D)
elements on a uniform grid. Time ``[0, T]`` is split into ``n_t`` equal steps.

Space-time fields are stored as arrays of shape ``(n_t + 1, n_nodes)``: one row
per time level, one column per node (C-ordered over the spatial axes). Most
routines also accept a trailing batch axis, ``(n_t + 1, n_nodes, k)``.

The L2 inner product on ``D x [0, T]`` is integrated exactly in space for
piecewise linear data (consistent mass matrix) and with the trapezoidal rule
in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import CoercivityError, ConfigurationError, ShapeError

__all__ = [
    "SpaceTimeGrid",
    "DiscreteOperators",
    "build_grid",
    "assemble_operators",
    "inner_product",
    "norm",
    "spatial_inner_product",
]


def _local_mass(h):
    return h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def _local_stiffness(h):
    return np.array([[1.0, -1.0], [-1.0, 1.0]]) / h


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid of a box times ``[0, T]``.

    Use :func:`build_grid` to construct one with validation.
    """

    lower: tuple
    upper: tuple
    n_cells: tuple
    T: float
    n_t: int

    @property
    def dim(self):
        return len(self.n_cells)

    @property
    def extents(self):
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def dx(self):
        return tuple(L / n for L, n in zip(self.extents, self.n_cells))

    @property
    def dt(self):
        return self.T / self.n_t

    @property
    def shape(self):
        """Nodes per spatial axis."""
        return tuple(n + 1 for n in self.n_cells)

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @property
    def field_shape(self):
        return (self.n_t + 1, self.n_nodes)

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @cached_property
    def axes(self):
        return tuple(
            np.linspace(a, b, n + 1) for a, b, n in zip(self.lower, self.upper, self.n_cells)
        )

    @cached_property
    def nodes(self):
        """Node coordinates, shape ``(n_nodes, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def times(self):
        return np.linspace(0.0, self.T, self.n_t + 1)

    @cached_property
    def boundary(self):
        """Indices of the nodes on the boundary of the box (Dirichlet nodes)."""
        idx = np.indices(self.shape).reshape(self.dim, -1)
        on_bnd = np.zeros(self.n_nodes, dtype=bool)
        for k, n in enumerate(self.shape):
            on_bnd |= (idx[k] == 0) | (idx[k] == n - 1)
        return np.flatnonzero(on_bnd)

    @cached_property
    def interior(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @cached_property
    def weights(self):
        """Trapezoidal (lumped) spatial quadrature weight of each node."""
        w = [np.full(n + 1, h) for n, h in zip(self.n_cells, self.dx)]
        for wk in w:
            wk[[0, -1]] *= 0.5
        out = w[0]
        for wk in w[1:]:
            out = np.kron(out, wk)
        return out

    @cached_property
    def time_weights(self):
        w = np.full(self.n_t + 1, self.dt)
        w[[0, -1]] *= 0.5
        return w

    @cached_property
    def mass(self):
        """Consistent mass matrix over all nodes (CSR)."""
        return _assemble(self, np.ones(self.n_cells), mass=True)

    @cached_property
    def element_centers(self):
        """Element midpoints, shape ``(n_elements, dim)``."""
        mids = [0.5 * (ax[1:] + ax[:-1]) for ax in self.axes]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def nodal_to_cells(self, values):
        """Average nodal values over the corners of each element."""
        v = np.asarray(values).reshape(self.shape)
        if self.dim == 1:
            return 0.5 * (v[1:] + v[:-1])
        return 0.25 * (v[1:, 1:] + v[1:, :-1] + v[:-1, 1:] + v[:-1, :-1]).ravel()

    def nearest_node(self, point):
        point = np.asarray(point, dtype=float)
        return int(np.argmin(np.sum((self.nodes - point) ** 2, axis=1)))

    def zeros(self):
        return np.zeros(self.field_shape)

    def constant(self, c):
        return np.full(self.field_shape, float(c))

    def evaluate(self, fn):
        """Space-time field from ``fn(x, t)``; ``x`` has shape ``(n_nodes, dim)``."""
        out = np.empty(self.field_shape)
        for n, t in enumerate(self.times):
            out[n] = fn(self.nodes, t)
        return out

    def same_as(self, other):
        return (
            self.n_cells == other.n_cells
            and self.n_t == other.n_t
            and np.allclose(self.lower, other.lower)
            and np.allclose(self.upper, other.upper)
            and np.isclose(self.T, other.T)
        )


def build_grid(dim, extents, n_cells, T, n_t):
    """Build a :class:`SpaceTimeGrid`.

    ``extents`` is ``[lo, hi]`` in 1D or ``[[lo1, hi1], [lo2, hi2]]`` in 2D; a
    bare positive number ``L`` means ``[0, L]`` on every axis. ``n_cells`` is an
    int (same on every axis) or one int per axis.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    ext = np.asarray(extents, dtype=float)
    if ext.ndim == 0:
        ext = np.array([[0.0, float(ext)]] * dim)
    elif ext.ndim == 1:
        if ext.size != 2:
            raise ConfigurationError(f"extents {extents!r} do not describe a {dim}D box")
        ext = np.array([ext] * dim) if dim > 1 and ext.size == 2 else ext.reshape(1, 2)
    if ext.shape != (dim, 2):
        raise ConfigurationError(f"extents {extents!r} do not describe a {dim}D box")
    cells = np.broadcast_to(np.asarray(n_cells, dtype=int), (dim,))
    if np.any(ext[:, 1] <= ext[:, 0]):
        raise ConfigurationError("extents must be positive")
    if np.any(cells < 2):
        raise ConfigurationError("need at least 2 cells per axis")
    if int(n_t) < 1:
        raise ConfigurationError("need at least one time step")
    if not float(T) > 0:
        raise ConfigurationError("final time must be positive")
    return SpaceTimeGrid(
        lower=tuple(float(a) for a in ext[:, 0]),
        upper=tuple(float(b) for b in ext[:, 1]),
        n_cells=tuple(int(c) for c in cells),
        T=float(T),
        n_t=int(n_t),
    )


def _element_connectivity(grid):
    """Global node index of each local corner, shape ``(n_elements, 2**dim)``."""
    if grid.dim == 1:
        e = np.arange(grid.n_cells[0])
        return np.stack([e, e + 1], axis=1)
    n2 = grid.shape[1]
    e1, e2 = np.meshgrid(np.arange(grid.n_cells[0]), np.arange(grid.n_cells[1]), indexing="ij")
    e1, e2 = e1.ravel(), e2.ravel()
    # local corner order (a1, a2) -> 2 * a1 + a2, matching np.kron of 1D matrices
    return np.stack([(e1 + a1) * n2 + (e2 + a2) for a1 in (0, 1) for a2 in (0, 1)], axis=1)


def _assemble(grid, cell_coef, mass=False, axis_scale=None):
    h = grid.dx
    if mass:
        local = [_local_mass(h[0])]
        for hk in h[1:]:
            local = [np.kron(local[0], _local_mass(hk))]
        terms = [(local[0], np.ravel(cell_coef))]
    else:
        scale = np.ones(grid.dim) if axis_scale is None else np.asarray(axis_scale, float)
        terms = []
        for k in range(grid.dim):
            mats = [_local_stiffness(h[j]) if j == k else _local_mass(h[j]) for j in range(grid.dim)]
            loc = mats[0]
            for m in mats[1:]:
                loc = np.kron(loc, m)
            terms.append((scale[k] * loc, np.ravel(cell_coef)))
    conn = _element_connectivity(grid)
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    vals = sum(np.outer(c, loc.ravel()) for loc, c in terms).ravel()
    A = sp.coo_matrix((vals, (rows, cols)), shape=(grid.n_nodes, grid.n_nodes)).tocsr()
    A.sum_duplicates()
    return A


@dataclass(frozen=True)
class DiscreteOperators:
    """Mass and stiffness matrices for one diffusivity sample.

    ``mass`` and ``stiffness`` act on all nodes; the ``*_ii`` blocks are the
    interior (Dirichlet-eliminated) parts and ``mass_if`` is the interior-rows,
    all-columns block used for load vectors.
    """

    grid: SpaceTimeGrid
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    cell_diffusivity: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @cached_property
    def mass_ii(self):
        i = self.grid.interior
        return self.mass[i][:, i].tocsr()

    @cached_property
    def mass_if(self):
        return self.mass[self.grid.interior].tocsr()

    @cached_property
    def stiffness_ii(self):
        i = self.grid.interior
        return self.stiffness[i][:, i].tocsr()


def assemble_operators(grid, diffusivity=1.0, axis_scale=None):
    """Assemble mass and stiffness matrices on ``grid``.

    ``diffusivity`` is a scalar, an array of nodal values (averaged to element
    midpoints), an array of element values, or any object exposing
    ``cell_values(grid)`` such as a sampled lognormal field. ``axis_scale``
    multiplies the diffusion along each axis (anisotropic conduction).
    """
    n_el = int(np.prod(grid.n_cells))
    if hasattr(diffusivity, "cell_values"):
        cells = np.asarray(diffusivity.cell_values(grid), dtype=float)
    else:
        a = np.asarray(diffusivity, dtype=float)
        if a.ndim == 0:
            cells = np.full(n_el, float(a))
        elif a.size == grid.n_nodes:
            if np.any(a.ravel() <= 0):
                raise CoercivityError("diffusivity must be positive at every node")
            cells = np.ravel(grid.nodal_to_cells(a))
        elif a.size == n_el:
            cells = a.ravel()
        else:
            raise ShapeError(f"diffusivity of size {a.size} matches neither nodes nor cells")
    if not np.all(np.isfinite(cells)) or np.any(cells <= 0):
        raise CoercivityError(f"diffusivity must be positive, min value {np.min(cells):.3g}")
    if axis_scale is not None and np.any(np.asarray(axis_scale) <= 0):
        raise CoercivityError("axis scales must be positive")
    return DiscreteOperators(
        grid=grid,
        mass=grid.mass,
        stiffness=_assemble(grid, cells, axis_scale=axis_scale),
        cell_diffusivity=cells,
    )


def _check(u, grid):
    u = np.asarray(u, dtype=float)
    if u.shape[:2] != grid.field_shape:
        raise ShapeError(f"field of shape {u.shape} is not on a grid of shape {grid.field_shape}")
    return u


def inner_product(u, v, grid):
    """Space-time L2 inner product. Batched fields give one value per column."""
    u, v = _check(u, grid), _check(v, grid)
    if u.shape != v.shape:
        raise ShapeError(f"shape mismatch {u.shape} vs {v.shape}")
    M = grid.mass
    tw = grid.time_weights
    if u.ndim == 2:
        return float(np.sum(tw * np.einsum("ni,ni->n", u, (M @ v.T).T)))
    out = np.zeros(u.shape[2:])
    for n in range(u.shape[0]):
        out += tw[n] * np.einsum("i...,i...->...", u[n], M @ v[n])
    return out


def norm(u, grid):
    return np.sqrt(np.maximum(inner_product(u, u, grid), 0.0))


def spatial_inner_product(u, v, grid):
    """L2(D) inner product of nodal vectors (or per time level for 2D input)."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    if u.shape[-1] != grid.n_nodes or v.shape != u.shape:
        raise ShapeError("spatial fields must have one value per node")
    if u.ndim == 1:
        return float(u @ (grid.mass @ v))
    return np.einsum("ni,ni->n", u, (grid.mass @ v.T).T)
