"""
Implicit Euler solvers for the state, adjoint and sensitivity equations.

The forward scheme for ``y' - div(a grad y) = s`` with Dirichlet value ``c`` is

    (M + dt A) w_{n+1} = M w_n + dt M s_n,        y = c + w,

on the interior nodes, with the source taken at the start of each step. The
adjoint solver is the exact algebraic transpose of this map with respect to the
discrete space-time inner product of :mod:`adagrad_control.grid`, so that

    <s(v), y - y_d> == <v, p>

holds to rounding error. It runs backward from ``p(T) = 0``:

    (M + dt A) q_n = M q_{n+1} + tau_{n+1} M r_{n+1},

and returns ``p_n = (dt / tau_n) q_n``, where ``tau`` are the trapezoidal time
weights. Interior time levels have ``p_n = q_n``; the initial level carries a
factor 2 because the trapezoidal rule gives it half weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ShapeError, SolverError

__all__ = [
    "LinearSolveContract",
    "Propagator",
    "propagator",
    "solve_forward",
    "solve_adjoint",
    "solve_sensitivity",
]


@dataclass(frozen=True)
class LinearSolveContract:
    rtol: float = 1e-10
    reuse_factorization: bool = True


DEFAULT_CONTRACT = LinearSolveContract()


class Propagator:
    """Factorized implicit Euler step for one set of operators.

    One sparse LU factorization of ``M + dt A`` (interior block) is computed on
    construction and reused for every step of every forward and adjoint solve.
    """

    def __init__(self, ops, contract=DEFAULT_CONTRACT):
        grid = ops.grid
        self.grid = grid
        self.ops = ops
        self.contract = contract
        self.dt = grid.dt
        self.system = (ops.mass_ii + grid.dt * ops.stiffness_ii).tocsc()
        self._lu = spla.splu(self.system)

    def _solve(self, rhs):
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("implicit step produced non-finite values", residual=np.inf)
        res = np.linalg.norm(self.system @ x - rhs)
        if res > self.contract.rtol * np.linalg.norm(rhs) + np.finfo(float).tiny:
            raise SolverError(f"linear solve residual {res:.3e} exceeds tolerance", residual=res)
        return x

    def _as_field(self, f, batch):
        grid = self.grid
        shape = grid.field_shape + batch
        if f is None:
            return None
        f = np.asarray(f, dtype=float)
        if f.ndim == 0:
            return None if f == 0 else np.broadcast_to(f, shape)
        if f.shape[:2] != grid.field_shape:
            raise ShapeError(f"field of shape {f.shape} does not match grid {grid.field_shape}")
        return np.broadcast_to(f.reshape(f.shape + (1,) * (len(shape) - f.ndim)), shape)

    def forward(self, source=None, y0=None, boundary_value=0.0, batch=()):
        """State trajectory for a space-time ``source`` and initial field ``y0``."""
        grid = self.grid
        interior = grid.interior
        n_int = interior.size
        batch = tuple(batch)
        if source is not None:
            s_arr = np.asarray(source)
            if s_arr.ndim == 3 and not batch:
                batch = s_arr.shape[2:]
        src = self._as_field(source, batch)
        k = int(np.prod(batch)) if batch else 1
        w = np.zeros((grid.n_t + 1, grid.n_nodes, k))
        if y0 is not None:
            y0 = np.asarray(y0, dtype=float)
            if y0.shape[0] != grid.n_nodes:
                raise ShapeError("initial condition must have one value per node")
            w[0, interior] = (y0.reshape(grid.n_nodes, -1) - boundary_value)[interior]
        M_ii = self.ops.mass_ii
        M_if = self.ops.mass_if
        dt = self.dt
        wi = w[0, interior]
        for n in range(grid.n_t):
            rhs = M_ii @ wi
            if src is not None:
                rhs = rhs + dt * (M_if @ src[n].reshape(grid.n_nodes, k))
            wi = self._solve(rhs)
            w[n + 1, interior] = wi
        y = w if boundary_value == 0 else w + boundary_value
        return y.reshape(grid.field_shape + batch) if batch else y[..., 0]

    def adjoint(self, residual):
        """Discrete adjoint state for the tracking residual ``y - y_d``."""
        grid = self.grid
        r = np.asarray(residual, dtype=float)
        if r.shape[:2] != grid.field_shape:
            raise ShapeError(f"residual of shape {r.shape} does not match grid {grid.field_shape}")
        batch = r.shape[2:]
        k = int(np.prod(batch)) if batch else 1
        r = r.reshape(grid.n_t + 1, grid.n_nodes, k)
        interior = grid.interior
        tw = grid.time_weights
        p = np.zeros_like(r)
        M_ii = self.ops.mass_ii
        M_if = self.ops.mass_if
        q = np.zeros((interior.size, k))
        for n in range(grid.n_t - 1, -1, -1):
            rhs = M_ii @ q + tw[n + 1] * (M_if @ r[n + 1])
            q = self._solve(rhs)
            p[n, interior] = (self.dt / tw[n]) * q
        return p.reshape(grid.field_shape + batch) if batch else p[..., 0]


def propagator(ops, contract=DEFAULT_CONTRACT):
    """Cached :class:`Propagator` for ``ops``."""
    key = ("propagator", contract)
    cache = ops._cache
    if key not in cache or not contract.reuse_factorization:
        cache[key] = Propagator(ops, contract)
    return cache[key]


def solve_forward(ops, g, u, y0, grid=None, boundary_value=0.0, contract=DEFAULT_CONTRACT):
    """Implicit Euler solution of ``y' - div(a grad y) = g + u``.

    ``g`` and ``u`` are space-time fields (or scalars, or ``None``), ``y0`` a
    nodal field. Boundary nodes hold ``boundary_value`` at every time level.
    """
    if grid is not None and not grid.same_as(ops.grid):
        raise ShapeError("operators were assembled on a different grid")
    if g is None:
        source = u
    elif u is None:
        source = g
    else:
        source = np.asarray(g, dtype=float) + np.asarray(u, dtype=float)
    return propagator(ops, contract).forward(source, y0, boundary_value)


def solve_adjoint(ops, y, y_d, grid=None, contract=DEFAULT_CONTRACT):
    """Backward solve driven by ``y - y_d``; exact transpose of :func:`solve_sensitivity`."""
    if grid is not None and not grid.same_as(ops.grid):
        raise ShapeError("operators were assembled on a different grid")
    residual = np.asarray(y, dtype=float) - np.asarray(y_d, dtype=float)
    if residual.shape[:2] != ops.grid.field_shape:
        residual = np.broadcast_to(residual, ops.grid.field_shape)
    return propagator(ops, contract).adjoint(residual)


def solve_sensitivity(ops, v, grid=None, contract=DEFAULT_CONTRACT):
    """Linearized state ``s(v)``: zero initial and boundary data, source ``v``."""
    return solve_forward(ops, v, None, None, grid, 0.0, contract)
