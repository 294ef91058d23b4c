"""
Stochastic gradient optimizers: Robbins-Monro SGD and scalar (norm) AdaGrad.

Both draw a fresh realization from stream ``j`` at iteration ``j``, evaluate the
sample cost and adjoint gradient at the current iterate, and take a step that is
radially projected back onto the ball ``||u|| <= u_max``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, HypothesisViolation, SolverError
from .grid import norm
from .objective import cost_and_gradient

__all__ = [
    "OptimizerState",
    "StepRecord",
    "OptimizationTrace",
    "project_control",
    "adagrad_step",
    "sgd_step",
    "run_optimizer",
    "averaged_iterate",
    "theorem_bound",
]


@dataclass(frozen=True)
class OptimizerState:
    """Iterate ``u_j`` and the quantities the step rules carry between steps.

    ``b`` is the AdaGrad accumulator (``None`` for SGD). ``running_sum`` holds
    ``u_1 + ... + u_j`` for the averaged iterate.
    """

    u: np.ndarray
    j: int = 0
    b: float | None = None
    running_sum: np.ndarray | None = None
    n_projected: int = 0
    last_step: float | None = None
    last_projected: bool = False

    @property
    def averaged(self):
        if self.j == 0 or self.running_sum is None:
            return self.u
        return self.running_sum / self.j


def project_control(u, u_max, grid):
    """Radial projection onto ``{||u|| <= u_max}``; returns ``(u, projected)``."""
    if not u_max > 0:
        raise ConfigurationError("u_max must be positive")
    n = norm(u, grid)
    if not math.isfinite(u_max) or n <= u_max:
        return u, False
    return u * (u_max / n), True


def _advance(state, gradient, step, grid, u_max, b_next):
    u_new, projected = project_control(state.u - step * gradient, u_max, grid)
    rs = u_new.copy() if state.running_sum is None else state.running_sum + u_new
    return replace(
        state,
        u=u_new,
        j=state.j + 1,
        b=b_next,
        running_sum=rs,
        n_projected=state.n_projected + int(projected),
        last_step=step,
        last_projected=projected,
    )


def _grad_norm(gradient, grid, grad_norm):
    gn = norm(gradient, grid) if grad_norm is None else grad_norm
    if not math.isfinite(gn):
        raise SolverError(f"non-finite gradient norm {gn}")
    return gn


def adagrad_step(state, gradient, grid, eta, u_max=math.inf, grad_norm=None):
    """``u <- P(u - eta / b_j * g)`` then ``b_{j+1}^2 = b_j^2 + ||g||^2``.

    The accumulator is updated with the unprojected sample gradient.
    """
    if state.b is None or not state.b > 0:
        raise ConfigurationError("AdaGrad needs a positive accumulator b")
    gn = _grad_norm(gradient, grid, grad_norm)
    b_next = math.sqrt(state.b**2 + gn**2)
    return _advance(state, gradient, eta / state.b, grid, u_max, b_next)


def sgd_step(state, gradient, grid, eta0, u_max=math.inf, grad_norm=None):
    """Robbins-Monro step ``eta_j = eta0 / (j + 1)``."""
    _grad_norm(gradient, grid, grad_norm)
    return _advance(state, gradient, eta0 / (state.j + 1), grid, u_max, state.b)


@dataclass
class StepRecord:
    iter: int
    cost: float
    grad_norm: float
    step_size: float
    b: float | None
    projected: bool
    wall_time: float


@dataclass
class OptimizationTrace:
    method: str
    params: dict
    records: list = field(default_factory=list)
    iterates: list | None = None
    gradients: list | None = None
    snapshots: dict = field(default_factory=dict)
    final: np.ndarray | None = None
    averaged: np.ndarray | None = None
    n_projected: int = 0
    error: str | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def run_optimizer(
    method,
    problem,
    params,
    n_iters,
    streams,
    keep_iterates=True,
    keep_gradients=False,
    snapshot_at=(),
    lipschitz=None,
    callback=None,
):
    """Run SGD or AdaGrad for ``n_iters`` steps.

    ``params`` holds ``u0`` (scalar or field), ``u_max`` (default ``inf``) and
    either ``eta`` and ``b0`` (AdaGrad) or ``eta0`` (SGD). ``streams[j]`` is the
    random generator used at iteration ``j``; ``n_iters + 1`` streams are needed
    because the final iterate is evaluated as well. Pass a single-element
    sequence containing a :class:`~adagrad_control.problems.Sample` as
    ``streams`` to optimize one fixed realization instead.

    The trace has ``n_iters + 1`` records; record ``j`` holds the sample cost
    and gradient norm at ``u_j`` and the step size used from ``u_j``.
    If a solve fails the partial trace is returned with ``error`` set.
    """
    if method not in ("adagrad", "sgd"):
        raise ConfigurationError(f"unknown method {method!r}")
    grid = problem.grid
    u0 = params.get("u0", 0.0)
    u0 = grid.constant(u0) if np.ndim(u0) == 0 else np.array(u0, dtype=float)
    u_max = float(params.get("u_max", math.inf))
    fixed = None
    if len(streams) == 1 and not hasattr(streams[0], "random"):
        fixed = streams[0]
    elif len(streams) < n_iters + 1:
        raise ConfigurationError(f"need {n_iters + 1} streams, got {len(streams)}")
    if method == "adagrad":
        eta, b0 = float(params["eta"]), float(params["b0"])
        if eta <= 0 or b0 <= 0:
            raise ConfigurationError("eta and b0 must be positive")
        if lipschitz is not None and 4 * eta * lipschitz >= math.sqrt(b0):
            warnings.warn(
                f"4 eta M = {4 * eta * lipschitz:.3g} >= sqrt(b0) = {math.sqrt(b0):.3g}; "
                "the convergence bound does not apply",
                RuntimeWarning,
                stacklevel=2,
            )
        state = OptimizerState(u0, b=b0)
    else:
        eta0 = float(params["eta0"])
        if eta0 <= 0:
            raise ConfigurationError("eta0 must be positive")
        state = OptimizerState(u0)
    u0p, projected0 = project_control(u0, u_max, grid)
    if projected0:
        state = replace(state, u=u0p, n_projected=1, last_projected=True)
    trace = OptimizationTrace(method, dict(params))
    trace.iterates = [state.u] if keep_iterates else None
    trace.gradients = [] if keep_gradients else None
    if 0 in snapshot_at:
        trace.snapshots[0] = state.u.copy()
    for j in range(n_iters + 1):
        t0 = time.perf_counter()
        try:
            sample = fixed if fixed is not None else problem.draw(streams[j], stream=j)
            f, g = cost_and_gradient(state.u, sample, problem)
            gn = norm(g, grid)
            if not math.isfinite(gn):
                raise SolverError(f"non-finite gradient norm at iteration {j}")
        except (SolverError, FloatingPointError) as exc:
            trace.error = str(exc)
            break
        step = eta / state.b if method == "adagrad" else eta0 / (j + 1)
        rec = StepRecord(j, f, gn, step, state.b, state.last_projected, 0.0)
        if keep_gradients:
            trace.gradients.append(g)
        if callback is not None:
            callback(j, state, f, g)
        if j < n_iters:
            if method == "adagrad":
                state = adagrad_step(state, g, grid, eta, u_max, grad_norm=gn)
            else:
                state = sgd_step(state, g, grid, eta0, u_max, grad_norm=gn)
            if keep_iterates:
                trace.iterates.append(state.u)
            if state.j in snapshot_at:
                trace.snapshots[state.j] = state.u.copy()
        rec.wall_time = time.perf_counter() - t0
        trace.records.append(rec)
    trace.final = state.u
    trace.averaged = state.averaged
    trace.n_projected = state.n_projected
    return trace


def averaged_iterate(trace, n):
    """``(u_1 + ... + u_n) / n`` from a trace."""
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    if n > len(trace.records) - 1:
        raise ConfigurationError(f"trace has only {len(trace.records) - 1} iterations")
    if trace.iterates is not None:
        acc = np.zeros_like(trace.iterates[1])
        for u in trace.iterates[1 : n + 1]:
            acc += u
        return acc / n
    if n == len(trace.records) - 1:
        return trace.averaged
    raise ConfigurationError("iterates were not kept; only the final average is available")


def gamma_factor(M, eta, b0, n, c_gamma=1.0):
    ratio = 4.0 * eta * M / math.sqrt(b0)
    if ratio >= 1.0:
        raise HypothesisViolation(f"4 eta M / sqrt(b0) = {ratio:.4g} must be < 1")
    return c_gamma * (1.0 + eta**2 * math.log(n)) / (eta * (1.0 - ratio))


def theorem_bound(M, sigma2, eta, b0, n, c_gamma=1.0):
    """Bound on ``E[sqrt(F(u_bar_n) - F(u*))]`` for AdaGrad.

    ``gamma`` is known only up to a constant; ``c_gamma`` supplies it.
    """
    if c_gamma <= 0:
        raise ConfigurationError("c_gamma must be positive")
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    gamma = gamma_factor(M, eta, b0, n, c_gamma)
    return max(gamma * math.sqrt(M), (b0 + n * sigma2) ** 0.25 * math.sqrt(gamma)) / math.sqrt(n)
