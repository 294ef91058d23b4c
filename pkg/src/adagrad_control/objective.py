"""
Sample cost, adjoint gradient, Monte Carlo risk estimates and problem constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoercivityError, ConfigurationError
from .grid import inner_product, norm, spatial_inner_product
from .pde import propagator

__all__ = [
    "ProblemConstants",
    "RiskEstimate",
    "EnvelopeReport",
    "solve_state",
    "sample_cost",
    "sample_gradient",
    "cost_and_gradient",
    "hessian_action",
    "saa_solve",
    "SAAResult",
    "estimate_risk",
    "gradient_deviations",
    "variance_envelope_check",
    "variance_assumption_check",
    "compute_constants",
    "heat_energy",
]


def solve_state(u, sample, problem):
    source = problem.control_gain * np.asarray(u, dtype=float)
    if sample.load is not None:
        source = source + sample.load
    return propagator(sample.ops).forward(source, problem.y0, problem.boundary_value)


def _tracking(y, problem):
    return y - problem.target_field()


def sample_cost(u, sample, problem):
    """``f(u, omega) = 1/2 ||y - y_d||^2 + alpha/2 ||u||^2``."""
    grid = problem.grid
    r = _tracking(solve_state(u, sample, problem), problem)
    return 0.5 * inner_product(r, r, grid) + 0.5 * problem.alpha * inner_product(u, u, grid)


def cost_and_gradient(u, sample, problem, return_state=False):
    """Sample cost and its L2 gradient ``gain * p + alpha * u``.

    One forward and one adjoint solve, sharing the factorization of the sample.
    """
    grid = problem.grid
    u = np.asarray(u, dtype=float)
    y = solve_state(u, sample, problem)
    r = _tracking(y, problem)
    p = propagator(sample.ops).adjoint(r)
    f = 0.5 * inner_product(r, r, grid) + 0.5 * problem.alpha * inner_product(u, u, grid)
    grad = problem.control_gain * p + problem.alpha * u
    if return_state:
        return f, grad, y
    return f, grad


def sample_gradient(u, sample, problem):
    return cost_and_gradient(u, sample, problem)[1]


def hessian_action(v, samples, problem):
    """Product of the Hessian of the sample-average cost with ``v``.

    ``v`` may carry a trailing batch axis. The cost is quadratic, so this is
    ``alpha v + gain^2 mean_i S_i^* S_i v``.
    """
    v = np.asarray(v, dtype=float)
    g = problem.control_gain
    acc = np.zeros_like(v)
    for s in samples:
        prop = propagator(s.ops)
        acc += prop.adjoint(prop.forward(g * v))
    return problem.alpha * v + (g * g / len(samples)) * acc


@dataclass
class SAAResult:
    u: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool


def saa_solve(samples, problem, tol=1e-8, max_iter=200, u0=None):
    """Minimize the sample-average cost over ``samples`` by conjugate gradients.

    The cost is quadratic, so its minimizer solves ``H u = -grad(0)``; CG runs
    in the space-time L2 inner product with :func:`hessian_action` and stops
    when the recomputed gradient norm is at most ``tol``.
    """
    grid = problem.grid

    def mean_grad(u):
        return estimate_risk(u, len(samples), None, problem, samples=samples).mean_gradient

    x = grid.zeros() if u0 is None else np.array(u0, dtype=float)
    r = -mean_grad(x)
    d = r.copy()
    rr = inner_product(r, r, grid)
    it = 0
    # CG residuals drift from the true gradient; restart from a fresh gradient
    for _ in range(3):
        while it < max_iter and math.sqrt(rr) > 0.1 * tol:
            Hd = hessian_action(d, samples, problem)
            a = rr / inner_product(d, Hd, grid)
            x = x + a * d
            r = r - a * Hd
            rr_new = inner_product(r, r, grid)
            d = r + (rr_new / rr) * d
            rr = rr_new
            it += 1
        g = mean_grad(x)
        gn = norm(g, grid)
        if gn <= tol or it >= max_iter:
            break
        r = -g
        d = r.copy()
        rr = inner_product(r, r, grid)
    return SAAResult(x, float(gn), it, bool(gn <= tol))


@dataclass
class RiskEstimate:
    mean_cost: float
    var_cost: float
    mean_gradient: np.ndarray
    grad_variance: float
    n: int
    degenerate: bool = False

    @property
    def cost_std_error(self):
        return math.sqrt(self.var_cost / self.n)

    @property
    def gradient_std_error(self):
        """Standard error of the mean gradient, measured in the L2 norm."""
        return math.sqrt(self.grad_variance / self.n)


def estimate_risk(u, N, streams, problem, samples=None):
    """Monte Carlo estimate of ``F(u)``, ``grad F(u)`` and their spread.

    Samples are drawn from ``streams[0..N-1]`` in order and reduced in that
    order, so the result depends only on the streams. Variances use the
    ``N - 1`` normalization; ``N = 1`` reports zero with ``degenerate=True``.
    Pass ``samples`` to reuse already drawn realizations.
    """
    if N < 1:
        raise ConfigurationError("need N >= 1")
    if samples is None:
        if len(streams) < N:
            raise ConfigurationError(f"{N} samples requested but only {len(streams)} streams")
        samples = problem.samples(streams[:N])
    samples = samples[:N]
    grid = problem.grid
    costs = np.empty(N)
    # shift by the first sample so identical samples give exact zeros
    g0 = None
    sum_dg = None
    sum_sq = 0.0
    for i, s in enumerate(samples):
        costs[i], g = cost_and_gradient(u, s, problem)
        if g0 is None:
            g0 = g
            sum_dg = np.zeros_like(g)
            continue
        dg = g - g0
        sum_dg += dg
        sum_sq += inner_product(dg, dg, grid)
    dc = costs - costs[0]
    mean_cost = costs[0] + float(np.mean(dc))
    mean_dg = sum_dg / N
    mean_grad = g0 + mean_dg
    if N == 1:
        return RiskEstimate(mean_cost, 0.0, mean_grad, 0.0, 1, degenerate=True)
    var_cost = float(np.sum((dc - np.mean(dc)) ** 2) / (N - 1))
    grad_var = max(sum_sq - N * inner_product(mean_dg, mean_dg, grid), 0.0) / (N - 1)
    return RiskEstimate(mean_cost, var_cost, mean_grad, float(grad_var), N)


def gradient_deviations(iterates, sample_grads, problem, streams, n_aux):
    """``||grad f_k(u_k) - grad F(u_k)||^2`` along a trajectory.

    ``grad F(u_k)`` is replaced by a Monte Carlo mean over ``n_aux`` auxiliary
    samples (drawn once and shared by all iterates). Returns the squared
    deviations and the standard error of each auxiliary mean.
    """
    grid = problem.grid
    aux = problem.samples(streams[:n_aux])
    dev2, se = [], []
    for u, g in zip(iterates, sample_grads):
        est = estimate_risk(u, n_aux, None, problem, samples=aux)
        d = g - est.mean_gradient
        dev2.append(inner_product(d, d, grid))
        se.append(est.gradient_std_error)
    return np.asarray(dev2), np.asarray(se)


@dataclass
class EnvelopeReport:
    """Running maximum of squared gradient deviations versus ``sigma2 (1 + ln j)``."""

    running_max: np.ndarray
    bound: np.ndarray
    satisfied: np.ndarray
    sigma2: float
    calibrated_sigma2: float
    std_errors: np.ndarray | None = None

    @property
    def all_satisfied(self):
        return bool(np.all(self.satisfied))

    def rows(self):
        for j, (m, b, ok) in enumerate(zip(self.running_max, self.bound, self.satisfied), 1):
            yield {"j": j, "running_max": m, "bound": b, "satisfied": bool(ok)}


def variance_envelope_check(deviations, sigma2, std_errors=None):
    """Compare ``max_{k<=j} d_k`` with ``sigma2 (1 + ln j)`` for ``j = 1..n``.

    ``deviations[k-1]`` is the squared deviation at iteration ``k``. The
    calibrated value is the smallest ``sigma2`` for which every ``j`` passes.
    This is a spot check along one trajectory, not a proof of the condition.
    """
    d = np.asarray(deviations, dtype=float)
    if d.size == 0:
        raise ConfigurationError("empty deviation trace")
    runmax = np.maximum.accumulate(d)
    growth = 1.0 + np.log(np.arange(1, d.size + 1))
    bound = sigma2 * growth
    return EnvelopeReport(
        running_max=runmax,
        bound=bound,
        satisfied=runmax <= bound,
        sigma2=float(sigma2),
        calibrated_sigma2=float(np.max(runmax / growth)),
        std_errors=None if std_errors is None else np.asarray(std_errors),
    )


def variance_assumption_check(problem, sigma2, K, u_max, streams, n=200):
    """Numerical check of the exponential-moment condition on the data.

    Evaluates ``E[exp(8K^2/sigma2 (X + E X))]`` with
    ``X = ||g||^2 + ||y_d||^2 + ||y0||^2`` against
    ``exp(1 - 16 K^2 u_max^2 / sigma2)``. Returns a dict with both sides (as
    logarithms) and a ``satisfiable`` flag.
    """
    grid = problem.grid
    yd = problem.target_field()
    x = np.empty(n)
    for i, rng in enumerate(streams[:n]):
        s = problem.draw(rng, stream=i)
        g2 = 0.0 if s.load is None else inner_product(s.load, s.load, grid)
        x[i] = g2 + inner_product(yd, yd, grid) + spatial_inner_product(problem.y0, problem.y0, grid)
    c = 8.0 * K**2 / sigma2
    z = c * (x + x.mean())
    log_lhs = float(np.max(z) + np.log(np.mean(np.exp(z - np.max(z)))))
    log_rhs = 1.0 - 16.0 * K**2 * u_max**2 / sigma2
    return {"log_lhs": log_lhs, "log_rhs": log_rhs, "satisfiable": log_lhs <= log_rhs}


@dataclass(frozen=True)
class ProblemConstants:
    alpha: float
    a_min: float
    poincare: float
    M: float
    K: float
    u_max: float
    F_u0: float | None = None
    discrete_poincare: float | None = None

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def lipschitz_constant(alpha, poincare, a_min, gain=1.0):
    return alpha + gain**2 * poincare**4 / a_min**2


def envelope_constant(alpha, poincare, a_min, gain=1.0):
    return max(lipschitz_constant(alpha, poincare, a_min, gain), gain * poincare**2 / a_min)


def discrete_poincare_constant(grid):
    """``1 / sqrt(lambda_min)`` for the unit-diffusivity stiffness/mass pencil."""
    import scipy.linalg
    import scipy.sparse.linalg as spla

    from .grid import assemble_operators

    ops = assemble_operators(grid, 1.0)
    K, M = ops.stiffness_ii, ops.mass_ii
    if K.shape[0] <= 400:
        lam = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
    else:
        lam = spla.eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=0.0, which="LM")[0][0]
    return 1.0 / math.sqrt(lam)


def compute_constants(problem, u0=None, streams=None, n_samples=100, margin=2.0, u_max=None):
    """Lipschitz bound ``M``, envelope ``K`` and admissible radius ``u_max``.

    ``M = alpha + C_p^4 / a_min^2`` and ``K = max(M, C_p^2 / a_min)`` (each
    ``C_p^2 / a_min`` factor is multiplied by the control gain when it is not
    1). Unless ``u_max`` is given it is set to
    ``margin * sqrt(2 F(u0) / alpha)`` with ``F(u0)`` estimated from
    ``n_samples`` draws.
    """
    if problem.a_min <= 0:
        raise CoercivityError("a_min must be positive")
    cp = problem.poincare_constant
    gain = problem.control_gain
    M = lipschitz_constant(problem.alpha, cp, problem.a_min, gain)
    K = envelope_constant(problem.alpha, cp, problem.a_min, gain)
    F0 = None
    if u_max is None:
        if u0 is None or streams is None:
            u_max = math.inf
        else:
            F0 = estimate_risk(u0, n_samples, streams, problem).mean_cost
            u_max = margin * math.sqrt(2.0 * F0 / problem.alpha)
    try:
        cp_h = discrete_poincare_constant(problem.grid)
    except Exception:  # eigensolver trouble only affects the cross-check
        cp_h = None
    return ProblemConstants(problem.alpha, problem.a_min, float(cp), float(M), float(K), float(u_max), F0, cp_h)


def heat_energy(y, grid, reference=0.0):
    """``E(t_n) = int_D (y(x, t_n) - reference)^2 dx`` for every time level."""
    d = np.asarray(y, dtype=float) - reference
    return spatial_inner_product(d, d, grid)
