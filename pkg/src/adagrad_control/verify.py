"""
Numerical verification suites.

Each suite returns a report dictionary::

    {"suite": name, "passed": bool, "checks": [{"name", "value", "tolerance",
     "comparison", "passed", ...}], "details": {...}}

which the command line writes as JSON. Suites:

``gradient``      adjoint gradient against central finite differences
``convexity``     strong convexity inequality on random triples
``lipschitz``     gradient Lipschitz ratio against the constant ``M``
``solver-order``  implicit Euler against a closed-form heat solution
``kl``            Karhunen-Loeve spectrum and sampled covariance
``rate``          replicated AdaGrad runs against a sample-average optimum
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError
from .experiments import DIAGNOSTIC_KEY, SAA_KEY, build_problem
from .grid import assemble_operators, build_grid, inner_product, norm
from .objective import compute_constants, cost_and_gradient, hessian_action, saa_solve, sample_cost
from .optimize import averaged_iterate, run_optimizer
from .pde import propagator
from .problems import example1
from .randomness import make_rng_streams, replication_streams, sample_lognormal_field, squared_exponential

__all__ = ["SUITES", "run_suite", "check", "gradient_suite", "convexity_suite", "lipschitz_suite",
           "solver_order_suite", "kl_suite", "rate_suite", "heat_solution_error", "loglog_slope"]

VERIFY_KEY = 3


def check(name, value, tolerance, comparison="<="):
    """One pass/fail entry; ``comparison`` is how ``value`` must relate to ``tolerance``."""
    if comparison == "<=":
        ok = value <= tolerance
    elif comparison == ">=":
        ok = value >= tolerance
    elif comparison == "in":
        ok = tolerance[0] <= value <= tolerance[1]
    else:
        raise ValueError(comparison)
    return {"name": name, "value": value, "tolerance": tolerance, "comparison": comparison, "passed": bool(ok)}


def _report(suite, checks, **details):
    return {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks, "details": details}


def _random_field(rng, grid, scale=1.0):
    return scale * rng.standard_normal(grid.field_shape)


def gradient_suite(config):
    """Central differences of the discrete cost along random directions.

    The sample cost is quadratic in ``u`` so the central quotient is exact up
    to rounding; the relative mismatch measures the adjoint's exactness.
    """
    problem = build_problem(config)
    grid = problem.grid
    rng = make_rng_streams(config.seed, 1, VERIFY_KEY)[0]
    sample = problem.draw(make_rng_streams(config.seed, 1, DIAGNOSTIC_KEY)[0], stream=0)
    u = grid.constant(config["u0"]) + _random_field(rng, grid, 0.1)
    f, g = cost_and_gradient(u, sample, problem)
    h = config["verify.fd_step"]
    errors = []
    for _ in range(config["verify.directions"]):
        v = _random_field(rng, grid)
        v /= norm(v, grid)
        fd = (sample_cost(u + h * v, sample, problem) - sample_cost(u - h * v, sample, problem)) / (2 * h)
        dd = inner_product(g, v, grid)
        errors.append(abs(fd - dd) / max(abs(dd), abs(fd), 1e-300))
    return _report(
        "gradient",
        [check("max_relative_fd_mismatch", float(max(errors)), 1e-6)],
        relative_errors=[float(e) for e in errors],
        step=h,
    )


def _triples(config, problem):
    grid = problem.grid
    rng = make_rng_streams(config.seed, 1, VERIFY_KEY)[0]
    streams = make_rng_streams(config.seed, config["verify.triples"], DIAGNOSTIC_KEY)
    for j, s in enumerate(streams):
        yield _random_field(rng, grid), _random_field(rng, grid), problem.draw(s, stream=j)


def convexity_suite(config):
    """Strong convexity on random triples ``(u, v, omega)``.

    Both the monotonicity form ``<grad f(v) - grad f(u), v - u> >= alpha ||v - u||^2``
    and the function-value form
    ``f(v) >= f(u) + <grad f(u), v - u> + alpha/2 ||v - u||^2`` are checked;
    margins are divided by ``||v - u||^2`` so they do not depend on the scale
    of the random controls.
    """
    problem = build_problem(config)
    grid, alpha = problem.grid, problem.alpha
    margins, mono = [], []
    for u, v, s in _triples(config, problem):
        fu, gu = cost_and_gradient(u, s, problem)
        fv, gv = cost_and_gradient(v, s, problem)
        d = v - u
        dd = inner_product(d, d, grid)
        margins.append((fv - fu - inner_product(gu, d, grid)) / dd - 0.5 * alpha)
        mono.append(inner_product(gv - gu, d, grid) / dd - alpha)
    margins, mono = np.array(margins), np.array(mono)
    n_pass = int(np.sum(mono >= -1e-10))
    return _report(
        "convexity",
        [
            check("min_monotonicity_margin", float(mono.min()), -1e-10, ">="),
            check("min_function_value_margin", float(margins.min()), -1e-10, ">="),
        ],
        passes=f"{n_pass}/{len(margins)}",
        margins=margins.tolist(),
    )


def lipschitz_suite(config):
    """Largest ``||grad f(u) - grad f(v)|| / ||u - v||`` against ``1.01 M``."""
    problem = build_problem(config)
    grid = problem.grid
    M = compute_constants(problem).M
    ratios = []
    for u, v, s in _triples(config, problem):
        _, gu = cost_and_gradient(u, s, problem)
        _, gv = cost_and_gradient(v, s, problem)
        ratios.append(norm(gu - gv, grid) / norm(u - v, grid))
    return _report(
        "lipschitz",
        [check("max_gradient_ratio", float(max(ratios)), 1.01 * M)],
        M=M,
        ratios=[float(r) for r in ratios],
    )


def heat_solution_error(n_cells, n_t, T, dim=1):
    """Space-time L2 relative error against ``exp(-d pi^2 t) prod sin(pi x_k)``."""
    grid = build_grid(dim, [0.0, 1.0], n_cells, T, n_t)
    shape = np.prod(np.sin(np.pi * grid.nodes), axis=1)
    exact = np.exp(-dim * np.pi**2 * grid.times)[:, None] * shape[None, :]
    y = propagator(assemble_operators(grid, 1.0)).forward(None, shape)
    return norm(y - exact, grid) / norm(exact, grid)


def solver_order_suite(config):
    """Closed-form heat solution on the configured resolution and on half of it.

    For a one-dimensional lognormal configuration its own cell count, step
    count and horizon are used; otherwise the unit interval at 50 x 100 over
    ``T = 0.2``.
    """
    if config.problem != "example2" and config.get("domain.dim", 1) == 1:
        nc, nt, T = config["grid.n_cells"][0], config["grid.n_t"], config["T"]
    else:
        nc, nt, T = 50, 100, 0.2
    if nc % 2 or nt % 2:
        raise ConfigurationError("solver-order needs even cell and step counts")
    fine = heat_solution_error(nc, nt, T)
    coarse = heat_solution_error(nc // 2, nt // 2, T)
    fine2 = heat_solution_error(16, 32, T, dim=2)
    coarse2 = heat_solution_error(8, 16, T, dim=2)
    return _report(
        "solver-order",
        [
            check("relative_error_fine", fine, 2e-2),
            check("error_ratio", coarse / fine, 1.8, ">="),
        ],
        resolutions={"fine": [nc, nt], "coarse": [nc // 2, nt // 2]},
        errors={"fine": fine, "coarse": coarse, "fine_2d": fine2, "coarse_2d": coarse2},
        error_ratio_2d=coarse2 / fine2,
        T=T,
    )


def kl_covariance_errors(basis, grid, n_draws, seed):
    """Relative errors of the sampled and of the truncated covariance.

    Only node pairs where the kernel exceeds ``0.1 sigma2`` are compared. The
    sample mean is known to be zero and is not subtracted.
    """
    streams = make_rng_streams(seed, n_draws, VERIFY_KEY)
    X = np.stack([sample_lognormal_field(basis, rng).log_field for rng in streams])
    C = X.T @ X / n_draws
    K = squared_exponential(grid.nodes, grid.nodes, basis.sigma2, basis.corr_length)
    mask = K > 0.1 * basis.sigma2
    sampled = np.abs(C - K)[mask] / K[mask]
    truncated = np.abs(basis.covariance() - K)[mask] / K[mask]
    rho = K[mask] / basis.sigma2
    # standard error of a Gaussian second moment, relative to its mean
    z = np.abs(C - K)[mask] / (K[mask] * np.sqrt((1 + rho**-2) / n_draws))
    return sampled, truncated, z


def kl_suite(config):
    if config.problem == "example2":
        raise ConfigurationError("the kl suite needs a lognormal-diffusion problem")
    problem = build_problem(config)
    basis, grid = problem.basis, problem.grid
    lam = basis.eigenvalues
    tol = config["verify.kl_tolerance"]
    sampled, truncated, z = kl_covariance_errors(basis, grid, config["verify.kl_draws"], config.seed)
    return _report(
        "kl",
        [
            check("max_eigenvalue_increase", float(np.max(np.diff(lam), initial=0.0)), 0.0),
            check("min_eigenvalue", float(lam.min()), 0.0, ">="),
            check("max_relative_sampled_covariance_error", float(sampled.max()), tol),
            check("max_relative_truncated_covariance_error", float(truncated.max()), tol),
        ],
        modes=basis.modes,
        captured_fraction=basis.captured_fraction,
        draws=config["verify.kl_draws"],
        fraction_entries_above_tolerance=float(np.mean(sampled > tol)),
        mean_relative_sampled_error=float(sampled.mean()),
        max_standardized_error=float(z.max()),
        fraction_standardized_above_3=float(np.mean(z > 3)),
    )


def loglog_slope(n, values):
    return float(np.polyfit(np.log(n), np.log(values), 1)[0])


def rate_study(config, progress=None):
    """Optimality gaps of averaged AdaGrad iterates over independent replications.

    Returns ``(ns, gaps, saa)`` with ``gaps`` of shape ``(replications, len(ns))``.
    The gap ``F(u_bar_n) - F(u*)`` is evaluated exactly for the sample-average
    objective, where it equals ``1/2 <e, H e>`` with ``e = u_bar_n - u*``.
    """
    c = config
    problem = example1(
        n_cells=c["rate.n_cells"],
        n_t=c["rate.n_t"],
        T=c["T"],
        alpha=c["alpha"],
        sigma2=c["kl.sigma2"],
        corr_length=c["kl.corr_length"],
        modes=c["kl.modes"],
        a_min=c["kl.a_min"],
    )
    grid = problem.grid
    saa_samples = problem.samples(make_rng_streams(c["rate.seed"], c["rate.saa_samples"], SAA_KEY))
    saa = saa_solve(saa_samples, problem, tol=c["rate.saa_tol"])
    ns = np.unique(np.round(np.geomspace(c["rate.n_min"], c["rate.n_max"], c["rate.points"])).astype(int))
    n_max = int(ns[-1])
    params = {"u0": c["u0"], "eta": c["rate.eta"], "b0": c["rate.b0"]}
    errors = []
    for r in range(c["rate.replications"]):
        trace = run_optimizer("adagrad", problem, params, n_max, replication_streams(c.seed, r, n_max + 1))
        if trace.error:
            raise RuntimeError(trace.error)
        for n in ns:
            errors.append(averaged_iterate(trace, int(n)) - saa.u)
        if progress:
            progress(r)
    E = np.stack(errors, axis=-1)
    HE = hessian_action(E, saa_samples, problem)
    gaps = 0.5 * inner_product(E, HE, grid)
    gaps = np.asarray(gaps).reshape(c["rate.replications"], len(ns))
    return ns, gaps, saa, problem


def rate_suite(config, progress=None):
    c = config
    ns, gaps, saa, problem = rate_study(config, progress)
    mean_gap = gaps.mean(axis=0)
    slope = loglog_slope(ns, mean_gap)
    rng = np.random.default_rng(np.random.SeedSequence(c["rate.seed"], spawn_key=(VERIFY_KEY,)))
    boot = []
    for _ in range(1000):
        idx = rng.integers(0, gaps.shape[0], gaps.shape[0])
        boot.append(loglog_slope(ns, gaps[idx].mean(axis=0)))
    lo, hi = np.percentile(boot, [2.5, 97.5])
    M = compute_constants(problem).M
    return _report(
        "rate",
        [
            check("saa_gradient_norm", saa.grad_norm, c["rate.saa_tol"]),
            check("loglog_slope", slope, [-1.2, -0.4], "in"),
        ],
        slope_ci95=[float(lo), float(hi)],
        n=ns.tolist(),
        mean_gap=mean_gap.tolist(),
        max_relative_spread=float(np.max(gaps.std(axis=0, ddof=1) / mean_gap)),
        replications=int(gaps.shape[0]),
        saa_samples=c["rate.saa_samples"],
        saa_iterations=saa.iterations,
        eta=c["rate.eta"],
        b0=c["rate.b0"],
        four_eta_M=4 * c["rate.eta"] * M,
        sqrt_b0=math.sqrt(c["rate.b0"]),
    )


SUITES = {
    "gradient": gradient_suite,
    "convexity": convexity_suite,
    "lipschitz": lipschitz_suite,
    "solver-order": solver_order_suite,
    "kl": kl_suite,
    "rate": rate_suite,
}


def run_suite(config, name):
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    report = SUITES[name](config)
    report["problem"] = config.problem
    report["seed"] = config.seed
    return report
