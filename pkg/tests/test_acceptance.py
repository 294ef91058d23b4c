"""
Acceptance gate.

Each test reproduces one acceptance criterion at its stated tolerance and
records a one-line PASS/FAIL verdict with the measured values; the verdicts
are printed together at the end of the pytest run (see ``conftest.py``).
Criteria that fail are reported as failures, not skipped or relaxed.
"""

import time

import numpy as np
import pytest

from adagrad_control.config import ExperimentConfig
from adagrad_control.experiments import DIAGNOSTIC_KEY, TRAINING_KEY, run_experiment, state_statistics
from adagrad_control.grid import norm
from adagrad_control.objective import compute_constants
from adagrad_control.optimize import run_optimizer
from adagrad_control.problems import example1
from adagrad_control.randomness import make_rng_streams
from adagrad_control.verify import (
    convexity_suite,
    gradient_suite,
    kl_covariance_errors,
    lipschitz_suite,
    loglog_slope,
    rate_suite,
    solver_order_suite,
)

pytestmark = pytest.mark.slow

VERDICTS = []


def verdict(criterion, ok, text):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {text}"
    VERDICTS.append(line)
    print(line)
    return ok


def _read_csv(path):
    rows = [ln for ln in open(path) if not ln.startswith("#")]
    return np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]])


@pytest.fixture(scope="module")
def ex1_run():
    """Example 1 defaults: u0 = 2, b0 = 0.1, eta = 1, alpha = 0.1, 50 iterations, seed 7."""
    p = example1()
    tr = run_optimizer("adagrad", p, {"u0": 2.0, "eta": 1.0, "b0": 0.1}, 50, make_rng_streams(7, 51, TRAINING_KEY))
    return p, tr


def test_criterion_1_gradient_exactness():
    t0 = time.perf_counter()
    rep = gradient_suite(ExperimentConfig.from_dict({"problem": "example1"}))
    elapsed = time.perf_counter() - t0
    err = rep["checks"][0]["value"]
    ok = err <= 1e-6 and elapsed <= 30 and len(rep["details"]["relative_errors"]) == 10
    assert verdict(1, ok, f"max relative FD mismatch {err:.2e} <= 1e-6 over 10 directions, {elapsed:.1f} s <= 30 s")


def test_criterion_2_solver_accuracy():
    rep = solver_order_suite(ExperimentConfig.from_dict({"problem": "example1"}))
    e = rep["details"]["errors"]
    ratio = e["coarse"] / e["fine"]
    ok = e["fine"] <= 2e-2 and ratio >= 1.8
    assert verdict(2, ok, f"relative L2 error {e['fine']:.3e} <= 2e-2 at 50x100; ratio (25x50)/(50x100) = {ratio:.3f} >= 1.8")


def test_criterion_3_convexity_and_lipschitz():
    cfg = ExperimentConfig.from_dict({"problem": "example1", "verify.triples": 100})
    t0 = time.perf_counter()
    conv = convexity_suite(cfg)
    lip = lipschitz_suite(cfg)
    elapsed = time.perf_counter() - t0
    M = lip["details"]["M"]
    margin = conv["checks"][0]["value"]
    ratio = lip["checks"][0]["value"]
    ok = conv["passed"] and lip["passed"] and abs(M - 1.1266) < 1e-4 and elapsed <= 300
    assert verdict(
        3,
        ok,
        f"convexity {conv['details']['passes']} with min margin {margin:.3e} >= -1e-10; "
        f"max gradient ratio {ratio:.4f} <= 1.01 M = {1.01 * M:.4f} (M = {M:.4f}); {elapsed:.0f} s",
    )


def test_criterion_4_example1_reproduction(ex1_run):
    p, tr = ex1_run
    cost = tr.column("cost")
    # iteration k (k = 1..50) evaluates the sample cost at u_{k-1}, i.e. record k - 1
    it_cost = cost[:50]
    k = np.arange(1, 51)
    stationary = np.median(it_cost[10:])
    entered = int(k[np.argmax(it_cost <= 2 * stationary)])
    a_ok = entered <= 10 and it_cost[0] >= 10 * stationary
    slope = loglog_slope(k[:10], it_cost[:10])
    slope_alt = loglog_slope(np.arange(1, 11), cost[1:11])
    b_ok = slope <= -0.7

    diag = p.samples(make_rng_streams(7, 100, DIAGNOSTIC_KEY))
    mean_c, _ = state_statistics(tr.final, diag, p)
    mean_0, _ = state_statistics(p.grid.zeros(), diag, p)
    mean_init, _ = state_statistics(p.grid.constant(2.0), diag, p)
    ratio = np.abs(mean_c).max() / np.abs(mean_0).max()
    ratio_T = np.abs(mean_c[-1]).max() / np.abs(mean_0[-1]).max()
    ratio_T_init = np.abs(mean_c[-1]).max() / np.abs(mean_init[-1]).max()
    c_ok = ratio <= 0.2

    verdict("4a", a_ok, f"cost enters the stationary band (<= 2 x {stationary:.2e}) at iteration {entered} <= 10, initial cost {it_cost[0]:.2e} >= 10 x band")
    verdict("4b", b_ok, f"log-log slope of sample cost over iterations 1-10 = {slope:.3f} <= -0.7 (records 1-10 give {slope_alt:.3f})")
    verdict(
        "4c",
        c_ok,
        f"max |mean state| controlled / uncontrolled = {ratio:.3f} <= 0.2 "
        f"(t = T slice vs u = 0: {ratio_T:.3f}; t = T slice vs initial guess u0 = 2: {ratio_T_init:.3f})",
    )
    assert a_ok and b_ok and c_ok


def test_criterion_5_robustness_small_alpha():
    p = example1(alpha=0.01)
    res = {}
    for method, params in (("sgd", {"u0": 2.0, "eta0": 10.0}), ("adagrad", {"u0": 2.0, "eta": 1.0, "b0": 0.1})):
        tr = run_optimizer(method, p, params, 200, make_rng_streams(7, 201, TRAINING_KEY))
        gn = tr.column("grad_norm")
        res[method] = (gn[0], np.median(gn[-20:]))
    s0, s_end = res["sgd"]
    a0, a_end = res["adagrad"]
    sgd_ok = s_end >= s0
    ada_ok = a_end < 0.5 * a0
    verdict(
        5,
        sgd_ok and ada_ok,
        f"SGD final median |grad| / initial = {s_end / s0:.3f} (required >= 1); "
        f"AdaGrad = {a_end / a0:.4f} (required < 0.5); alpha = 0.01, initial step 10, 200 iterations",
    )
    assert sgd_ok and ada_ok


def test_criterion_6_rate_interpolation():
    cfg = ExperimentConfig.from_dict({"problem": "example1"})
    t0 = time.perf_counter()
    rep = rate_suite(cfg)
    elapsed = time.perf_counter() - t0
    slope = rep["checks"][1]["value"]
    lo, hi = rep["details"]["slope_ci95"]
    ok = rep["passed"] and elapsed <= 1800 and rep["details"]["replications"] >= 20
    # context: the same study with Example 1's own step parameters, which
    # violate 4 eta M < sqrt(b0)
    native = rate_suite(cfg.with_overrides(**{"rate.eta": 1.0, "rate.b0": 0.1}))
    verdict(
        6,
        ok,
        f"gap slope {slope:.3f} in [-1.2, -0.4] (95% CI [{lo:.2f}, {hi:.2f}], max replication spread "
        f"{rep['details']['max_relative_spread']:.1%}), SAA N=500 gradient norm {rep['checks'][0]['value']:.1e} <= 1e-8, "
        f"eta = {rep['details']['eta']}, b0 = {rep['details']['b0']} (4 eta M = {rep['details']['four_eta_M']:.3f} < sqrt(b0)); "
        f"{elapsed:.0f} s; with eta = 1, b0 = 0.1 the slope is {native['checks'][1]['value']:.3f}",
    )
    assert ok


def test_criterion_7_kl_quality():
    p = example1()
    b = p.basis
    lam = b.eigenvalues
    order_ok = bool(np.all(np.diff(lam) <= 0) and np.all(lam >= 0) and b.modes == 40)
    sampled, truncated, z = kl_covariance_errors(b, p.grid, 10_000, seed=7)
    cov_ok = sampled.max() <= 0.05
    verdict(
        7,
        order_ok and cov_ok,
        f"40 eigenvalues nonincreasing and nonnegative: {order_ok}; max relative error of 10^4-draw covariance "
        f"{sampled.max():.3f} <= 0.05 ({np.mean(sampled > 0.05):.1%} of entries above; truncated covariance "
        f"error {truncated.max():.1e}; max standardized error {z.max():.2f})",
    )
    assert order_ok and cov_ok


@pytest.fixture(scope="module")
def ex2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex2")
    res = run_experiment(ExperimentConfig.from_dict({"problem": "example2", "seed": 7}), out=out)
    return res, out


def test_criterion_8_example2_energy(ex2_run):
    res, out = ex2_run
    assert res.status == 0
    e = _read_csv(out / "energy.csv")
    t, e0, ec = e[:, 0], e[:, 1], e[:, 2]
    after = t > 0.05 * t[-1]
    viol = np.flatnonzero(after & (ec > e0))
    level_ok = viol.size == 0
    red = res.metadata["energy"]["reduction"]
    red_ok = red >= 0.25
    detail = ""
    if viol.size:
        detail = (
            f"; {viol.size} levels violate, in t = [{t[viol].min() / 60:.1f}, {t[viol].max() / 60:.1f}] min, "
            f"largest excess {np.max(ec[viol] - e0[viol]):.2e} vs peak uncontrolled energy {e0.max():.2e}"
        )
    verdict("8a", level_ok, f"controlled mean energy <= uncontrolled at every level beyond 5% of the horizon{detail}")
    verdict("8b", red_ok, f"time-integrated mean energy reduced by {red:.1%} >= 25%")
    assert level_ok and red_ok


def test_criterion_9_determinism(tmp_path):
    cfgs = [
        {"problem": "example1"},
        {"problem": "example2", "grid.n_cells": [6, 12], "grid.n_t": 48, "iters": 5, "diagnostics.samples": 5,
         "diagnostics.constants_samples": 5},
    ]
    identical = True
    n_files = 0
    for i, raw in enumerate(cfgs):
        cfg = ExperimentConfig.from_dict(raw)
        a = run_experiment(cfg, out=tmp_path / f"a{i}")
        b = run_experiment(cfg, out=tmp_path / f"b{i}")
        for fa, fb in zip(a.files, b.files):
            n_files += 1
            identical &= fa.name == fb.name and fa.read_bytes() == fb.read_bytes()
    assert verdict(9, identical, f"{n_files} output files byte-identical across two runs with the same config and seed")


def test_example1_constants_match_theory(ex1_run):
    """Supporting check: the constants the criteria rely on."""
    p, tr = ex1_run
    c = compute_constants(p)
    assert c.M == pytest.approx(1.1266, abs=1e-4)
    assert norm(tr.final, p.grid) < norm(p.grid.constant(2.0), p.grid)
