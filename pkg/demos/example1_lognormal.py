"""
Example 1: heat equation with a lognormal random diffusivity.

The state solves y_t - div(a(x, w) grad y) = u on (0, 1) x (0, 0.2] with
homogeneous Dirichlet data and y(0) = x(1 - x). We look for a deterministic
source u that keeps the expected state close to zero, at a control cost of
alpha/2 ||u||^2.

Run with ``python demos/example1_lognormal.py``.
"""

import numpy as np

from adagrad_control import compute_constants, example1, make_rng_streams, norm, run_optimizer
from adagrad_control.experiments import DIAGNOSTIC_KEY, TRAINING_KEY, state_statistics

# %% the problem and its constants
problem = example1()
const = compute_constants(problem)
print(f"Poincare constant {const.poincare:.5f}, Lipschitz constant M = {const.M:.4f}")
print(f"KL basis keeps {problem.basis.modes} modes, {problem.basis.captured_fraction:.4%} of the variance")

# %% AdaGrad-norm from u0 = 2
# Each iteration draws one diffusivity realization from its own seeded stream.
trace = run_optimizer(
    "adagrad", problem, {"u0": 2.0, "eta": 1.0, "b0": 0.1}, 50,
    make_rng_streams(7, 51, TRAINING_KEY),
)
cost = trace.column("cost")
print("\niter   sample cost   |grad|     step")
for j in (0, 1, 2, 5, 10, 20, 50):
    r = trace.records[j]
    print(f"{j:>4} {r.cost:>12.4e} {r.grad_norm:>9.3e} {r.step_size:>8.4f}")

# %% what the control does to the mean state
diag = problem.samples(make_rng_streams(7, 100, DIAGNOSTIC_KEY))
mean_u, var_u = state_statistics(trace.final, diag, problem)
mean_0, _ = state_statistics(problem.grid.zeros(), diag, problem)
print(f"\n||u_50|| = {norm(trace.final, problem.grid):.4f}")
print(f"max |E y| at t = T: controlled {np.abs(mean_u[-1]).max():.4e}, u = 0 {np.abs(mean_0[-1]).max():.4e}")
print(f"max state standard deviation {np.sqrt(var_u.max()):.3e}")
