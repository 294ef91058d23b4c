"""
Stochastic gradient methods for optimal control of parabolic PDEs with
random coefficients and random loads.

The package is organised as a small numerical stack:

``grid``        space-time grid, finite element matrices, inner products
``randomness``  seeded streams, Karhunen-Loeve fields, random heat pulses
``pde``         implicit Euler state solver and its exact discrete adjoint
``problems``    the lognormal-diffusion and battery-cell example problems
``objective``   sample cost and gradient, Monte Carlo risk, problem constants
``optimize``    SGD and AdaGrad with projection onto the admissible ball
``experiments`` configuration-driven runs writing CSV artifacts
``verify``      numerical check suites with machine-readable reports
"""

__version__ = "0.1.0"

from .errors import (
    CoercivityError,
    ConfigurationError,
    HypothesisViolation,
    ShapeError,
    SolverError,
)
from .grid import (
    DiscreteOperators,
    SpaceTimeGrid,
    assemble_operators,
    build_grid,
    inner_product,
    norm,
)
from .randomness import (
    KLBasis,
    PulseConfig,
    kl_decompose,
    make_rng_streams,
    sample_lognormal_field,
    sample_pulse_load,
)
from .pde import solve_adjoint, solve_forward, solve_sensitivity
from .problems import example1, example2
from .objective import (
    compute_constants,
    cost_and_gradient,
    estimate_risk,
    heat_energy,
    hessian_action,
)
from .optimize import (
    adagrad_step,
    averaged_iterate,
    project_control,
    run_optimizer,
    sgd_step,
    theorem_bound,
)

__all__ = [
    "__version__",
    "CoercivityError",
    "ConfigurationError",
    "HypothesisViolation",
    "ShapeError",
    "SolverError",
    "DiscreteOperators",
    "SpaceTimeGrid",
    "assemble_operators",
    "build_grid",
    "inner_product",
    "norm",
    "KLBasis",
    "PulseConfig",
    "kl_decompose",
    "make_rng_streams",
    "sample_lognormal_field",
    "sample_pulse_load",
    "solve_adjoint",
    "solve_forward",
    "solve_sensitivity",
    "example1",
    "example2",
    "compute_constants",
    "cost_and_gradient",
    "estimate_risk",
    "heat_energy",
    "hessian_action",
    "adagrad_step",
    "averaged_iterate",
    "project_control",
    "run_optimizer",
    "sgd_step",
    "theorem_bound",
]
