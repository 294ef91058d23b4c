"""
Concrete stochastic control problems.

A problem bundles a grid, the deterministic data (initial state, target,
regularization weight, Dirichlet value) and a way to draw random realizations.
Each realization is a :class:`Sample` holding the assembled operators and the
random load, ready for the solvers in :mod:`adagrad_control.pde`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import assemble_operators, build_grid
from .randomness import (
    DiffusivitySample,
    KLSample,
    PulseConfig,
    kl_decompose,
    sample_lognormal_field,
    sample_pulse_load,
)

__all__ = [
    "Sample",
    "ControlProblem",
    "LognormalDiffusionProblem",
    "BatteryCellProblem",
    "example1",
    "example2",
    "box_poincare_constant",
]


def box_poincare_constant(grid):
    """Smallest C with ||v|| <= C ||grad v|| for v vanishing on the box boundary."""
    return 1.0 / (np.pi * np.sqrt(sum(1.0 / L**2 for L in grid.extents)))


@dataclass
class Sample:
    """One realization of the random inputs."""

    omega: object
    ops: object
    load: np.ndarray | None = None
    stream: int | None = None


@dataclass
class ControlProblem:
    """Common data of a tracking-type control problem.

    The sample cost is ``1/2 ||y - y_d||^2 + alpha/2 ||u||^2`` with ``y`` the
    state driven by ``load + control_gain * u``.
    """

    grid: object
    alpha: float
    y0: np.ndarray
    y_target: object = 0.0
    boundary_value: float = 0.0
    control_gain: float = 1.0
    a_min: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        self.y0 = np.broadcast_to(np.asarray(self.y0, dtype=float), (self.grid.n_nodes,)).copy()

    @property
    def poincare_constant(self):
        return box_poincare_constant(self.grid)

    def target_field(self):
        yd = np.asarray(self.y_target, dtype=float)
        return np.broadcast_to(yd, self.grid.field_shape)

    def draw(self, rng, stream=None):
        raise NotImplementedError

    def samples(self, streams, offset=0):
        return [self.draw(rng, stream=offset + j) for j, rng in enumerate(streams)]

    def initial_control(self, value=0.0):
        return self.grid.constant(value)


@dataclass
class LognormalDiffusionProblem(ControlProblem):
    """Random diffusivity ``a_min + exp(a~)`` from a truncated KL expansion."""

    basis: object = None
    load_field: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.basis is None:
            raise ConfigurationError("a KL basis is required")
        self.a_min = self.basis.a_min
        if self.a_min <= 0:
            raise ConfigurationError("a_min must be positive for the lognormal problem")

    def sample_from_xi(self, xi, stream=None):
        xi = np.asarray(xi, dtype=float)
        diff = DiffusivitySample(self.basis.field(xi), self.basis.a_min, KLSample(xi, stream))
        return Sample(diff.omega, assemble_operators(self.grid, diff), self.load_field, stream)

    def draw(self, rng, stream=None):
        diff = sample_lognormal_field(self.basis, rng, stream)
        return Sample(diff.omega, assemble_operators(self.grid, diff), self.load_field, stream)


@dataclass
class BatteryCellProblem(ControlProblem):
    """Anisotropic heat conduction in a cell cross-section with random heat pulses.

    The conduction equation is divided by ``rho c_p``; the pulse load therefore
    enters as ``g / (rho c_p)`` (K/s). The control is a heating rate in K/s
    unless ``control_gain`` is set to ``1 / (rho c_p)``, in which case it is a
    volumetric power in W m^-3.
    """

    pulses: PulseConfig = field(default_factory=PulseConfig)
    rho: float = 2118.0
    cp: float = 765.0
    conductivity: tuple = (66.0, 0.66)
    _ops: object = field(default=None, repr=False)

    def __post_init__(self):
        super().__post_init__()
        rc = self.rho * self.cp
        self.a_min = min(self.conductivity) / rc
        self._ops = assemble_operators(
            self.grid, 1.0, axis_scale=tuple(k / rc for k in self.conductivity)
        )

    @property
    def heat_capacity(self):
        return self.rho * self.cp

    @property
    def operators(self):
        return self._ops

    def draw(self, rng, stream=None):
        omega, load = sample_pulse_load(
            self.pulses, rng, self.grid, stream, scale=1.0 / self.heat_capacity
        )
        return Sample(omega, self._ops, load, stream)


def example1(
    n_cells=50,
    n_t=100,
    T=0.2,
    alpha=0.1,
    sigma2=0.25,
    corr_length=0.1,
    modes=40,
    a_min=0.1,
):
    """1D lognormal-diffusion problem: ``y0 = x(1-x)``, ``g = 0``, ``y_d = 0``."""
    grid = build_grid(1, [0.0, 1.0], n_cells, T, n_t)
    modes = min(int(modes), grid.n_nodes)
    basis = kl_decompose(grid, modes, sigma2=sigma2, corr_length=corr_length, a_min=a_min)
    x = grid.nodes[:, 0]
    return LognormalDiffusionProblem(
        grid=grid,
        alpha=alpha,
        y0=x * (1.0 - x),
        y_target=0.0,
        basis=basis,
        metadata={
            "problem": "example1",
            "kl.sigma2": sigma2,
            "kl.corr_length": corr_length,
            "kl.modes": modes,
            "kl.a_min": a_min,
        },
    )


def example2(
    n_cells=(29, 100),
    n_t=240,
    T=21600.0,
    alpha=0.1,
    pulses=None,
    rho=2118.0,
    cp=765.0,
    conductivity=(66.0, 0.66),
    T_o=18.0,
    y_target=18.0,
    control_units="K/s",
):
    """Battery cell cross-section ``[0.004, 0.032] x [0, 0.198]`` m held at ``T_o``."""
    grid = build_grid(2, [[0.004, 0.032], [0.0, 0.198]], n_cells, T, n_t)
    if control_units == "K/s":
        gain = 1.0
    elif control_units == "W/m^3":
        gain = 1.0 / (rho * cp)
    else:
        raise ConfigurationError(f"unknown control units {control_units!r}")
    return BatteryCellProblem(
        grid=grid,
        alpha=alpha,
        y0=np.full(grid.n_nodes, T_o),
        y_target=y_target,
        boundary_value=T_o,
        control_gain=gain,
        pulses=pulses or PulseConfig(),
        rho=rho,
        cp=cp,
        conductivity=tuple(conductivity),
        metadata={
            "problem": "example2",
            "control_units": control_units,
            "conduction_model": "second-order anisotropic diffusion k1*y_x1x1 + k2*y_x2x2",
        },
    )
