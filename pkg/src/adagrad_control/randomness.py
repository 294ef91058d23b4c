"""
Sampling of the uncertain inputs.

Two sources of randomness are supported:

* a lognormal diffusion field ``a(x) = a_min + exp(a~(x))`` where ``a~`` is a
  zero-mean Gaussian field with squared-exponential covariance, represented by a
  truncated Karhunen-Loeve expansion on the grid nodes;
* a pair of rectangular heat pulses with uniformly distributed onset, duration
  and intensity, applied uniformly over the domain.

Random streams are derived from a master seed with :class:`numpy.random.SeedSequence`
so that stream ``j`` depends only on ``(master_seed, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError

__all__ = [
    "KLBasis",
    "KLSample",
    "DiffusivitySample",
    "PulseConfig",
    "PulseSample",
    "kl_decompose",
    "sample_lognormal_field",
    "sample_pulse_load",
    "pulse_load",
    "make_rng_streams",
    "rng_stream",
    "replication_streams",
    "squared_exponential",
]

EIG_CLIP = 1e-12


def rng_stream(master_seed, j, key=0):
    """Generator for sub-stream ``j`` of ``master_seed`` in namespace ``key``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(key), int(j)))
    return np.random.default_rng(ss)


def make_rng_streams(master_seed, count, key=0):
    """``count`` independent, reproducible generators.

    Different ``key`` values give disjoint families of streams (for example
    optimizer samples versus diagnostic samples) from one master seed.
    """
    if count < 1:
        raise ConfigurationError("need at least one stream")
    return [rng_stream(master_seed, j, key) for j in range(count)]


def replication_streams(master_seed, replication, count, key=4):
    """Streams ``0..count-1`` of independent replication ``replication``.

    Replications live in their own namespace ``key`` so that a study with many
    replicated runs never reuses the streams of a single run.
    """
    if count < 1:
        raise ConfigurationError("need at least one stream")
    return [
        np.random.default_rng(
            np.random.SeedSequence(int(master_seed), spawn_key=(int(key), int(replication), j))
        )
        for j in range(count)
    ]


def squared_exponential(x1, x2, sigma2, corr_length):
    d2 = np.sum((x1[:, None, :] - x2[None, :, :]) ** 2, axis=-1)
    return sigma2 * np.exp(-d2 / (2.0 * corr_length**2))


@dataclass(frozen=True)
class KLBasis:
    """Truncated Karhunen-Loeve eigenpairs on the grid nodes.

    ``vectors`` has shape ``(n_nodes, modes)`` and is orthonormal with respect to
    the nodal quadrature weights ``weights``.
    """

    sigma2: float
    corr_length: float
    a_min: float
    eigenvalues: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray

    @property
    def modes(self):
        return len(self.eigenvalues)

    @property
    def captured_fraction(self):
        total = self.sigma2 * float(np.sum(self.weights))
        return float(np.sum(self.eigenvalues) / total) if total > 0 else 1.0

    def gram(self):
        return self.vectors.T @ (self.weights[:, None] * self.vectors)

    def covariance(self):
        """Nodal covariance matrix of the truncated field."""
        return (self.vectors * self.eigenvalues) @ self.vectors.T

    def field(self, xi):
        """Gaussian field ``sum_k sqrt(lambda_k) xi_k phi_k`` at the nodes."""
        return self.vectors @ (np.sqrt(self.eigenvalues) * np.asarray(xi))

    def project(self, field):
        """Standardized coefficients of a nodal field (inverse of :meth:`field`)."""
        c = self.vectors.T @ (self.weights * np.asarray(field))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.eigenvalues > 0, c / np.sqrt(self.eigenvalues), 0.0)


def kl_decompose(grid, modes, sigma2=0.25, corr_length=0.1, a_min=0.1):
    """Leading ``modes`` eigenpairs of the covariance operator on ``grid``.

    Galerkin discretization with nodal quadrature weights ``W``: the symmetric
    matrix ``W^1/2 K W^1/2`` is diagonalized and the eigenvectors are mapped back
    with ``W^-1/2``.
    """
    if modes < 1 or modes > grid.n_nodes:
        raise ConfigurationError(f"modes must be in [1, {grid.n_nodes}], got {modes}")
    if sigma2 < 0 or corr_length <= 0:
        raise ConfigurationError("need sigma2 >= 0 and corr_length > 0")
    if a_min < 0:
        raise ConfigurationError("a_min must be nonnegative")
    w = grid.weights
    sw = np.sqrt(w)
    K = squared_exponential(grid.nodes, grid.nodes, sigma2, corr_length)
    S = sw[:, None] * K * sw[None, :]
    n = grid.n_nodes
    vals, vecs = scipy.linalg.eigh(S, subset_by_index=[n - modes, n - 1])
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if np.any(vals < -EIG_CLIP * max(1.0, sigma2 * grid.volume)):
        raise ConfigurationError("covariance matrix is not positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    return KLBasis(
        sigma2=float(sigma2),
        corr_length=float(corr_length),
        a_min=float(a_min),
        eigenvalues=vals,
        vectors=vecs / sw[:, None],
        weights=w.copy(),
    )


@dataclass(frozen=True)
class KLSample:
    xi: np.ndarray
    stream: int | None = None


@dataclass(frozen=True)
class DiffusivitySample:
    """Lognormal diffusivity ``a_min + exp(log_field)`` with nodal ``log_field``."""

    log_field: np.ndarray
    a_min: float
    omega: KLSample | None = None

    @property
    def values(self):
        return self.a_min + np.exp(self.log_field)

    def cell_values(self, grid):
        # exp of the interpolated log-field at element midpoints
        return self.a_min + np.exp(np.ravel(grid.nodal_to_cells(self.log_field)))


def sample_lognormal_field(basis, rng, stream=None):
    xi = rng.standard_normal(basis.modes)
    return DiffusivitySample(basis.field(xi), basis.a_min, KLSample(xi, stream))


@dataclass(frozen=True)
class PulseConfig:
    """Uniform ranges for the two heat pulses, in seconds and W m^-3."""

    onset1: tuple = (2400.0, 3600.0)
    onset2: tuple = (12000.0, 13200.0)
    duration: tuple = (1800.0, 3600.0)
    intensity: tuple = (200.0, 400.0)

    def __post_init__(self):
        for name in ("onset1", "onset2", "duration", "intensity"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigurationError(f"empty range for pulse.{name}: [{lo}, {hi}]")
            if lo < 0:
                raise ConfigurationError(f"pulse.{name} must be nonnegative")


@dataclass(frozen=True)
class PulseSample:
    onsets: tuple
    durations: tuple
    intensities: tuple
    stream: int | None = None

    def windows(self):
        return [(t0, t0 + d) for t0, d in zip(self.onsets, self.durations)]


def _uniform(rng, bounds):
    lo, hi = bounds
    return float(lo + (hi - lo) * rng.random())


def pulse_load(sample, grid, scale=1.0):
    """Space-time load of a pulse sample, uniform in space.

    Pulse edges are snapped to the nearest time level; the load at level ``n``
    is active on ``[t_n, t_n+1)``, so ``dt * sum_n g_n`` reproduces
    ``intensity * (snapped duration)`` exactly.
    """
    times = grid.times
    level = np.zeros(grid.n_t + 1)
    for (start, stop), q in zip(sample.windows(), sample.intensities):
        i0 = int(np.rint(start / grid.dt))
        i1 = int(np.rint(stop / grid.dt))
        on = (np.arange(times.size) >= i0) & (np.arange(times.size) < i1)
        level[on] += q
    return np.repeat(level[:, None] * scale, grid.n_nodes, axis=1)


def sample_pulse_load(config, rng, grid, stream=None, scale=1.0):
    """Draw a pulse realization and its load field.

    Returns ``(PulseSample, load)`` with ``load`` of shape ``(n_t + 1, n_nodes)``
    multiplied by ``scale`` (for example ``1 / (rho c_p)``).
    """
    onsets = (_uniform(rng, config.onset1), _uniform(rng, config.onset2))
    durations = (_uniform(rng, config.duration), _uniform(rng, config.duration))
    intensities = (_uniform(rng, config.intensity), _uniform(rng, config.intensity))
    sample = PulseSample(onsets, durations, intensities, stream)
    return sample, pulse_load(sample, grid, scale)
