import numpy as np
import pytest

from adagrad_control.errors import ConfigurationError
from adagrad_control.grid import build_grid
from adagrad_control.randomness import (
    PulseConfig,
    kl_decompose,
    make_rng_streams,
    replication_streams,
    sample_lognormal_field,
    sample_pulse_load,
    squared_exponential,
)


@pytest.fixture(scope="module")
def line():
    return build_grid(1, [0, 1], 50, 0.2, 10)


def test_streams_reproducible():
    a = make_rng_streams(7, 3)[2].standard_normal(5)
    b = make_rng_streams(7, 3)[2].standard_normal(5)
    assert np.array_equal(a, b)


def test_streams_differ():
    s = make_rng_streams(7, 2)
    assert s[0].random() != s[1].random()
    assert make_rng_streams(7, 1, key=0)[0].random() != make_rng_streams(7, 1, key=1)[0].random()


def test_stream_prefix_stability():
    one = make_rng_streams(5, 1)[0].random(4)
    two = make_rng_streams(5, 2)[0].random(4)
    assert np.array_equal(one, two)


def test_replication_streams_disjoint():
    a = replication_streams(3, 0, 2)[1].random()
    b = replication_streams(3, 1, 2)[1].random()
    c = make_rng_streams(3, 2)[1].random()
    assert len({a, b, c}) == 3


def test_stream_count_validated():
    with pytest.raises(ConfigurationError):
        make_rng_streams(1, 0)


def test_long_correlation_length_gives_one_mode(line):
    b = kl_decompose(line, 5, sigma2=0.25, corr_length=100.0)
    assert b.eigenvalues[0] == pytest.approx(0.25 * 1.0, rel=1e-3)
    assert b.eigenvalues[1] / b.eigenvalues[0] <= 1e-3


def test_forty_modes_capture_variance(line):
    b = kl_decompose(line, 40, sigma2=0.25, corr_length=0.1)
    assert b.captured_fraction >= 0.99
    assert np.all(np.diff(b.eigenvalues) <= 0)
    assert np.all(b.eigenvalues >= 0)


def test_basis_orthonormal_in_weighted_product(line):
    b = kl_decompose(line, 10)
    np.testing.assert_allclose(b.gram(), np.eye(10), atol=1e-10)


def test_too_many_modes(line):
    with pytest.raises(ConfigurationError):
        kl_decompose(line, line.n_nodes + 1)


def test_full_reconstruction_matches_kernel():
    g = build_grid(1, [0, 1], 30, 1.0, 1)
    b = kl_decompose(g, g.n_nodes, sigma2=0.25, corr_length=0.3)
    K = squared_exponential(g.nodes, g.nodes, 0.25, 0.3)
    assert np.linalg.norm(b.covariance() - K) / np.linalg.norm(K) <= 1e-8


def test_zero_variance_field(line):
    b = kl_decompose(line, 5, sigma2=0.0)
    d = sample_lognormal_field(b, np.random.default_rng(0))
    assert np.all(d.values == b.a_min + 1.0)


def test_diffusivity_above_floor(line):
    b = kl_decompose(line, 40, sigma2=4.0, a_min=0.1)
    for rng in make_rng_streams(1, 20):
        d = sample_lognormal_field(b, rng)
        assert d.values.min() > 0.1
        assert d.cell_values(line).min() > 0.1


def test_projected_coefficients_standardized(line):
    b = kl_decompose(line, 40)
    rng = np.random.default_rng(3)
    N = 10_000
    xi = np.array([b.project(sample_lognormal_field(b, rng).log_field) for _ in range(N)])
    assert np.all(np.abs(xi.mean(axis=0)) <= 3 / np.sqrt(N))
    assert np.all(np.abs(xi.var(axis=0) - 1) <= 5 / np.sqrt(N))


def test_default_pulse_ranges():
    c = PulseConfig()
    assert c.onset1 == (2400.0, 3600.0)
    assert c.onset2 == (12000.0, 13200.0)
    assert c.duration == (1800.0, 3600.0)
    assert c.intensity == (200.0, 400.0)


def test_pulses_never_overlap():
    g = build_grid(1, [0, 1], 4, 21600.0, 240)
    for rng in make_rng_streams(2, 200):
        sample, _ = sample_pulse_load(PulseConfig(), rng, g)
        (a0, a1), (b0, b1) = sample.windows()
        assert a1 <= 7200.0 < 12000.0 <= b0
        assert all(200 <= q <= 400 for q in sample.intensities)


def test_degenerate_ranges_are_deterministic():
    g = build_grid(1, [0, 1], 4, 21600.0, 240)
    c = PulseConfig((3000, 3000), (12600, 12600), (2700, 2700), (300, 300))
    loads = [sample_pulse_load(c, rng, g)[1] for rng in make_rng_streams(4, 3)]
    assert np.array_equal(loads[0], loads[1]) and np.array_equal(loads[1], loads[2])


def test_pulse_time_integral():
    # edges on the time grid: integral is exactly sum of duration * intensity
    g = build_grid(1, [0, 1], 4, 21600.0, 240)
    c = PulseConfig((2700, 2700), (12600, 12600), (1800, 1800), (250, 250))
    _, load = sample_pulse_load(c, np.random.default_rng(0), g, scale=1.0)
    assert g.dt * load[:, 0].sum() == pytest.approx(1800 * 250 * 2, rel=1e-14)
    assert np.all(load == load[:, :1])


def test_pulse_scale():
    g = build_grid(1, [0, 1], 4, 21600.0, 240)
    rng1, rng2 = make_rng_streams(9, 1) + make_rng_streams(9, 1)
    _, a = sample_pulse_load(PulseConfig(), rng1, g)
    _, b = sample_pulse_load(PulseConfig(), rng2, g, scale=0.5)
    np.testing.assert_array_equal(0.5 * a, b)


@pytest.mark.parametrize("bad", [{"onset1": (10.0, 5.0)}, {"intensity": (-1.0, 1.0)}])
def test_invalid_pulse_config(bad):
    with pytest.raises(ConfigurationError):
        PulseConfig(**bad)
