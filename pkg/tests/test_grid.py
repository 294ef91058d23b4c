import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adagrad_control.errors import CoercivityError, ConfigurationError, ShapeError
from adagrad_control.grid import (
    assemble_operators,
    build_grid,
    inner_product,
    norm,
    spatial_inner_product,
)


def test_example1_spacing():
    g = build_grid(1, [0, 1], 50, 0.2, 100)
    assert g.dx[0] == pytest.approx(0.02, rel=1e-15)
    assert g.dt == pytest.approx(0.002, rel=1e-15)
    assert g.field_shape == (101, 51)


def test_smallest_grid():
    g = build_grid(1, [0, 1], 2, 1.0, 1)
    assert g.n_nodes == 3
    assert g.interior.tolist() == [1]
    assert sorted(g.boundary.tolist()) == [0, 2]


def test_cell_cross_section_weights():
    g = build_grid(2, [[0.004, 0.032], [0, 0.198]], (14, 99), 100.0, 10)
    assert g.shape == (15, 100)
    assert g.n_nodes == 1500
    assert g.weights.sum() == pytest.approx(0.028 * 0.198, rel=1e-12)


@pytest.mark.parametrize(
    "args",
    [
        (1, [0, 1], 0, 1.0, 10),
        (1, [0, 1], 10, 0.0, 10),
        (1, [0, 1], 10, 1.0, 0),
        (1, [1, 0], 10, 1.0, 10),
        (3, [0, 1], 10, 1.0, 10),
        (2, [0, 1, 2], 10, 1.0, 10),
    ],
)
def test_invalid_grid(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


def test_1d_element_matrices():
    g = build_grid(1, [0, 1], 10, 1.0, 1)
    h = 0.1
    ops = assemble_operators(g, 1.0)
    A = ops.stiffness.toarray()
    M = ops.mass.toarray()
    np.testing.assert_allclose(A[5, 4:7], [-1 / h, 2 / h, -1 / h], rtol=1e-13)
    np.testing.assert_allclose(M[5, 4:7], [h / 6, 2 * h / 3, h / 6], rtol=1e-13)


def test_stiffness_linear_in_diffusivity():
    g = build_grid(2, 1.0, 4, 1.0, 1)
    A1 = assemble_operators(g, 1.0).stiffness
    A2 = assemble_operators(g, 2.0).stiffness
    assert abs(A2 - 2 * A1).max() == 0.0


def test_negative_diffusivity_rejected():
    g = build_grid(1, [0, 1], 10, 1.0, 1)
    a = np.ones(10)
    a[3] = -0.5
    with pytest.raises(CoercivityError):
        assemble_operators(g, a)
    with pytest.raises(CoercivityError):
        assemble_operators(g, 0.0)


def test_anisotropic_stiffness_splits_by_axis():
    g = build_grid(2, [[0, 1], [0, 2]], (3, 5), 1.0, 1)
    A = lambda s: assemble_operators(g, 1.0, axis_scale=s).stiffness  # noqa: E731
    A11 = A((1.0, 1.0))
    Ax = A((2.0, 1.0)) - A11
    Ay = A((1.0, 2.0)) - A11
    assert abs(A((3.0, 0.5)) - (3.0 * Ax + 0.5 * Ay)).max() < 1e-12
    with pytest.raises(CoercivityError):
        assemble_operators(g, 1.0, axis_scale=(1.0, 0.0))


def test_inner_product_examples():
    g = build_grid(1, [0, 1], 50, 0.2, 10)
    one = g.constant(1.0)
    assert inner_product(one, one, g) == pytest.approx(0.2, rel=1e-13)

    g = build_grid(1, [0, 1], 50, 1.0, 10)
    x = g.evaluate(lambda x, t: x[..., 0] + 0 * t)
    assert abs(inner_product(x, x, g) - 1 / 3) <= 1e-3

    s1 = g.evaluate(lambda x, t: np.sin(np.pi * x[..., 0]) + 0 * t)
    s2 = g.evaluate(lambda x, t: np.sin(2 * np.pi * x[..., 0]) + 0 * t)
    assert abs(inner_product(s1, s2, g)) <= 1e-10


def test_mismatched_fields():
    g = build_grid(1, [0, 1], 10, 1.0, 4)
    with pytest.raises(ShapeError):
        inner_product(g.zeros(), np.zeros((5, 12)), g)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_inner_product_symmetric_bilinear(seed):
    g = build_grid(2, 1.0, 3, 1.0, 3)
    r = np.random.default_rng(seed)
    u, v, w = (r.standard_normal(g.field_shape) for _ in range(3))
    a, b = r.standard_normal(2)
    assert inner_product(u, v, g) == pytest.approx(inner_product(v, u, g), rel=1e-13)
    lhs = inner_product(a * u + b * w, v, g)
    rhs = a * inner_product(u, v, g) + b * inner_product(w, v, g)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-13)


def test_batched_inner_product():
    g = build_grid(1, [0, 1], 6, 1.0, 3)
    r = np.random.default_rng(0)
    U = r.standard_normal(g.field_shape + (4,))
    vals = inner_product(U, U, g)
    for k in range(4):
        assert vals[k] == pytest.approx(norm(U[..., k], g) ** 2, rel=1e-13)


def test_stiffness_positive_definite_after_elimination():
    g = build_grid(2, [[0, 1], [0, 2]], (4, 5), 1.0, 1)
    A = assemble_operators(g, 1.0).stiffness_ii.toarray()
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0


def test_quadrature_second_order():
    errs = []
    for n in (10, 20, 40):
        g = build_grid(1, [0, 1], n, 1.0, 1)
        s = g.evaluate(lambda x, t: np.sin(np.pi * x[..., 0]) + 0 * t)
        errs.append(abs(norm(s, g) - np.sqrt(0.5)))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


def test_spatial_inner_product_per_level():
    g = build_grid(2, [[0, 2], [0, 3]], 4, 1.0, 2)
    vals = spatial_inner_product(g.constant(2.0), g.constant(1.0), g)
    np.testing.assert_allclose(vals, 2.0 * 6.0, rtol=1e-13)
