import numpy as np
import pytest

from adagrad_control.errors import ShapeError, SolverError
from adagrad_control.grid import assemble_operators, build_grid, inner_product, norm, spatial_inner_product
from adagrad_control.pde import LinearSolveContract, Propagator, solve_adjoint, solve_forward, solve_sensitivity
from adagrad_control.verify import heat_solution_error


@pytest.fixture(scope="module")
def line():
    g = build_grid(1, [0, 1], 50, 0.2, 100)
    return g, assemble_operators(g, 1.0)


@pytest.fixture(scope="module")
def plate():
    g = build_grid(2, [[0, 1], [0, 2]], (5, 7), 0.5, 12)
    rng = np.random.default_rng(1)
    return g, assemble_operators(g, 0.5 + rng.random(35), axis_scale=(2.0, 0.3))


def test_zero_data(line):
    g, ops = line
    y = solve_forward(ops, None, None, np.zeros(g.n_nodes))
    assert np.all(y == 0.0)


def test_separable_solution_value(line):
    g, ops = line
    x = g.nodes[:, 0]
    y = solve_forward(ops, None, None, np.sin(np.pi * x))
    n = int(round(0.1 / g.dt))
    mid = g.nearest_node([0.5])
    exact = np.exp(-np.pi**2 * 0.1)
    assert exact == pytest.approx(0.3729, abs=5e-4)
    assert abs(y[n, mid] - exact) / exact <= 2e-2


def test_steady_state_preserved(line):
    g, ops = line
    x = g.nodes[:, 0]
    y0 = x * (1 - x) / 2
    y = solve_forward(ops, 1.0, 0.0, y0)
    dev = np.sqrt(spatial_inner_product(y - y0, y - y0, g) / spatial_inner_product(y0, y0, g))
    assert dev.max() <= 1e-8


def test_convergence_order():
    assert heat_solution_error(25, 50, 0.2) / heat_solution_error(50, 100, 0.2) >= 1.8


def test_dissipation(plate):
    g, ops = plate
    y0 = np.random.default_rng(0).standard_normal(g.n_nodes)
    y = solve_forward(ops, None, None, y0)
    e = spatial_inner_product(y, y, g)
    assert np.all(np.diff(e[1:]) <= 1e-14)
    assert e[1] <= e[0]


def test_boundary_lift(plate):
    g, ops = plate
    y = solve_forward(ops, 0.0, None, np.full(g.n_nodes, 18.0), boundary_value=18.0)
    assert np.all(y == 18.0)
    src = np.ones(g.field_shape)
    y = solve_forward(ops, src, None, np.full(g.n_nodes, 18.0), boundary_value=18.0)
    assert np.all(y[:, g.boundary] == 18.0)
    assert np.all(y[1:, g.interior] > 18.0)


def test_adjoint_zero_residual(line):
    g, ops = line
    y = np.random.default_rng(0).standard_normal(g.field_shape)
    assert np.all(solve_adjoint(ops, y, y) == 0.0)


def test_adjoint_linear(line):
    g, ops = line
    r = np.random.default_rng(1).standard_normal(g.field_shape)
    np.testing.assert_array_equal(solve_adjoint(ops, 2 * r, 0.0), 2 * solve_adjoint(ops, r, 0.0))


@pytest.mark.parametrize("which", ["line", "plate"])
def test_duality(which, request):
    g, ops = request.getfixturevalue(which)
    rng = np.random.default_rng(2)
    v, r = rng.standard_normal(g.field_shape), rng.standard_normal(g.field_shape)
    lhs = inner_product(solve_sensitivity(ops, v), r, g)
    rhs = inner_product(v, solve_adjoint(ops, r, 0.0), g)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


def test_adjoint_terminal_value(line):
    g, ops = line
    p = solve_adjoint(ops, np.ones(g.field_shape), 0.0)
    assert np.all(p[-1] == 0.0)


def test_sensitivity_properties(plate):
    g, ops = plate
    rng = np.random.default_rng(3)
    v1, v2 = rng.standard_normal(g.field_shape), rng.standard_normal(g.field_shape)
    assert np.all(solve_sensitivity(ops, np.zeros(g.field_shape)) == 0.0)
    s12 = solve_sensitivity(ops, v1 + v2)
    np.testing.assert_allclose(s12, solve_sensitivity(ops, v1) + solve_sensitivity(ops, v2), atol=1e-12)
    np.testing.assert_array_equal(
        solve_sensitivity(ops, v1), solve_forward(ops, v1, 0.0, np.zeros(g.n_nodes))
    )


def test_batched_solves_match(plate):
    g, ops = plate
    rng = np.random.default_rng(4)
    V = rng.standard_normal(g.field_shape + (3,))
    prop = Propagator(ops)
    Y = prop.forward(V)
    P = prop.adjoint(V)
    for k in range(3):
        np.testing.assert_allclose(Y[..., k], prop.forward(V[..., k]), rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(P[..., k], prop.adjoint(V[..., k]), rtol=1e-13, atol=1e-15)


def test_solver_error_carries_residual(line):
    g, ops = line
    prop = Propagator(ops, LinearSolveContract(rtol=0.0))
    with pytest.raises(SolverError) as info:
        prop.forward(None, np.sin(np.pi * g.nodes[:, 0]))
    assert info.value.residual > 0


def test_shape_mismatch(line):
    g, ops = line
    with pytest.raises(ShapeError):
        solve_forward(ops, np.zeros((3, 3)), None, np.zeros(g.n_nodes))
    other = build_grid(1, [0, 1], 10, 0.2, 100)
    with pytest.raises(ShapeError):
        solve_forward(ops, None, None, np.zeros(g.n_nodes), grid=other)


def test_norm_of_sensitivity_bounded(line):
    # ||s(v)|| <= C_p^2 / a_min ||v|| for a = 1
    g, ops = line
    v = np.random.default_rng(5).standard_normal(g.field_shape)
    assert norm(solve_sensitivity(ops, v), g) <= (1 / np.pi) ** 2 * norm(v, g)
