import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from miocp_sensitivity.dynamics import (
    GeneratorMatrix,
    GronwallData,
    PropagationError,
    SemilinearTerm,
    TimeGrid,
    UnboundedGrowthError,
    deviation_check,
    check_modulus,
    estimate_semigroup_bounds,
    exp_pair,
    gronwall_envelope,
    propagate,
)


def scalar_decay(n, scheme):
    grid = TimeGrid(0.0, 1.0, n)
    traj = propagate(GeneratorMatrix([[-1.0]]), SemilinearTerm.zero(1), [1.0],
                     np.zeros((n, 0)), np.zeros(n, dtype=int), grid, scheme=scheme)
    return grid, traj


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, math.inf, 3)


def test_grid_quadrature():
    grid = TimeGrid(0.0, 2.0, 8)
    assert grid.trapezoid_weights().sum() == pytest.approx(2.0)
    # trapezoid is exact on linear functions
    cum = grid.cumulative_trapezoid(grid.nodes)
    np.testing.assert_allclose(cum, 0.5 * grid.nodes**2, atol=1e-14)
    assert grid.cell_of_node(8) == 7
    assert grid.refined().n_cells == 16


def test_generator_must_be_square():
    with pytest.raises(ValueError):
        GeneratorMatrix(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        GeneratorMatrix([[np.nan]])


def test_exp_pair_scalar():
    E, P = exp_pair(np.array([[-0.7]]), 0.3)
    assert E[0, 0] == pytest.approx(math.exp(-0.21), rel=1e-14)
    assert P[0, 0] == pytest.approx((1 - math.exp(-0.21)) / 0.7, rel=1e-13)


def test_exp_pair_zero_generator():
    E, P = exp_pair(np.zeros((2, 2)), 0.25)
    np.testing.assert_allclose(E, np.eye(2))
    np.testing.assert_allclose(P, 0.25 * np.eye(2))


@pytest.mark.parametrize("scheme", ["exponential", "exp-euler"])
def test_scalar_decay_exact_for_exponential_schemes(scheme):
    grid, traj = scalar_decay(8, scheme)
    np.testing.assert_allclose(traj.states[:, 0], np.exp(-grid.nodes), atol=1e-14)


def test_implicit_euler_first_order():
    errs = []
    for n in (8, 16, 32):
        grid, traj = scalar_decay(n, "implicit-euler")
        errs.append(np.max(np.abs(traj.states[:, 0] - np.exp(-grid.nodes))))
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8


def test_unknown_scheme():
    with pytest.raises(ValueError, match="unknown scheme"):
        scalar_decay(4, "rk4")


def test_control_shape_checked():
    grid = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(ValueError, match="cells"):
        propagate(GeneratorMatrix.zeros(1), SemilinearTerm.zero(1), [0.0],
                  np.zeros((3, 0)), np.zeros(3, dtype=int), grid)


def test_blowup_reports_cell():
    grid = TimeGrid(0.0, 1.0, 4)
    f = SemilinearTerm(lambda t, y, u, v: np.array([np.inf]) if t > 0.4 else np.zeros(1), lambda t: 1.0)
    with pytest.raises(PropagationError) as info:
        propagate(GeneratorMatrix.zeros(1), f, [0.0], np.zeros((4, 0)), np.zeros(4, dtype=int), grid)
    assert info.value.cell == 1


def test_gronwall_envelope_formula():
    grid = TimeGrid(0.0, 1.0, 4)
    data = GronwallData(1.0, 0.0).with_modulus(lambda t: 1.0, grid)
    env = gronwall_envelope(data, grid)
    np.testing.assert_allclose(env, np.exp(grid.nodes), rtol=1e-14)


def test_gronwall_envelope_no_modulus():
    grid = TimeGrid(0.0, 2.0, 4)
    env = gronwall_envelope(GronwallData(2.0, 0.5), grid)
    np.testing.assert_allclose(env, 2.0 * np.exp(0.5 * grid.nodes))


def test_gronwall_data_validation():
    with pytest.raises(ValueError):
        GronwallData(-1.0, 0.0)
    with pytest.raises(ValueError):
        GronwallData(1.0, math.nan)


def test_semigroup_bounds_dissipative():
    grid = TimeGrid(0.0, 1.0, 8)
    data = estimate_semigroup_bounds(GeneratorMatrix([[-2.0, 1.0], [1.0, -2.0]]), grid)
    assert data.w0 == 0.0
    assert data.gamma == pytest.approx(1.0, abs=1e-11)


def test_semigroup_bounds_overflow():
    with pytest.raises(UnboundedGrowthError):
        estimate_semigroup_bounds(GeneratorMatrix([[1e4]]), TimeGrid(0.0, 1.0, 2))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4))
def test_semigroup_bound_holds_on_nodes(entries):
    a = np.array(entries).reshape(2, 2)
    grid = TimeGrid(0.0, 1.0, 6)
    data = estimate_semigroup_bounds(GeneratorMatrix(a), grid)
    for s in grid.nodes:
        assert np.linalg.norm(expm(a * s), 2) <= data.gamma * math.exp(data.w0 * s) * (1 + 1e-12)


def test_deviation_zero_gap():
    grid, traj = scalar_decay(4, "exponential")
    data = GronwallData(1.0, 0.0)
    assert deviation_check(traj, traj, data, 0.0).passed
    _, other = scalar_decay(4, "implicit-euler")
    with pytest.raises(ValueError, match="inconsistent"):
        deviation_check(traj, other, data, 0.0)


def test_deviation_linear_scaling():
    grid = TimeGrid(0.0, 1.0, 4)
    gen = GeneratorMatrix([[-1.0]])
    t1 = propagate(gen, SemilinearTerm.zero(1), [1.0], np.zeros((4, 0)), np.zeros(4, dtype=int), grid)
    t2 = propagate(gen, SemilinearTerm.zero(1), [3.0], np.zeros((4, 0)), np.zeros(4, dtype=int), grid)
    data = estimate_semigroup_bounds(gen, grid)
    rep = deviation_check(t1, t2, data, 2.0)
    assert rep.passed
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-11)


def test_check_modulus_detects_violation(rng):
    grid = TimeGrid(0.0, 1.0, 4)
    f = SemilinearTerm(lambda t, y, u, v: 3.0 * y, lambda t: 1.0)
    assert not check_modulus(f, 2, grid, [np.zeros(0)], [0], rng)
    g = SemilinearTerm(lambda t, y, u, v: 0.5 * np.sin(y), lambda t: 1.0)
    assert check_modulus(g, 2, grid, [np.zeros(0)], [0], rng)
