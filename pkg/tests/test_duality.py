import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miocp_sensitivity.control_space import IntegerControlPath, OrdinaryControlPath, box_constraint
from miocp_sensitivity.duality import (
    DualFunction,
    DualSettings,
    MultiplierMeasure,
    NoSlaterMarginError,
    dual_ascent,
    dual_function,
    dual_value,
    lagrangian,
    multiplier_mass_bound,
    quadratic_model,
)
from miocp_sensitivity.dynamics import TimeGrid
from miocp_sensitivity.instances import make_custom_linear, make_heat_actuator
from miocp_sensitivity.solver import EnumerationCaps, cost_of, inner_solve, solve_value

SWITCHED = (0, 0, 1, 1, 1, 1, 1, 1)


@pytest.fixture(scope="module")
def heat_quiet():
    # unit energy weight: the free optimum stays inside (0, eps)
    return make_heat_actuator(energy_weight=1.0)


def unbounded_instance(upper=1.0):
    grid = TimeGrid(0.0, 1.0, 4)
    base = make_custom_linear([[0.0]], [[[0.0]]], [1.0], lower=-1.0, upper=1.0, energy_weight=0.0, grid=grid)

    def constraints(v):
        return [box_constraint(1, grid, lambda lam: (np.full((4, 1), -np.inf), np.full((4, 1), upper)), lambda s: 0.0)]

    return dataclasses.replace(base, constraints=constraints)


def test_measure_validation():
    grid = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(ValueError, match="nonnegative"):
        MultiplierMeasure(grid, -np.ones((1, 5)))
    with pytest.raises(ValueError, match="shape"):
        MultiplierMeasure(grid, np.ones((1, 4)))
    mu = MultiplierMeasure(grid, np.array([[1.0, 0, 0, 0, 2.0], [0, 0.5, 0, 0, 0]]))
    np.testing.assert_allclose(mu.masses, [3.0, 0.5])
    assert mu.total_mass == 3.5


def test_settings_validation():
    with pytest.raises(ValueError):
        DualSettings(shrink=1.5)
    with pytest.raises(ValueError):
        DualSettings(step_scale=0.0)


def test_lagrangian_zero_measure_is_cost(heat):
    v = IntegerControlPath(heat.grid, SWITCHED, 2)
    u = OrdinaryControlPath.constant(heat.grid, [0.3])
    lam = heat.space.center
    assert lagrangian(heat, lam, u, v, MultiplierMeasure.zeros(heat.grid, 2)) == cost_of(heat, lam, u, v)


def test_lagrangian_unit_mass_on_upper_constraint(heat_fixed_eps):
    inst = heat_fixed_eps
    v = IntegerControlPath(inst.grid, SWITCHED, 2)
    u = OrdinaryControlPath.constant(inst.grid, [0.05])
    w = np.zeros((2, inst.grid.n_nodes))
    w[0, 3] = 1.0
    lam = inst.space.center
    val = lagrangian(inst, lam, u, v, MultiplierMeasure(inst.grid, w))
    assert val == pytest.approx(cost_of(inst, lam, u, v) - 0.05, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=18, max_size=18), st.floats(0.0, 0.1))
def test_lagrangian_below_cost_when_feasible(weights, level):
    inst = make_heat_actuator()
    v = IntegerControlPath(inst.grid, SWITCHED, 2)
    u = OrdinaryControlPath.constant(inst.grid, [level])
    mu = MultiplierMeasure(inst.grid, np.array(weights).reshape(2, 9))
    lam = inst.space.center
    assert lagrangian(inst, lam, u, v, mu) <= cost_of(inst, lam, u, v) + 1e-15


def test_quadratic_model_reproduces_cost(heat, rng):
    v = IntegerControlPath(heat.grid, SWITCHED, 2)
    lam = heat.space.center
    model = quadratic_model(heat, lam, v)
    for _ in range(3):
        x = rng.uniform(-1, 2, heat.grid.n_cells)
        assert model.value(x) == pytest.approx(cost_of(heat, lam, x.reshape(-1, 1), v), rel=1e-12)


def test_dual_function_without_constraints_is_path_value(example1):
    v = IntegerControlPath.constant(example1.grid, 1, 2)
    mu = MultiplierMeasure.zeros(example1.grid, 0)
    assert dual_function(example1, -1.0, v, mu) == pytest.approx(-math.e, rel=1e-14)


def test_dual_function_zero_measure_is_unconstrained_minimum(heat):
    v = IntegerControlPath(heat.grid, SWITCHED, 2)
    lam = heat.space.center
    h0 = dual_function(heat, lam, v, MultiplierMeasure.zeros(heat.grid, 2))
    free = inner_solve(heat, lam, v, use_bounds=False)
    assert h0 == pytest.approx(free.value, abs=1e-12)
    assert h0 <= inner_solve(heat, lam, v).value


def test_dual_function_detects_unbounded_lagrangian():
    inst = unbounded_instance()
    v = IntegerControlPath.constant(inst.grid, 0, 1)
    fn = DualFunction(inst, 0.0, v)
    assert not fn.exact
    w = np.zeros((1, 5))
    w[0, 0] = 1.0
    ev = fn.evaluate(MultiplierMeasure(inst.grid, w))
    assert ev.value == -math.inf and ev.status == "unbounded"


def test_ascent_retries_are_bounded():
    # u = 0 violates u <= -1, so ascent keeps proposing measures outside the domain
    inst = unbounded_instance(upper=-1.0)
    v = IntegerControlPath.constant(inst.grid, 0, 1)
    res = dual_ascent(inst, 0.0, v, DualSettings(max_iters=50, step_scale=1.0))
    assert res.status == "unbounded"
    assert res.retries == DualSettings().max_retries
    # the state never moves, so the cost is the constant tracking term
    assert res.value == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.2), st.floats(0.0, 0.2))
def test_weak_duality_for_random_measures(m1, m2):
    inst = make_heat_actuator()
    v = IntegerControlPath(inst.grid, SWITCHED, 2)
    lam = inst.space.center
    w = np.zeros((2, 9))
    w[0, 0], w[1, 4] = m1, m2
    h = dual_function(inst, lam, v, MultiplierMeasure(inst.grid, w))
    assert h <= inner_solve(inst, lam, v).value + 1e-10


def test_ascent_without_constraints(example1):
    v = IntegerControlPath.constant(example1.grid, 0, 2)
    res = dual_ascent(example1, 0.5, v)
    assert res.mu.n_constraints == 0
    assert res.value == 0.5


def test_inactive_bounds_close_the_gap_at_once(heat_quiet):
    lam = heat_quiet.space.center
    v = IntegerControlPath(heat_quiet.grid, SWITCHED, 2)
    r = inner_solve(heat_quiet, lam, v)
    assert np.all(r.u.values > 0) and np.all(r.u.values < heat_quiet.meta["eps"])
    res = dual_ascent(heat_quiet, lam, v, DualSettings(max_iters=5))
    assert res.mu.total_mass == 0.0
    assert res.history[0] == pytest.approx(r.value, abs=1e-9)


def test_active_bound_gap_shrinks(heat):
    lam = heat.space.center
    v = IntegerControlPath(heat.grid, SWITCHED, 2)
    primal = inner_solve(heat, lam, v).value
    res = dual_ascent(heat, lam, v, DualSettings(max_iters=300))
    gaps = [primal - h for h in res.history]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 1e-2 * abs(primal)
    assert all(g >= -1e-8 for g in gaps)
    assert res.mu.total_mass > 0


def test_ascent_stops_at_target(heat):
    lam = heat.space.center
    v = IntegerControlPath(heat.grid, SWITCHED, 2)
    primal = inner_solve(heat, lam, v).value
    res = dual_ascent(heat, lam, v, DualSettings(max_iters=800), target=primal, target_tol=1e-9)
    assert res.status == "target" and res.iterations < 800


def test_dual_value_example1(example1):
    paths = EnumerationCaps().paths(example1)
    results = [dual_ascent(example1, -1.0, v) for v in paths]
    dv = dual_value(example1, -1.0, results)
    assert dv.value == pytest.approx(-math.e, rel=1e-14)
    assert dv.value == pytest.approx(solve_value(example1, -1.0).value, rel=1e-14)
    with pytest.raises(ValueError):
        dual_value(example1, -1.0, [])


def test_mass_bound_formula(heat):
    paths = EnumerationCaps(max_switches=1).paths(heat)
    mb = multiplier_mass_bound(heat, paths)
    assert mb.omega == pytest.approx(0.04)
    assert mb.value == pytest.approx((0.04**2 + mb.sup_phi - 0.0) / 0.04)
    with pytest.raises(NoSlaterMarginError):
        multiplier_mass_bound(heat, paths, omega=0.0)


def test_mass_bound_degenerate_ball():
    grid = TimeGrid(0.0, 1.0, 2)
    inst = make_custom_linear([[0.0]], [[[0.0]]], [0.0], lower=-1.0, upper=1.0, energy_weight=0.0,
                              grid=grid, radius=0.0)
    mb = multiplier_mass_bound(inst, EnumerationCaps().paths(inst))
    assert mb.value == 0.0
