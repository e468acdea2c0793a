import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miocp_sensitivity.control_space import OrdinaryControlPath, box_constraint
from miocp_sensitivity.dynamics import TimeGrid
from miocp_sensitivity.instances import SlaterData, ValueSample, make_custom_linear
from miocp_sensitivity.sensitivity import (
    HypothesisError,
    InconsistentSamplesError,
    SweepAborted,
    combined_L,
    cq_check,
    empirical_lipschitz,
    kink_scan,
    lipschitz_report,
    sweep,
    theoretical_hat_L,
    theoretical_tilde_C,
)
from miocp_sensitivity.solver import EnumerationCaps, solve_value

E = math.e


def fake(lam, value):
    return ValueSample(lam=lam, value=value, best_v=None, best_u=None, status="converged")


def absdist(a, b):
    return abs(a - b)


def small_linear(radius=0.1):
    return make_custom_linear([[-1.0]], [[[1.0]], [[-1.0]]], [1.0], lower=-1.0, upper=1.0,
                              target=[0.5], grid=TimeGrid(0.0, 1.0, 4), radius=radius)


def test_example1_sweep(example1):
    sw = sweep(example1, [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(sw.values, [-E, 0.0, 1.0], atol=1e-14)
    assert len(sw) == 3 and len(sw.wall_times) == 3


def test_single_sample_sweep_equals_solve(example1):
    sw = sweep(example1, [0.25])
    assert sw.samples[0].value == solve_value(example1, 0.25).value


def test_sweep_rejects_points_outside_ball(example1):
    with pytest.raises(ValueError, match="outside"):
        sweep(example1, [0.0, 1.5])
    with pytest.raises(ValueError):
        sweep(example1)


def test_sweep_aborts_on_empty_admissible_set():
    inst = small_linear()
    grid = inst.grid

    def constraints(v):
        return [box_constraint(1, grid, lambda lam: (np.ones((4, 1)), np.zeros((4, 1))), lambda s: 0.0)]

    bad = dataclasses.replace(inst, constraints=constraints)
    with pytest.raises(SweepAborted) as info:
        sweep(bad, [0.0, 0.05])
    assert info.value.index == 0


def test_heat_value_nonincreasing_in_eps(heat):
    j = heat.space.labels.index("eps")
    coords = np.zeros((5, heat.space.n_coords))
    coords[:, j] = np.linspace(-0.02, 0.02, 5)
    vals = sweep(heat, coords=coords, caps=EnumerationCaps(max_switches=1)).values
    assert np.all(np.isfinite(vals))
    assert np.all(np.diff(vals) <= 1e-12)


def test_empirical_constant_of_constant_function():
    samples = [fake(x, 3.0) for x in (0.0, 0.5, 1.0)]
    assert empirical_lipschitz(samples, absdist).constant == 0.0


def test_empirical_negative_branch(example1):
    sw = sweep(example1, list(np.linspace(-1.0, -0.1, 10)))
    assert empirical_lipschitz(sw, example1.space.distance).constant == pytest.approx(E, abs=1e-9)


def test_empirical_full_ball(example1):
    sw = sweep(example1, list(np.linspace(-1.0, 1.0, 21)))
    emp = empirical_lipschitz(sw, example1.space.distance)
    assert emp.constant == pytest.approx(E, abs=1e-9)
    i, j = emp.witness
    assert sw.samples[i].lam < 0 and sw.samples[j].lam <= 0


def test_duplicate_parameters_must_agree():
    with pytest.raises(InconsistentSamplesError):
        empirical_lipschitz([fake(0.0, 1.0), fake(0.0, 2.0), fake(1.0, 0.0)], absdist)
    # consistent duplicates are skipped
    emp = empirical_lipschitz([fake(0.0, 1.0), fake(0.0, 1.0), fake(1.0, 0.0)], absdist)
    assert emp.constant == 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=8, unique_by=lambda p: p[0]),
       st.randoms())
def test_empirical_permutation_invariant(points, rnd):
    samples = [fake(x, y) for x, y in points]
    shuffled = samples[:]
    rnd.shuffle(shuffled)
    a = empirical_lipschitz(samples, absdist).constant
    b = empirical_lipschitz(shuffled, absdist).constant
    assert a == b


def test_hat_L_example1(example1):
    rep = theoretical_hat_L(example1)
    assert rep.value == pytest.approx(E + 1.0, abs=1e-9)
    assert rep.C_tf == pytest.approx(E, abs=1e-9)
    assert rep.L_phi == 1.0 and rep.L0 == 1.0


def test_hat_L_without_initial_perturbation():
    inst = dataclasses.replace(small_linear(), L0=0.0)
    rep = theoretical_hat_L(inst)
    assert rep.value == rep.L_phi


def test_hat_L_trivial_dynamics():
    inst = make_custom_linear([[0.0]], [[[0.0]]], [1.0], lower=-1.0, upper=1.0, grid=TimeGrid(0.0, 1.0, 4))
    rep = theoretical_hat_L(inst)
    assert rep.C_tf == pytest.approx(1.0, abs=1e-11)
    assert rep.value == pytest.approx(2.0 * rep.L_phi, rel=1e-11)


def test_hat_L_rejects_moving_constraints(heat):
    with pytest.raises(HypothesisError, match="independent of lambda"):
        theoretical_hat_L(heat)
    assert theoretical_hat_L(heat, joint=True).value > 0


@pytest.mark.parametrize("radius", [0.1, 0.0])
def test_tilde_C_degenerate_formula(radius):
    inst = dataclasses.replace(small_linear(radius), L_phi_fn=lambda y, u: 2.0)
    lams = [0.0] if radius == 0 else [-radius, 0.0, radius]
    t = theoretical_tilde_C(inst, sweep(inst, lams))
    assert t.sup_L_g == 0.0
    assert t.value == pytest.approx(2.0 + 4.0 * radius)


def test_tilde_C_needs_surrogate(example1):
    sw = sweep(example1, [0.0])
    sw.samples[0].path_results = []
    with pytest.raises(HypothesisError, match="surrogate"):
        theoretical_tilde_C(example1, sw)


def test_tilde_C_heat_itemized(heat):
    sw = sweep(heat, coords=heat.space.sample_coords(n_lowdisc=0)[:3], caps=EnumerationCaps(max_switches=1))
    t = theoretical_tilde_C(heat, sw)
    assert np.isfinite(t.value)
    assert t.value == pytest.approx(sum(t.terms.values()))
    assert t.n_constraints == 2 and t.sup_L_g == 1.0
    assert t.terms["diameter"] == pytest.approx(0.08)


def test_combined_L():
    assert combined_L(E + 1.0, 2.5) == pytest.approx(E + 3.5)
    assert combined_L(E + 1.0, 0.0) == E + 1.0


def test_cq_heat_fixed_eps(heat_fixed_eps):
    rep = cq_check(heat_fixed_eps, caps=EnumerationCaps(max_switches=2))
    assert rep.passed
    assert rep.omega == 0.05
    assert rep.alpha_lower == 0.0


def test_cq_fails_on_boundary_tight_slater_point():
    inst = small_linear()
    tight = SlaterData(point=lambda v: OrdinaryControlPath.constant(inst.grid, [1.0]), omega=0.0, alpha_lower=0.0)
    rep = cq_check(dataclasses.replace(inst, slater=tight))
    assert not rep.passed
    assert rep.omega == 0.0
    assert rep.witness["constraint"] == 1


def test_cq_without_constraints(example1):
    rep = cq_check(example1, lam_samples=[0.0])
    assert rep.passed and rep.unconstrained
    assert rep.message == "no constraints"


def test_kink_at_zero(example1):
    rows = kink_scan(example1, 0.0, 0.5, 2, h=1e-4)
    assert rows[0].flagged
    assert rows[0].left == pytest.approx(E, abs=1e-3)
    assert rows[0].right == pytest.approx(1.0, abs=1e-3)
    assert not rows[1].flagged
    assert rows[1].left == pytest.approx(1.0, abs=1e-9)


def test_no_kink_on_linear_segment(example1):
    rows = kink_scan(example1, 0.2, 0.8, 5, h=1e-3)
    assert not any(r.flagged for r in rows)


def test_kink_slopes_converge_first_order(example1):
    left = [kink_scan(example1, 0.0, 0.0, 1, h=h)[0].left for h in (1e-2, 1e-3)]
    assert abs(left[1] - E) <= abs(left[0] - E) + 1e-12


def test_lipschitz_report_example1(example1):
    sw = sweep(example1, list(np.linspace(-1.0, 1.0, 11)))
    rep = lipschitz_report(example1, sw)
    assert rep.passed == {"hat_L": True}
    assert rep.empirical <= rep.hat_L
    d = rep.to_dict()
    assert d["pass"]["hat_L"] and d["hat_L"] == pytest.approx(E + 1.0, abs=1e-9)
