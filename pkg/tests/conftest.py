import numpy as np
import pytest

from miocp_sensitivity.instances import make_example1, make_heat_actuator


@pytest.fixture(scope="session")
def example1():
    return make_example1(tf=1.0, n_cells=4)


@pytest.fixture(scope="session")
def heat():
    return make_heat_actuator()


@pytest.fixture(scope="session")
def heat_fixed_eps():
    return make_heat_actuator(perturb=("y_init", "y_target"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if rep.when == "call" and "criterion" in props:
                rows.append((props["criterion"], outcome, props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, outcome, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if outcome == 'passed' else 'FAIL'}  {detail}")
