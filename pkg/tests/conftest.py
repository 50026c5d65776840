import pytest

from acceptance_support import EXTREMA_SEARCHES, REFINEMENT_HORIZON, RESULTS, run
from qsoliton.pipeline import SEARCHES
from qsoliton.lattice import SimulationConfig

@pytest.fixture(scope="session")
def undamped():
    return run(SimulationConfig(), tuple(SEARCHES), keep_states=True)


@pytest.fixture(scope="session")
def damped():
    return run(SimulationConfig(gamma_td=0.03))


@pytest.fixture(scope="session")
def half_dt():
    return run(SimulationConfig(dt=5e-4, t_final=REFINEMENT_HORIZON), EXTREMA_SEARCHES)


@pytest.fixture(scope="session")
def double_n():
    # Same box length, half the spacing: the frequency bins are unchanged.
    return run(SimulationConfig(n_points=400, dx=0.05, t_final=REFINEMENT_HORIZON), EXTREMA_SEARCHES)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int("".join(ch for ch in k if ch.isdigit())), k)):
        passed, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key:<5} {'PASS' if passed else 'FAIL'}  {detail}")
