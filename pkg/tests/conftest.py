import math

import numpy as np
import pytest

from smfdroplet import SystemParams, Wavefunction, imaginary_time_ground_state, make_grid

REFERENCE = dict(omega_r_bar=1.14e-5, b0=100.0, delta=-10000.0, mirror_R=0.99, p0=2.28e-6)


@pytest.fixture(scope="session")
def ref_params():
    return SystemParams(**REFERENCE)


@pytest.fixture(scope="session")
def ref_grid():
    return make_grid(1024, 20 * math.pi)


@pytest.fixture(scope="session")
def droplet(ref_params, ref_grid):
    """Relaxed reference droplet (about 18k imaginary-time steps)."""
    seed = Wavefunction.gaussian(ref_grid, 0.0, 0.562)
    return imaginary_time_ground_state(seed, ref_params, ref_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20231019)


CRITERIA = {
    1: "droplet width from relaxation",
    2: "stationary droplet over t=3e5",
    3: "acceleration recovery",
    4: "no droplet without feedback",
    5: "threshold bracket",
    6: "heating budget",
    7: "property suites",
    8: "determinism of the reference run",
}
_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record a pass/fail line for an acceptance criterion, then assert it."""
    store = request.config.stash[_VERDICTS]

    def check(number: int, ok: bool, detail: str):
        prev = store.get(number)
        ok_all = ok and (prev is None or prev[0])
        store[number] = (ok_all, (prev[1] + "; " if prev else "") + detail)
        assert ok, f"criterion {number}: {detail}"
    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in store:
            ok, detail = store[number]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
        else:
            terminalreporter.write_line(f"[FAIL] {number}. {title}: not evaluated")
