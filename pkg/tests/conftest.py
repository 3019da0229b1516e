import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    from mcdais import make_rng

    return make_rng(1234)


def small_path(name="gauss_shifted", dim=2, K=8, seed=0):
    from mcdais import AnnealedPath, default_initial, linear_schedule, make_rng, make_target

    target = make_target(name, dim, make_rng(seed, 3))
    return AnnealedPath(default_initial(name, dim), target, linear_schedule(K))


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
