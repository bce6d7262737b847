import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_nearest(src, dst):
    """Squared distance from each src point to its nearest dst point, by double loop."""
    out = []
    for p in src:
        best = np.inf
        for q in dst:
            d = float(sum((float(a) - float(b)) ** 2 for a, b in zip(p, q)))
            best = min(best, d)
        out.append(best)
    return np.array(out)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
