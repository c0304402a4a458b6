import sys

import numpy as np
from hypothesis import strategies as st

from fbident.signals import MultichannelSignal


def small_ints(shape, rng, lo=-9, hi=10):
    """Integer-valued floats: every sum of products is exact, whatever the order."""
    return rng.integers(lo, hi, size=shape).astype(float)


@st.composite
def signals(draw, channels=st.integers(1, 5), length=st.integers(0, 40)):
    C = draw(channels)
    T = draw(length)
    seed = draw(st.integers(0, 2**32 - 1))
    return MultichannelSignal(np.random.default_rng(seed).standard_normal((C, T)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod and mod.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
