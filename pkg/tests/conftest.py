import sys

import numpy as np
import pytest
from hypothesis import settings

from hierrecon.hierarchy import SeriesPanel, build_hierarchy

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

FIG1_EDGES = [("T", "A"), ("T", "B"), ("A", "AA"), ("A", "AB"), ("B", "BA"), ("B", "BB")]


@pytest.fixture
def fig1():
    return build_hierarchy(FIG1_EDGES)


@pytest.fixture
def fig1_panel(fig1):
    rng = np.random.default_rng(7)
    t = np.arange(48)
    bottom = 20 + 5 * np.sin(2 * np.pi * t / 4)[None, :] + rng.normal(0, 1, (4, 48)) + np.arange(4)[:, None]
    return SeriesPanel(fig1, fig1.S @ bottom, 4)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
