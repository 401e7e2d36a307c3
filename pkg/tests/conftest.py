"""Shared fixtures.

Every block-relaxation trace produced anywhere in the suite is checked for
monotone ascent within each smoothing stage.
"""

import numpy as np
import pytest

import apqr.pqr as pqr_module

TRACE_SLACK = 1e-9
TRACES_CHECKED = []


@pytest.fixture(autouse=True)
def _monotone_traces(monkeypatch):
    original = pqr_module.relax

    def checked(*args, **kwargs):
        state, trace = original(*args, **kwargs)
        assert trace.is_monotone(TRACE_SLACK), "l_N decreased within a stage"
        TRACES_CHECKED.append(len(trace))
        return state, trace

    monkeypatch.setattr(pqr_module, "relax", checked)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
