import functools

import numpy as np
import pytest
from hypothesis import settings

from mrbc.scenario import bundled_config
from mrbc.simulation import Trace, run, trace_columns

settings.register_profile("mrbc", deadline=None)
settings.load_profile("mrbc")

# (criterion, passed, detail) lines collected by the acceptance module
ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def _bundled_run(name):
    cfg = bundled_config(name)
    trace, verdict = run(cfg)
    return cfg, trace, verdict


@pytest.fixture(scope="session")
def bundled_run():
    """``bundled_run(name) -> (cfg, trace, verdict)``, simulated once per session."""
    return _bundled_run


def make_trace(n, t, **columns):
    """Synthetic trace: zeros everywhere except the given columns (scalars broadcast)."""
    t = np.asarray(t, dtype=float)
    cols = trace_columns(n)
    data = np.zeros((t.size, len(cols)))
    data[:, 0] = t
    for name, values in columns.items():
        data[:, cols.index(name)] = values
    return Trace(n=n, data=data)


@pytest.fixture
def synthetic_trace():
    return make_trace


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
