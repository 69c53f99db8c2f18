"""Shared helpers: hand-built traces and independent replay-based oracles.

The replay helpers recompute field values and integrals directly from the
raw event log, deliberately avoiding the package's cached per-site tables
so they can serve as independent oracles.
"""

import numpy as np
import pytest

from pamlab.environments import EnvModelSpec, EnvTrace
from pamlab.lattice import LatticeTorus


def make_trace(lattice, horizon, initial, events, spec=None, seed=0):
    """Build an EnvTrace from an explicit (time, site, value) event list."""
    events = sorted(events)
    times = np.array([e[0] for e in events], dtype=float)
    sites = np.array([e[1] for e in events], dtype=np.int64)
    values = np.array([e[2] for e in events], dtype=float)
    return EnvTrace(
        lattice=lattice,
        horizon=horizon,
        spec=spec or EnvModelSpec("constant"),
        seed=seed,
        initial=np.asarray(initial, dtype=float),
        event_times=times,
        event_sites=sites,
        event_values=values,
    )


def constant_trace(lattice, horizon, c):
    return make_trace(lattice, horizon, np.full(lattice.n_sites, float(c)), [])


def replay_field(trace, t):
    """Field at time t rebuilt by replaying the event log (oracle path)."""
    vals = trace.initial.copy()
    for i in range(trace.n_events):
        if trace.event_times[i] > t:
            break
        vals[trace.event_sites[i]] = trace.event_values[i]
    return vals


def replay_occupation(trace, site, a, b):
    """int_a^b xi(site, s) ds by replaying the event log (oracle path)."""
    cuts = [a] + [
        float(t) for t in trace.event_times
        if a < t < b and True
    ] + [b]
    cuts = sorted(set(cuts))
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += replay_field(trace, lo)[site] * (hi - lo)
    return total


ACCEPTANCE_LOG = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)


@pytest.fixture
def lat1d():
    return LatticeTorus(1, 8)


@pytest.fixture
def lat2d():
    return LatticeTorus(2, 6)
