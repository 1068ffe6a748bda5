import numpy as np
import pandas as pd
import pytest

from shedad.dtw import DistanceMatrix
from shedad.simulator import NetworkSpec, Window, default_faults, generate_network, simulate


def random_matrix(rng, n, integer=False, ids=None):
    pts = rng.normal(size=(n, 3))
    v = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    if integer:
        v = np.rint(v * 10)
    v = (v + v.T) / 2
    np.fill_diagonal(v, 0.0)
    ids = ids or tuple(f"S{i:03d}" for i in range(n))
    return DistanceMatrix(ids, v)


def arbitrary_matrix(rng, n):
    """Symmetric nonnegative matrix, not necessarily Euclidean."""
    v = rng.uniform(0.1, 10.0, size=(n, n))
    v = np.triu(v, 1)
    v = v + v.T
    return DistanceMatrix(tuple(f"S{i:03d}" for i in range(n)), v)


@pytest.fixture(scope="session")
def small_sim():
    """40 substations, 6 days, 4 supply and 4 performance faults."""
    spec = NetworkSpec(n_substations=40, seed=3)
    window = Window(start=pd.Timestamp("2024-01-01", tz="UTC"), days=6)
    topo = generate_network(spec)
    faults = default_faults(topo, window, 4, 4, seed=3)
    series, truth = simulate(topo, spec, faults, window)
    return topo, series, truth, window


# -- acceptance verdicts -----------------------------------------------------

_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """``verdict(ac, ok, detail)`` records one acceptance result, then asserts it.

    With ``known_gap`` a failure is reported as FAIL but marks the test xfail.
    """
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(ac, ok, detail="", known_gap=None):
        store[ac] = (bool(ok), detail)
        if not ok and known_gap:
            pytest.xfail(f"{ac}: {known_gap}")
        assert ok, f"{ac}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(store, key=lambda a: int(a[2:])):
        ok, detail = store[ac]
        terminalreporter.write_line(f"{ac} {'PASS' if ok else 'FAIL'}  {detail}")
