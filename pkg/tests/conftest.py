import numpy as np
import pytest

from nulltube import charts


@pytest.fixture(scope="session")
def minkowski():
    return charts.make_minkowski()


@pytest.fixture(scope="session")
def shifted():
    return charts.make_minkowski_shifted()


@pytest.fixture(scope="session")
def kruskal():
    return charts.make_schwarzschild_kruskal(1.0)


@pytest.fixture(scope="session")
def wavy():
    return charts.make_wavy()


@pytest.fixture(scope="session")
def all_charts(minkowski, shifted, kruskal, wavy):
    return {"minkowski": minkowski, "minkowski_shifted": shifted,
            "schwarzschild_kruskal": kruskal, "wavy": wavy}


def interior_points(chart, n, seed=7, t1_pad=0.25):
    """Random points comfortably inside the validity domain."""
    rng = np.random.default_rng(seed)
    slo, shi = chart.s_range
    blo, bhi = chart.sb_range
    ds = 0.12 * (shi - slo)
    db = 0.12 * (bhi - blo)
    t1lo = chart.topology.t1_min
    t1hi = chart.topology.t1_max
    if not chart.topology.periodic1:
        t1lo, t1hi = t1lo + t1_pad, t1hi - t1_pad
    return np.stack([rng.uniform(slo + ds, shi - ds, n),
                     rng.uniform(blo + db, bhi - db, n),
                     rng.uniform(t1lo, t1hi, n),
                     rng.uniform(0.0, 2.0 * np.pi, n)], axis=-1)


def central_band(chart, frac=0.29):
    lo, hi = chart.topology.t1_min, chart.topology.t1_max
    pad = frac * (hi - lo)
    return (lo + pad, hi - pad)
