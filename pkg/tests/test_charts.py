import numpy as np
import pytest

from nulltube import charts
from nulltube.charts import (ChartPoint, assemble_metric, eval_chart, load_chart,
                             lorentzian_signature_ok, make_chart,
                             sample_chart_to_dict, verify_eikonal)
from nulltube.errors import ChartLoadError, ConfigurationError, DomainError

from conftest import interior_points


def test_minkowski_sample_values(minkowski):
    # r = s + s̄ = 4 at (1, 3): γ = diag(r², r² sin²θ¹) = diag(16, 16) at the equator
    sm = eval_chart(minkowski, ChartPoint(1.0, 3.0, np.pi / 2, 0.0))
    assert np.allclose(sm.gamma, np.diag([16.0, 16.0]), atol=1e-12)
    assert sm.omega == pytest.approx(1.0)
    assert np.all(sm.b == 0.0)


def test_out_of_domain_point_raises(minkowski):
    with pytest.raises(DomainError, match="s"):
        minkowski.eval(ChartPoint(0.0, 0.0, 1.0, 0.0))
    with pytest.raises(DomainError, match="patch"):
        minkowski.eval(ChartPoint(1.0, 1.0, 0.05, 0.0))


def test_assemble_metric_block_structure(minkowski):
    sm = eval_chart(minkowski, ChartPoint(1.0, 3.0, np.pi / 2, 0.0))
    g, ginv = assemble_metric(sm)
    assert g[0, 1] == pytest.approx(2.0)
    assert g[0, 0] == pytest.approx(0.0)
    assert g[2, 2] == pytest.approx(16.0)
    assert g[3, 3] == pytest.approx(16.0)
    assert np.allclose(g @ ginv, np.eye(4), atol=1e-12)


def test_assemble_metric_with_shift():
    # hand-built sample with Ω = 1, b = (β, 0), γ = Id:
    # g_ss = γ(b, b) = β² and g_sθ¹ = −β
    beta = 0.37
    shape = ()
    sm = charts.MetricSample(
        points=np.zeros(4), omega=np.asarray(1.0),
        omega_d=np.zeros(4), omega_dd=np.zeros((4, 4)),
        b=np.array([beta, 0.0]), b_d=np.zeros((2, 4)), b_dd=np.zeros((2, 4, 4)),
        gamma=np.eye(2), gamma_d=np.zeros((2, 2, 4)), gamma_dd=np.zeros((2, 2, 4, 4)))
    g, ginv = assemble_metric(sm)
    assert g[0, 0] == pytest.approx(beta ** 2)
    assert g[0, 2] == pytest.approx(-beta)
    assert np.allclose(g @ ginv, np.eye(4), atol=1e-14)


@pytest.mark.parametrize("name", ["minkowski", "minkowski_shifted",
                                  "schwarzschild_kruskal", "wavy"])
def test_eikonal_and_signature(all_charts, name):
    chart = all_charts[name]
    pts = interior_points(chart, 60)
    res = verify_eikonal(chart, pts)
    assert max(np.max(r) for r in res) < 1e-10
    g, _ = assemble_metric(chart.eval(pts))
    assert np.all(lorentzian_signature_ok(g))


def test_mixed_partials_symmetric(all_charts):
    for chart in all_charts.values():
        sm = chart.eval(interior_points(chart, 20))
        for arr in (sm.omega_dd, sm.b_dd, sm.gamma_dd):
            assert np.allclose(arr, np.swapaxes(arr, -1, -2), rtol=1e-12, atol=1e-12)


def test_chart_eval_deterministic(wavy):
    pts = interior_points(wavy, 10)
    s1, s2 = wavy.eval(pts), wavy.eval(pts)
    for f in ("omega", "omega_d", "omega_dd", "b", "b_d", "b_dd",
              "gamma", "gamma_d", "gamma_dd"):
        assert np.array_equal(getattr(s1, f), getattr(s2, f))


def test_kruskal_horizon_finite(kruskal):
    # the locus s·s̄ = 0 has r = 2M with finite positive Ω², γ
    sm = kruskal.eval(ChartPoint(0.0, 0.9, 1.2, 0.3))
    assert kruskal.radius(ChartPoint(0.0, 0.9, 1.2, 0.3).array()) == pytest.approx(2.0)
    assert sm.omega2 == pytest.approx(4.0 / np.e)
    assert np.all(np.linalg.eigvalsh(sm.gamma) > 0)


def test_builtin_catalogue():
    cat = charts.builtin_charts()
    for name in ("minkowski", "minkowski_shifted", "schwarzschild_kruskal"):
        assert name in cat
    with pytest.raises(ConfigurationError):
        make_chart("nope")
    with pytest.raises(ConfigurationError):
        make_chart("schwarzschild_kruskal", M=-1.0)
    with pytest.raises(ConfigurationError):
        make_chart("minkowski", bogus=2.0)


def test_shifted_has_nonzero_b(shifted):
    sm = shifted.eval(ChartPoint(1.0, 1.0, 1.0, 0.0))
    assert sm.b[1] == pytest.approx(0.1)
    assert sm.b[0] == 0.0


# ---------------------------------------------------------------------------
# chart files

def test_load_chart_roundtrip(wavy, tmp_path):
    doc = sample_chart_to_dict(wavy, (13, 13, 25, 25))
    path = tmp_path / "wavy.json"
    import json
    path.write_text(json.dumps(doc))
    loaded = load_chart(str(path))
    pts = interior_points(wavy, 25, seed=3)
    # keep clear of the sampled-box edges where the spline loses accuracy
    pts[..., 0] = np.clip(pts[..., 0], -0.6, 0.6)
    pts[..., 1] = np.clip(pts[..., 1], -0.6, 0.6)
    a = wavy.eval(pts)
    b = loaded.eval(pts)
    assert np.max(np.abs(a.omega - b.omega)) < 2e-5
    assert np.max(np.abs(a.gamma - b.gamma)) < 2e-5
    assert np.max(np.abs(a.omega_d - b.omega_d)) < 2e-3
    # interpolated mixed second partials are exactly symmetric
    assert np.array_equal(b.omega_dd, np.swapaxes(b.omega_dd, -1, -2))
    # eikonal residuals vanish identically for any chart of this metric form
    res = verify_eikonal(loaded, pts)
    assert max(np.max(r) for r in res) < 1e-12


def test_load_chart_b_defaults_to_zero(minkowski, tmp_path):
    doc = sample_chart_to_dict(minkowski, (9, 9, 17, 17))
    del doc["b1"], doc["b2"]
    loaded = load_chart(doc)
    sm = loaded.eval(ChartPoint(1.0, 1.0, 1.2, 0.3))
    assert np.all(sm.b == 0.0)


def test_load_chart_errors(wavy):
    doc = sample_chart_to_dict(wavy, (9, 9, 17, 17))
    bad = dict(doc)
    del bad["omega"]
    with pytest.raises(ChartLoadError, match="omega"):
        load_chart(bad)
    bad = dict(doc)
    bad["omega"] = [-1.0] * len(doc["omega"])
    with pytest.raises(ChartLoadError, match="Ω"):
        load_chart(bad)
    bad = dict(doc)
    bad["gamma12"] = [10.0] * len(doc["gamma12"])  # breaks positive definiteness
    with pytest.raises(ChartLoadError, match="positive definite"):
        load_chart(bad)
    bad = dict(doc)
    bad["gamma11"] = doc["gamma11"][:10]
    with pytest.raises(ChartLoadError, match="values"):
        load_chart(bad)
    bad = dict(doc)
    bad["order"] = 4
    with pytest.raises(ChartLoadError, match="odd"):
        load_chart(bad)
