import numpy as np
import pytest
import sympy as sp

from nulltube import surface as S
from nulltube import tube as T
from nulltube.errors import NotReparametrizableError
from nulltube.fields import ScalarField

_SB, _T1, _T2 = sp.symbols("sb t1 t2", real=True)


@pytest.fixture(scope="module")
def mink_tubes(minkowski):
    return T.builtin_tubes(minkowski)


@pytest.fixture(scope="module")
def schw_tubes(kruskal):
    return T.builtin_tubes(kruskal)


# ---------------------------------------------------------------------------
# implicit reparametrization

def test_reparametrize_linear(minkowski):
    tube = T.tube_from_expression(minkowski, "sb", (0.3, 1.5), band=(0.5, np.pi - 0.5))
    inv = T.implicit_reparametrize(tube, (0.9, 1.2, 0.0))
    s = np.array([0.5, 0.9, 1.2])
    sb = inv.solve(s, np.full(3, 1.2), np.zeros(3))
    assert np.allclose(sb, s, atol=1e-12)


def test_reparametrize_sine(minkowski):
    tube = T.tube_from_expression(minkowski, "sb + 0.1*sin(t1)", (0.3, 1.5),
                                  band=(0.5, np.pi - 0.5))
    inv = T.implicit_reparametrize(tube, (0.9, 1.2, 0.0))
    t1 = np.array([0.8, 1.2, 1.6])
    s = np.array([0.8, 1.0, 1.2])
    sb = inv.solve(s, t1, np.zeros(3))
    assert np.allclose(sb, s - 0.1 * np.sin(t1), atol=1e-12)
    resid = np.abs(tube.h_value(sb, t1, np.zeros(3)) - s)
    assert np.max(resid) < 1e-12


def test_reparametrize_constant_tube_fails(minkowski, mink_tubes):
    with pytest.raises(NotReparametrizableError):
        T.implicit_reparametrize(mink_tubes["null_cone"], (0.9, 1.2, 0.0))


# ---------------------------------------------------------------------------
# classification

def test_classify_null_cone(mink_tubes, minkowski):
    rep = T.classify_tube(minkowski, mink_tubes["null_cone"])
    assert rep.tube_class == "null"
    assert rep.n_measure == 0.0


def test_classify_null_plane(mink_tubes, minkowski):
    rep = T.classify_tube(minkowski, mink_tubes["null_plane"])
    assert rep.tube_class == "null"
    assert rep.n_measure == 1.0   # reparametrizable even though null


def test_classify_spacelike_plane(mink_tubes, minkowski):
    rep = T.classify_tube(minkowski, mink_tubes["spacelike_plane"])
    assert rep.tube_class == "spacelike"


def test_classify_timelike_shell(mink_tubes, minkowski):
    rep = T.classify_tube(minkowski, mink_tubes["timelike_shell"])
    assert rep.tube_class == "timelike"


def test_classify_horizon(schw_tubes, kruskal):
    rep = T.classify_tube(kruskal, schw_tubes["horizon"])
    assert rep.tube_class == "null"


def test_classification_stable_under_refinement(mink_tubes, minkowski):
    for name in ("null_plane", "spacelike_plane"):
        a = T.classify_tube(minkowski, mink_tubes[name], nsb=5, ntheta=9)
        b = T.classify_tube(minkowski, mink_tubes[name], nsb=9, ntheta=17)
        assert a.tube_class == b.tube_class


# ---------------------------------------------------------------------------
# sections

def test_section_from_fbar_constant_slice(mink_tubes, minkowski):
    tube = mink_tubes["spacelike_plane"]
    grid = tube.theta_grid(16)
    spec = T.SectionSpec.fbar(ScalarField(sp.Float(0.7), (_T1, _T2)))
    g = T.section_from_tube(tube, spec, grid)
    # section of {t = −1}: f = s̄ + 1 → the round sphere r = 2·0.7 + 1
    assert np.allclose(g.f, 1.7, atol=1e-14)
    geom = S.second_fundamental_forms(g)
    assert np.allclose(geom.trchi_dot[geom.valid], 2.0 / 2.4, atol=1e-10)


def test_bump_section_tangency_construction(mink_tubes, minkowski):
    tube = mink_tubes["spacelike_plane"]
    grid = tube.theta_grid(24)
    i0, j0 = grid.n1 // 2, grid.n2 // 2
    H = np.array([[0.3, 0.1], [0.1, 0.2]])
    spec = T.SectionSpec.bump_f(1.7, (grid.t1[i0], grid.t2[j0]), H)
    inv = T.implicit_reparametrize(tube, (0.7, grid.t1[i0], grid.t2[j0]))
    g = T.section_from_tube(tube, spec, grid, inverse=inv)
    # tangency at the critical node: same values and first derivatives as
    # the constant slice through the same point
    assert g.f[i0, j0] == pytest.approx(1.7, abs=1e-12)
    assert np.max(np.abs(g.f_d[i0, j0])) < 1e-12
    assert np.allclose(g.f_dd[i0, j0], H, atol=1e-12)
    assert g.fb[i0, j0] == pytest.approx(0.7, abs=1e-12)
    assert np.max(np.abs(g.fb_d[i0, j0])) < 1e-12


def test_null_plane_sections_marginal(mink_tubes, minkowski):
    # planar wavefronts have expansion-free generators: every section of the
    # null plane is marginal, with zero shear
    tube = mink_tubes["null_plane"]
    grid = tube.theta_grid(20)
    for level in (0.15, 0.22):
        spec = T.SectionSpec.fbar(ScalarField(
            sp.Float(level) + 0.01 * sp.sin(_T2), (_T1, _T2)))
        g = T.section_from_tube(tube, spec, grid)
        geom = S.second_fundamental_forms(g)
        assert np.max(np.abs(geom.trchi_dot[geom.valid])) < 1e-9
        assert np.max(np.abs(geom.hat_chi_norm2()[geom.valid])) < 1e-9


# ---------------------------------------------------------------------------
# tangency identity

def test_tangency_zero_bump(minkowski, mink_tubes):
    rep = T.tangency_identity_residual(minkowski, mink_tubes["spacelike_plane"],
                                        n=24, taus=np.array([0.0]))
    # zero Hessian: both sides equal the background trχ
    assert rep.max_residual() < 1e-12


@pytest.mark.parametrize("tube_name,chart_name", [("spacelike_plane", "minkowski"),
                                                  ("tilted_spacelike", "minkowski")])
def test_tangency_sweep_minkowski(all_charts, mink_tubes, tube_name, chart_name):
    chart = all_charts[chart_name]
    rep = T.tangency_identity_residual(chart, mink_tubes[tube_name], n=24,
                                        taus=np.linspace(-0.4, 0.4, 9))
    assert rep.max_residual() < 1e-7
    assert rep.r_squared > 0.999
    assert rep.slope_fit == pytest.approx(rep.slope_predicted, rel=0.01)


def test_tangency_sweep_schwarzschild(kruskal, schw_tubes):
    rep = T.tangency_identity_residual(kruskal, schw_tubes["tilted_spacelike"],
                                        n=24, taus=np.linspace(-0.3, 0.3, 9))
    assert rep.max_residual() < 1e-7
    assert rep.r_squared > 0.999
    assert rep.slope_fit == pytest.approx(rep.slope_predicted, rel=0.01)


def test_marginal_tangent_section_exists(minkowski, mink_tubes):
    # solve the affine identity for the bump curvature that nulls ṫrχ̇(p₀):
    # with H = τ·Id, ṫrχ̇ = trχ − 2Ω²τ·tr(γ⁻¹) crosses zero at a τ* the
    # sweep data predicts; the section built there is marginal at p₀
    taus = np.linspace(0.0, 0.6, 7)
    rep = T.tangency_identity_residual(minkowski, mink_tubes["spacelike_plane"],
                                        n=24, taus=taus, mixed=0.0)
    coef = np.polyfit(taus, rep.expansions, 1)
    tau_star = -coef[1] / coef[0]
    trchi0 = rep.expansions[0]  # τ = 0 entry equals the background trχ
    tr_gamma_inv = rep.hessian_traces[1] / taus[1]
    assert tau_star == pytest.approx(trchi0 / (-rep.slope_predicted * tr_gamma_inv),
                                     rel=1e-6)
    rep2 = T.tangency_identity_residual(minkowski, mink_tubes["spacelike_plane"],
                                         n=24, taus=np.array([tau_star]), mixed=0.0)
    assert abs(rep2.expansions[0]) < 1e-10


# ---------------------------------------------------------------------------
# marginality scans

def test_scan_null_plane(minkowski, mink_tubes):
    rep = T.marginality_scan(minkowski, mink_tubes["null_plane"],
                             levels=4, bumps_per_level=2, n=20)
    assert rep.tube_class == "null"
    assert rep.all_sections_marginal
    assert rep.max_section_expansion < 1e-9


def test_scan_horizon(kruskal, schw_tubes):
    rep = T.marginality_scan(kruskal, schw_tubes["horizon"],
                             levels=4, bumps_per_level=2, n=20)
    assert rep.tube_class == "null"
    assert rep.all_sections_marginal
    assert rep.max_section_expansion < 1e-8
    assert rep.max_section_shear2 < 1e-8   # shear-free corollary


def test_scan_spacelike_tubes_not_all_marginal(minkowski, mink_tubes):
    for name in ("spacelike_plane", "tilted_spacelike"):
        rep = T.marginality_scan(minkowski, mink_tubes[name],
                                 levels=3, bumps_per_level=1, n=20)
        assert rep.tube_class == "spacelike"
        assert not rep.all_sections_marginal


def test_scan_null_cone_not_marginal(minkowski, mink_tubes):
    # a null tube need not be a marginal tube: the cone has trχ = 2/r ≠ 0
    rep = T.marginality_scan(minkowski, mink_tubes["null_cone"],
                             levels=3, bumps_per_level=1, n=20)
    assert rep.tube_class == "null"
    assert not rep.all_sections_marginal


def test_theorem_consistency_suite(minkowski, kruskal, mink_tubes, schw_tubes):
    cases = [(minkowski, mink_tubes[n]) for n in
             ("null_plane", "spacelike_plane", "tilted_spacelike", "null_cone")]
    cases += [(kruskal, schw_tubes[n]) for n in ("horizon", "tilted_spacelike")]
    for chart, tube in cases:
        rep = T.marginality_scan(chart, tube, levels=3, bumps_per_level=1, n=20)
        assert not (rep.tube_class == "spacelike" and rep.all_sections_marginal)


# ---------------------------------------------------------------------------
# tube files

def test_tube_file_expression(minkowski, tmp_path):
    import json
    doc = {"name": "t", "sb_range": [0.3, 1.2], "band": [0.6, 2.4],
           "h": "1 + 0.5*sb + 0.02*sin(t1)*cos(t2)"}
    path = tmp_path / "tube.json"
    path.write_text(json.dumps(doc))
    tube = T.load_tube(minkowski, str(path))
    rep = T.classify_tube(minkowski, tube)
    assert rep.tube_class == "spacelike"


def test_tube_file_grid(minkowski):
    nsb, n1, n2 = 9, 13, 13
    sb = np.linspace(0.3, 1.2, nsb)
    t1 = np.linspace(0.6, 2.4, n1)
    t2 = np.linspace(0.0, 2 * np.pi, n2)
    SB, T1g, T2g = np.meshgrid(sb, t1, t2, indexing="ij")
    h = 1.0 + 0.5 * SB + 0.02 * np.sin(T1g) * np.cos(T2g)
    doc = {"name": "t", "sb_range": [0.3, 1.2], "band": [0.6, 2.4],
           "grid": [nsb, n1, n2], "h": h.ravel().tolist()}
    tube = T.load_tube(minkowski, doc)
    val = tube.h_value(np.array([0.7]), np.array([1.5]), np.array([1.0]))
    expected = 1.0 + 0.35 + 0.02 * np.sin(1.5) * np.cos(1.0)
    assert val[0] == pytest.approx(expected, abs=1e-4)
    rep = T.classify_tube(minkowski, tube, nsb=5, ntheta=9)
    assert rep.tube_class == "spacelike"
