"""Hypersurface tubes h(s̄, θ), their sections, and marginality verdicts.

A tube is the graph {(h(s̄,θ), s̄, θ)}.  Its spacelike sections are graphs
(f, f̄) with f = h(f̄(θ), θ), so a section is specified either by a free
function f̄(θ) directly, or — as in the tangency construction — by a free
f(θ) after inverting h locally in s̄ (implicit reparametrization).

The headline check: a tube every spacelike section of which has vanishing
outgoing expansion must classify as null.  The machinery here verifies the
mechanism numerically: the causal classifier, a finite certified family of
sections for the scan, and the tangency identity that makes the expansion
of a tangent section an affine function of the section's Hessian trace.

Everything is verified inside a single chart; tubes leaving the chart's
validity rectangle must be re-based on another chart by the caller.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .charts import assemble_metric
from .connection import structure_coefficients_from_sample
from .errors import (ConfigurationError, NotReparametrizableError,
                     PreconditionError)
from .fields import ScalarField, field_from_expression
from .finder import solve_bracketed
from .surface import SurfaceGraph, second_fundamental_forms

_SB, _T1, _T2 = sp.symbols("sb t1 t2", real=True)
_NULL_BAND = 1e-10
_N_TOL = 1e-8


class TubeGraph:
    """A hypersurface graph with exact partials of h to order 2."""

    def __init__(self, chart, h_field, sb_range, band=None, name="tube"):
        self.chart = chart
        self.h = h_field
        self.sb_range = (float(sb_range[0]), float(sb_range[1]))
        self.band = band
        self.name = name

    def theta_grid(self, n1, n2=None):
        return self.chart.theta_grid(n1, n2, band=self.band)

    def h_value(self, sb, t1, t2):
        return self.h.value(sb, t1, t2)

    def h_grad(self, sb, t1, t2):
        return self.h.grad(sb, t1, t2)      # (..., 3): (∂_s̄ h, ∂_θ¹ h, ∂_θ² h)

    def h_hess(self, sb, t1, t2):
        return self.h.hess(sb, t1, t2)

    def nodes(self, nsb, n1, n2=None):
        grid = self.theta_grid(n1, n2)
        sb = np.linspace(self.sb_range[0], self.sb_range[1], nsb)
        SB = sb[:, None, None] + 0.0 * grid.T1[None, :, :]
        T1 = np.broadcast_to(grid.T1[None], SB.shape)
        T2 = np.broadcast_to(grid.T2[None], SB.shape)
        return SB, T1, T2, grid


def tube_from_expression(chart, text, sb_range, band=None, name="tube"):
    expr, syms = None, None
    fld = field_from_expression(text, ("sb", "t1", "t2"))
    return TubeGraph(chart, fld, sb_range, band=band, name=name)


def load_tube(chart, source):
    """Tube from the tube file format: like the surface format with an
    extra s̄ axis; ``h`` is an expression in (sb, t1, t2) or a value grid."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
    for key in ("sb_range", "h"):
        if key not in doc:
            raise ConfigurationError("tube file missing key %r" % key)
    band = tuple(doc["band"]) if "band" in doc else None
    if isinstance(doc["h"], str):
        return tube_from_expression(chart, doc["h"], doc["sb_range"], band=band,
                                    name=doc.get("name", "tube"))
    grid_shape = tuple(int(v) for v in doc["grid"])
    from scipy.interpolate import NdBSpline, make_interp_spline
    vals = np.asarray(doc["h"], dtype=float).reshape(grid_shape)
    sb_ax = np.linspace(doc["sb_range"][0], doc["sb_range"][1], grid_shape[0])
    topo = chart.topology
    lo, hi = band if band else (topo.t1_min, topo.t1_max)
    t1_ax = np.linspace(lo, hi, grid_shape[1])
    t2_ax = np.linspace(0.0, topo.period2, grid_shape[2])
    c = vals
    knots = []
    for ax, x in enumerate((sb_ax, t1_ax, t2_ax)):
        spl = make_interp_spline(x, np.moveaxis(c, ax, 0), k=3, axis=0)
        knots.append(spl.t)
        c = np.moveaxis(spl.c, 0, ax)
    nd = NdBSpline(tuple(knots), c, 3)

    class _SplineField3:
        def value(self, sb, t1, t2):
            pts = np.stack(np.broadcast_arrays(sb, t1, t2), axis=-1)
            return nd(pts.reshape(-1, 3)).reshape(pts.shape[:-1])

        def grad(self, sb, t1, t2):
            pts = np.stack(np.broadcast_arrays(sb, t1, t2), axis=-1)
            flat = pts.reshape(-1, 3)
            out = np.empty(pts.shape[:-1] + (3,))
            for i in range(3):
                nu = [0, 0, 0]
                nu[i] = 1
                out[..., i] = nd(flat, nu=nu).reshape(pts.shape[:-1])
            return out

        def hess(self, sb, t1, t2):
            pts = np.stack(np.broadcast_arrays(sb, t1, t2), axis=-1)
            flat = pts.reshape(-1, 3)
            out = np.empty(pts.shape[:-1] + (3, 3))
            for i in range(3):
                for j in range(i, 3):
                    nu = [0, 0, 0]
                    nu[i] += 1
                    nu[j] += 1
                    v = nd(flat, nu=nu).reshape(pts.shape[:-1])
                    out[..., i, j] = v
                    out[..., j, i] = v
            return out

    return TubeGraph(chart, _SplineField3(), doc["sb_range"], band=band,
                     name=doc.get("name", "tube"))


# ---------------------------------------------------------------------------
# builtin tubes

def builtin_tubes(chart):
    """Named test tubes for the given chart."""
    name = chart.name
    tubes = {}
    if name.startswith("minkowski"):
        cos1 = sp.cos(_T1)
        tubes["null_plane"] = TubeGraph(
            chart, ScalarField((_SB * (1 - cos1) + 2) / (1 + cos1), (_SB, _T1, _T2)),
            (0.1, 0.3), band=(0.35, 1.75), name="null_plane")
        tubes["spacelike_plane"] = TubeGraph(
            chart, ScalarField(_SB + 1, (_SB, _T1, _T2)),
            (0.1, 1.5), band=(0.5, np.pi - 0.5), name="spacelike_plane")
        tubes["tilted_spacelike"] = TubeGraph(
            chart, ScalarField(1.0 + 0.4 * _SB + 0.05 * sp.sin(_T1) * sp.cos(_T2),
                               (_SB, _T1, _T2)),
            (0.1, 1.5), band=(0.5, np.pi - 0.5), name="tilted_spacelike")
        tubes["null_cone"] = TubeGraph(
            chart, ScalarField(sp.Float(1.0), (_SB, _T1, _T2)),
            (0.1, 1.5), band=(0.5, np.pi - 0.5), name="null_cone")
        tubes["timelike_shell"] = TubeGraph(
            chart, ScalarField(2.0 - _SB, (_SB, _T1, _T2)),
            (0.1, 1.0), band=(0.5, np.pi - 0.5), name="timelike_shell")
    elif name.startswith("schwarzschild"):
        tubes["horizon"] = TubeGraph(
            chart, ScalarField(sp.Float(0.0), (_SB, _T1, _T2)),
            (0.1, 1.4), band=(0.5, np.pi - 0.5), name="horizon")
        tubes["tilted_spacelike"] = TubeGraph(
            chart, ScalarField(0.35 + 0.3 * _SB + 0.04 * sp.sin(_T1) * sp.cos(_T2),
                               (_SB, _T1, _T2)),
            (0.1, 1.4), band=(0.5, np.pi - 0.5), name="tilted_spacelike")
    else:
        tubes["level_cone"] = TubeGraph(
            chart, ScalarField(sp.Float(0.0), (_SB, _T1, _T2)),
            (chart.sb_range[0] + 0.2, chart.sb_range[1] - 0.2), name="level_cone")
    return tubes


# ---------------------------------------------------------------------------
# causal classification

@dataclass
class TubeReport:
    name: str
    tube_class: str
    class_counts: dict
    n_measure: float
    sections: list = field(default_factory=list)
    all_sections_marginal: bool = False
    marginal_tol: float = 0.0
    max_section_expansion: float = np.nan
    max_section_shear2: float = np.nan

    def to_dict(self):
        return {
            "name": self.name,
            "class": self.tube_class,
            "class_counts": dict(self.class_counts),
            "n_measure": self.n_measure,
            "sections": self.sections,
            "all_sections_marginal": bool(self.all_sections_marginal),
            "marginal_tol": self.marginal_tol,
            "max_section_expansion": self.max_section_expansion,
            "max_section_shear2": self.max_section_shear2,
        }


def classify_tube(chart, tube, nsb=9, ntheta=17):
    """Classify the causal character per node from the induced 3-metric.

    Null when |det₃| < 1e−10 · scale³ (scale = largest |eigenvalue|),
    spacelike when positive definite, timelike when one eigenvalue is
    negative.  Also reports the measure of N = {|∂_s̄ h| > 1e−8}.
    """
    SB, T1, T2, grid = tube.nodes(nsb, ntheta)
    H = tube.h_value(SB, T1, T2)
    Hg = tube.h_grad(SB, T1, T2)
    pts = np.stack([H, SB, T1, T2], axis=-1)
    g, _ = assemble_metric(chart.eval(pts))
    # tangents: T0 = ∂_s̄ + h_s̄ ∂_s, Ta = ∂_a + h_a ∂_s
    T = np.zeros(SB.shape + (3, 4))
    T[..., 0, 0] = Hg[..., 0]
    T[..., 0, 1] = 1.0
    T[..., 1, 0] = Hg[..., 1]
    T[..., 1, 2] = 1.0
    T[..., 2, 0] = Hg[..., 2]
    T[..., 2, 3] = 1.0
    M = np.einsum("...im,...mn,...jn->...ij", T, g, T)
    ev = np.linalg.eigvalsh(M)
    det = np.prod(ev, axis=-1)
    scale = np.max(np.abs(ev), axis=-1)
    is_null = np.abs(det) < _NULL_BAND * scale ** 3
    is_spacelike = (~is_null) & np.all(ev > 0.0, axis=-1)
    is_timelike = (~is_null) & (np.sum(ev < 0.0, axis=-1) == 1)
    counts = {"null": int(np.sum(is_null)),
              "spacelike": int(np.sum(is_spacelike)),
              "timelike": int(np.sum(is_timelike)),
              "degenerate": int(SB.size - np.sum(is_null) - np.sum(is_spacelike)
                                - np.sum(is_timelike))}
    if counts["null"] == SB.size:
        tube_class = "null"
    elif counts["spacelike"] == SB.size:
        tube_class = "spacelike"
    elif counts["timelike"] == SB.size:
        tube_class = "timelike"
    else:
        tube_class = "mixed"
    n_measure = float(np.mean(np.abs(Hg[..., 0]) > _N_TOL))
    return TubeReport(tube.name, tube_class, counts, n_measure)


# ---------------------------------------------------------------------------
# sections

@dataclass
class SectionSpec:
    """A section of a tube: constant f, a bump family in f (tangency
    construction), or a free f̄ graph function."""
    kind: str               # "constant-f", "bump-f", "fbar"
    field: object = None    # ScalarField of (t1, t2)
    s0: float = 0.0
    theta0: tuple = None
    hessian: np.ndarray = None

    @classmethod
    def constant_f(cls, s0):
        return cls("constant-f", ScalarField(sp.Float(s0), (_T1, _T2)), s0=float(s0))

    @classmethod
    def bump_f(cls, s0, theta0, hessian, width=0.35, periodic1=False):
        """f(θ) = s₀ + ½ Δᵀ H Δ · w(Δ) with w(0) = 1, dw(0) = 0, so that
        f(θ₀) = s₀, df(θ₀) = 0 and Hess f(θ₀) = H exactly."""
        t10, t20 = theta0
        H = np.asarray(hessian, dtype=float)
        d1 = _T1 - t10
        d2 = _T2 - t20
        quad = sp.Rational(1, 2) * (H[0, 0] * d1 ** 2 + 2 * H[0, 1] * d1 * d2
                                    + H[1, 1] * d2 ** 2)
        kappa = 1.0 / width ** 2
        w2 = sp.exp(kappa * (sp.cos(d2) - 1))
        w1 = sp.exp(kappa * (sp.cos(d1) - 1)) if periodic1 \
            else sp.exp(-d1 ** 2 / (2 * width ** 2))
        f = sp.Float(s0) + quad * w1 * w2
        return cls("bump-f", ScalarField(f, (_T1, _T2)), s0=float(s0),
                   theta0=(float(t10), float(t20)), hessian=H)

    @classmethod
    def fbar(cls, fb_field):
        return cls("fbar", fb_field)


def implicit_reparametrize(tube, near, sb_halfwidth=None):
    """Local inverse h̄(s, θ) of s = h(s̄, θ) around a point (s̄₀, θ₀).

    Requires |∂_s̄ h(s̄₀, θ₀)| > 1e−8; returns an object whose ``solve``
    verifies |h(h̄(s,θ), θ) − s| < 1e−12 and whose derivatives come from
    the implicit-function theorem (exact given h's partials).
    """
    sb0, t10, t20 = near
    dh = float(tube.h_grad(sb0, t10, t20)[..., 0])
    if abs(dh) <= _N_TOL:
        raise NotReparametrizableError(
            "|dh/ds̄| = %.3g at the base point: tube is tangent to the cones "
            "there (the reparametrizable set N excludes it)" % abs(dh))
    lo, hi = tube.sb_range
    if sb_halfwidth is not None:
        lo = max(lo, sb0 - sb_halfwidth)
        hi = min(hi, sb0 + sb_halfwidth)

    class ImplicitInverse:
        base = (sb0, t10, t20)
        sb_bracket = (lo, hi)

        def solve(self, s, t1, t2):
            s, t1, t2 = np.broadcast_arrays(np.asarray(s, dtype=float), t1, t2)
            shape = s.shape
            sflat, t1flat, t2flat = s.ravel(), t1.ravel(), t2.ravel()

            def func(x):
                return tube.h_value(x, t1flat, t2flat) - sflat

            sol = solve_bracketed(func, np.full(sflat.shape, lo),
                                  np.full(sflat.shape, hi), ftol=1e-13)
            res = np.abs(tube.h_value(sol.roots, t1flat, t2flat) - sflat)
            if np.any(res > 1e-12):
                raise NotReparametrizableError("implicit inverse residual %.3g > 1e-12"
                                               % float(res.max()))
            return sol.roots.reshape(shape)

        def derivatives(self, sb, t1, t2):
            """h̄_s, h̄_θ and second partials at the solved point, via the
            implicit-function theorem."""
            g = tube.h_grad(sb, t1, t2)
            Hm = tube.h_hess(sb, t1, t2)
            hs = g[..., 0]
            return g, Hm, hs

    return ImplicitInverse()


def section_from_tube(tube, spec, grid, inverse=None):
    """Build the SurfaceGraph of a tube section.

    ``fbar`` specs set f̄ freely and compute f = h(f̄(θ), θ) by the chain
    rule.  ``constant-f`` / ``bump-f`` specs prescribe f and solve
    f̄ = h̄(f(θ), θ) through the implicit inverse; derivatives then follow
    from the implicit-function theorem.  Both give analytic-mode graphs.
    """
    chart = tube.chart
    T1, T2 = grid.T1, grid.T2
    if spec.kind == "fbar":
        fb = spec.field.value(T1, T2)
        fb_d = spec.field.grad(T1, T2)
        fb_dd = spec.field.hess(T1, T2)
        g = tube.h_grad(fb, T1, T2)
        Hm = tube.h_hess(fb, T1, T2)
        f = tube.h_value(fb, T1, T2)
        hs, h1 = g[..., 0], g[..., 1:]
        f_d = hs[..., None] * fb_d + h1
        f_dd = (Hm[..., 0, 0][..., None, None] * fb_d[..., :, None] * fb_d[..., None, :]
                + Hm[..., 0, 1:][..., None, :] * fb_d[..., :, None]
                + Hm[..., 1:, 0][..., :, None] * fb_d[..., None, :]
                + hs[..., None, None] * fb_dd + Hm[..., 1:, 1:])
        return SurfaceGraph(chart, grid, f, fb, mode="analytic",
                            f_d=f_d, f_dd=f_dd, fb_d=fb_d, fb_dd=fb_dd)
    # prescribed-f section through the implicit inverse
    if inverse is None:
        mid = 0.5 * (tube.sb_range[0] + tube.sb_range[1])
        t1c = 0.5 * (grid.t1[0] + grid.t1[-1])
        inverse = implicit_reparametrize(tube, (mid, t1c, 0.0))
    f = spec.field.value(T1, T2)
    f_d = spec.field.grad(T1, T2)
    f_dd = spec.field.hess(T1, T2)
    fb = inverse.solve(f, T1, T2)
    g = tube.h_grad(fb, T1, T2)
    Hm = tube.h_hess(fb, T1, T2)
    hs = g[..., 0]
    h1 = g[..., 1:]
    fb_d = (f_d - h1) / hs[..., None]
    fb_dd = (f_dd - Hm[..., 1:, 1:]
             - Hm[..., 0, 1:][..., None, :] * fb_d[..., :, None]
             - Hm[..., 1:, 0][..., :, None] * fb_d[..., None, :]
             - Hm[..., 0, 0][..., None, None] * fb_d[..., :, None] * fb_d[..., None, :]) \
        / hs[..., None, None]
    return SurfaceGraph(chart, grid, f, fb, mode="analytic",
                        f_d=f_d, f_dd=f_dd, fb_d=fb_d, fb_dd=fb_dd)


# ---------------------------------------------------------------------------
# the tangency identity

@dataclass
class TangencyReport:
    residuals: np.ndarray        # |full evaluator − affine identity| per bump
    expansions: np.ndarray       # ṫrχ̇(p₀) per bump
    hessian_traces: np.ndarray   # γ^{ij} H_ij per bump
    slope_fit: float
    slope_predicted: float
    r_squared: float

    def max_residual(self):
        return float(np.max(self.residuals))


def tangency_identity_residual(chart, tube, theta0_index=None, n=32,
                               taus=None, mixed=0.3, width=0.35):
    """Sweep tangent bump sections at a point p₀ and compare the full
    evaluator's ṫrχ̇(p₀) against trχ(p₀) − 2Ω² γ^{ij} Hess_ij.

    The bump's critical point sits on a grid node, so the frame corrections
    vanish there and the identity is exact up to evaluation error.  The
    sweep fits ṫrχ̇(p₀) against the Hessian trace; for H = τ·Id the
    predicted slope is −2Ω² tr(γ⁻¹).
    """
    grid = tube.theta_grid(n)
    if theta0_index is None:
        theta0_index = (grid.n1 // 2, grid.n2 // 2)
    i0, j0 = theta0_index
    t10, t20 = grid.t1[i0], grid.t2[j0]
    sb0 = 0.5 * (tube.sb_range[0] + tube.sb_range[1])
    inverse = implicit_reparametrize(tube, (sb0, t10, t20))
    s0 = float(tube.h_value(sb0, t10, t20))
    if taus is None:
        taus = np.linspace(-0.5, 0.5, 50)
    # background data at p₀
    p0 = np.array([s0, sb0, t10, t20])
    sm0 = chart.eval(p0)
    sc0 = structure_coefficients_from_sample(sm0)
    om2 = float(sm0.omega2)
    gi0 = np.asarray(sm0.gamma_inv)
    trchi0 = float(sc0.trchi)
    residuals, expansions, traces = [], [], []
    for k, tau in enumerate(np.atleast_1d(taus)):
        H = np.array([[tau, mixed * tau], [mixed * tau, tau]])
        spec = SectionSpec.bump_f(s0, (t10, t20), H, width=width,
                                  periodic1=grid.periodic1)
        graph = section_from_tube(tube, spec, grid, inverse=inverse)
        geom = second_fundamental_forms(graph)
        lhs = float(geom.trchi_dot[i0, j0])
        htr = float(np.einsum("ij,ij->", gi0, H))
        rhs = trchi0 - 2.0 * om2 * htr
        residuals.append(abs(lhs - rhs))
        expansions.append(lhs)
        traces.append(htr)
    expansions = np.array(expansions)
    traces = np.array(traces)
    A = np.stack([traces, np.ones_like(traces)], axis=-1)
    coef, res_, _, _ = np.linalg.lstsq(A, expansions, rcond=None)
    slope_fit = float(coef[0])
    pred = expansions - A @ coef
    ss_res = float(np.sum(pred ** 2))
    ss_tot = float(np.sum((expansions - expansions.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TangencyReport(np.array(residuals), expansions, traces,
                          slope_fit, -2.0 * om2, r2)


# ---------------------------------------------------------------------------
# marginality scan

def _bump_family(grid, rng, count, amplitude):
    """Small random periodic-safe f̄ bumps for the scan family."""
    span1 = grid.t1[-1] - grid.t1[0] if not grid.periodic1 else grid.period1
    fields = []
    for _ in range(count):
        u1 = 2 * sp.pi * (_T1 - grid.t1[0]) / float(span1 if grid.periodic1 else span1)
        expr = sp.Float(0)
        for k1 in range(3):
            for k2 in range(3):
                if k1 == 0 and k2 == 0:
                    continue
                c = rng.uniform(-1, 1) / (1 + max(k1, k2)) ** 3
                expr += sp.Float(c) * sp.cos(k1 * u1 + rng.uniform(0, 2 * np.pi)) \
                    * sp.cos(k2 * _T2 + rng.uniform(0, 2 * np.pi))
        fields.append(ScalarField(sp.Float(amplitude) * expr, (_T1, _T2)))
    return fields


def marginality_scan(chart, tube, levels=8, bumps_per_level=2, seed=0, n=24,
                     tol=1e-8, amplitude=0.02):
    """Evaluate max |ṫrχ̇| over a deterministic family of sections
    (constant f̄ slices plus fixed-seed bump sections per level) and merge
    with the causal classification.

    Verdict ``all_sections_marginal`` holds iff every constructible
    spacelike section has max |ṫrχ̇| < tol.  Combined with the causal
    class this exhibits the main mechanism: no tube may classify spacelike
    while all its sections are marginal.
    """
    report = classify_tube(chart, tube)
    grid = tube.theta_grid(n)
    rng = np.random.default_rng(seed)
    lo, hi = tube.sb_range
    inset = 0.1 * (hi - lo)
    level_values = np.linspace(lo + inset, hi - inset, levels)
    sections = []
    max_exp = 0.0
    max_shear = 0.0
    for lev in level_values:
        specs = [("constant", ScalarField(sp.Float(lev), (_T1, _T2)))]
        for bidx, fld in enumerate(_bump_family(grid, rng, bumps_per_level, amplitude)):
            specs.append(("bump-%d" % bidx, ScalarField(sp.Float(lev) + fld.expr,
                                                        fld.symbols)))
        for kind, fld in specs:
            entry = {"kind": kind, "level": float(lev)}
            try:
                graph = section_from_tube(tube, SectionSpec.fbar(fld), grid)
                geom = second_fundamental_forms(graph)
                m = graph.mask()
                entry["max_trchi_dot"] = float(np.max(np.abs(geom.trchi_dot[m])))
                entry["max_shear2"] = float(np.max(np.abs(geom.hat_chi_norm2()[m])))
                entry["spacelike"] = True
                max_exp = max(max_exp, entry["max_trchi_dot"])
                max_shear = max(max_shear, entry["max_shear2"])
            except Exception as exc:  # non-spacelike or out-of-domain section
                entry["spacelike"] = False
                entry["error"] = type(exc).__name__
            sections.append(entry)
    usable = [s for s in sections if s.get("spacelike")]
    if not usable:
        raise PreconditionError("no constructible spacelike sections on tube %s"
                                % tube.name)
    report.sections = sections
    report.marginal_tol = tol
    report.all_sections_marginal = all(s["max_trchi_dot"] < tol for s in usable)
    report.max_section_expansion = float(max(s["max_trchi_dot"] for s in usable))
    report.max_section_shear2 = float(max(s["max_shear2"] for s in usable))
    return report
