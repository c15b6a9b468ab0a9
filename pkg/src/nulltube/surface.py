"""Graph-parametrized spacelike surfaces and their null-frame geometry.

A surface is the image of θ ↦ (f(θ), f̄(θ), θ) in a double-null chart.
This module computes its tangent frame, the adapted null normal frame
(solved in closed form from the orthogonality/null system), the null second
fundamental forms χ̇, χ̄̇ and torsion η̇ through three routes:

* the closed-form evaluator (``second_fundamental_forms``),
* the decomposition-coefficient path (``pi_coefficients`` and the
  recomposition helpers), and
* a projection oracle (``oracle_second_forms``) that differentiates the
  solved frame numerically and projects with raw Christoffel symbols,
  entirely independent of the closed-form algebra.

The closed forms follow the conventions recorded in CONVENTIONS.md; each
reading was frozen only after it agreed with the oracle on charts where the
term in question is numerically visible.
"""

from dataclasses import dataclass

import numpy as np

from .charts import assemble_metric
from .connection import (christoffel_from_sample, frame_vectors, leaf_christoffel,
                         structure_coefficients_from_sample)
from .errors import (ConfigurationError, DegenerateGraphError, DomainError,
                     FrameDegeneracyError, NotSpacelikeError, PreconditionError)
from .fields import ScalarField, field_from_expression
from .grids import FD_MARGIN

_DETB_FLOOR = 1e-10


class SurfaceGraph:
    """A spacelike surface given by graph values f, f̄ on a θ-grid.

    Derivative arrays come from 4th-order finite differences ("fd4"),
    FFT differentiation on fully periodic grids ("spectral"), or exact
    closed forms when the graph functions are given analytically.
    """

    def __init__(self, chart, grid, f, fb, mode="fd4",
                 f_d=None, f_dd=None, fb_d=None, fb_dd=None):
        self.chart = chart
        self.grid = grid
        self.f = np.asarray(f, dtype=float)
        self.fb = np.asarray(fb, dtype=float)
        if self.f.shape != grid.shape or self.fb.shape != grid.shape:
            raise ConfigurationError("graph arrays must match the grid shape")
        self.mode = mode
        if mode == "analytic":
            if f_d is None or f_dd is None or fb_d is None or fb_dd is None:
                raise ConfigurationError("analytic mode needs explicit derivative arrays")
            self.f_d, self.f_dd = np.asarray(f_d), np.asarray(f_dd)
            self.fb_d, self.fb_dd = np.asarray(fb_d), np.asarray(fb_dd)
        elif mode == "fd4":
            self.f_d, self.f_dd = grid.gradient(self.f), grid.hessian(self.f)
            self.fb_d, self.fb_dd = grid.gradient(self.fb), grid.hessian(self.fb)
        elif mode == "spectral":
            self.f_d, self.f_dd = grid.spectral_gradient(self.f), grid.spectral_hessian(self.f)
            self.fb_d, self.fb_dd = grid.spectral_gradient(self.fb), grid.spectral_hessian(self.fb)
        else:
            raise ConfigurationError("unknown derivative mode %r" % mode)
        self.margin = FD_MARGIN if (mode == "fd4" and not grid.periodic1) else 0
        if not np.all(chart.contains(self.points())):
            raise DomainError("surface leaves the validity domain of chart %s" % chart.name)
        self._sample = None

    @classmethod
    def from_fields(cls, chart, grid, f_field, fb_field):
        """Analytic graph from ScalarFields of (θ¹, θ²)."""
        a = (grid.T1, grid.T2)
        return cls(chart, grid, f_field.value(*a), fb_field.value(*a), mode="analytic",
                   f_d=f_field.grad(*a), f_dd=f_field.hess(*a),
                   fb_d=fb_field.grad(*a), fb_dd=fb_field.hess(*a))

    @classmethod
    def constant(cls, chart, grid, s0, sb0):
        return cls(chart, grid, np.full(grid.shape, float(s0)),
                   np.full(grid.shape, float(sb0)), mode="analytic",
                   f_d=np.zeros(grid.shape + (2,)), f_dd=np.zeros(grid.shape + (2, 2)),
                   fb_d=np.zeros(grid.shape + (2,)), fb_dd=np.zeros(grid.shape + (2, 2)))

    def points(self):
        return np.stack([self.f, self.fb, self.grid.T1, self.grid.T2], axis=-1)

    def sample(self):
        if self._sample is None:
            self._sample = self.chart.eval(self.points(), validate=False)
        return self._sample

    def mask(self, extra_margin=0):
        """Nodes whose derived arrays are trustworthy."""
        return self.grid.interior_mask(self.margin + extra_margin) \
            if (self.margin + extra_margin) else self.grid.interior_mask(0)


def random_trig_graph(chart, grid, rng, amplitude=0.1, degree=4, decay=4,
                      around=None, mode="fd4"):
    """Fixed-seed random smooth graph: trig polynomials of bounded degree
    with a 1/k^decay spectrum (total swing <= amplitude per function)."""
    if around is None:
        s0 = 0.5 * (chart.s_range[0] + chart.s_range[1])
        sb0 = 0.5 * (chart.sb_range[0] + chart.sb_range[1])
    else:
        s0, sb0 = around
    span1 = chart.topology.t1_max - chart.topology.t1_min
    base1 = chart.topology.t1_min

    def draw():
        vals = np.zeros(grid.shape)
        total = 0.0
        terms = []
        for k1 in range(degree + 1):
            for k2 in range(degree + 1):
                if k1 == 0 and k2 == 0:
                    continue
                w = 1.0 / max(k1, k2) ** decay
                c = rng.uniform(-1, 1) * w
                ph1, ph2 = rng.uniform(0, 2 * np.pi, 2)
                terms.append((c, k1, k2, ph1, ph2))
                total += abs(c)
        scale = amplitude / total
        u1 = 2.0 * np.pi * (grid.T1 - base1) / span1
        for c, k1, k2, ph1, ph2 in terms:
            vals += c * scale * np.cos(k1 * u1 + ph1) * np.cos(k2 * grid.T2 + ph2)
        return vals

    f = s0 + draw()
    fb = sb0 + draw()
    return SurfaceGraph(chart, grid, f, fb, mode=mode)


# ---------------------------------------------------------------------------
# tangent frame and induced metric

@dataclass
class TangentFrame:
    B: np.ndarray        # (..., 2, 2)  B_i^j = δ_i^j − f_i b^j
    B_inv: np.ndarray
    detB: np.ndarray
    pdot: np.ndarray     # (..., 2, 4)  ∂̇_i components


def tangent_frame(graph, check=True):
    sm = graph.sample()
    shape = graph.grid.shape
    B = np.zeros(shape + (2, 2))
    B[..., 0, 0] = 1.0
    B[..., 1, 1] = 1.0
    B -= graph.f_d[..., :, None] * sm.b[..., None, :]
    detB = B[..., 0, 0] * B[..., 1, 1] - B[..., 0, 1] * B[..., 1, 0]
    if check and np.any(np.abs(detB[graph.mask()]) <= _DETB_FLOOR):
        raise DegenerateGraphError("|det B| <= %g: degenerate graph parametrization"
                                   % _DETB_FLOOR)
    B_inv = np.empty_like(B)
    B_inv[..., 0, 0] = B[..., 1, 1]
    B_inv[..., 1, 1] = B[..., 0, 0]
    B_inv[..., 0, 1] = -B[..., 0, 1]
    B_inv[..., 1, 0] = -B[..., 1, 0]
    B_inv = B_inv / detB[..., None, None]
    pdot = np.zeros(shape + (2, 4))
    pdot[..., :, 0] = graph.f_d
    pdot[..., :, 1] = graph.fb_d
    pdot[..., 0, 2] = 1.0
    pdot[..., 1, 3] = 1.0
    return TangentFrame(B, B_inv, detB, pdot)


def induced_metric(graph, frame=None, check=True):
    """ġ_ij = B_i^k B_j^l γ_kl + 2Ω²(f_i f̄_j + f_j f̄_i)."""
    sm = graph.sample()
    fr = tangent_frame(graph, check=check) if frame is None else frame
    gdot = (np.einsum("...ik,...jl,...kl->...ij", fr.B, fr.B, sm.gamma)
            + 2.0 * sm.omega2[..., None, None]
            * (graph.f_d[..., :, None] * graph.fb_d[..., None, :]
               + graph.f_d[..., None, :] * graph.fb_d[..., :, None]))
    if check:
        m = graph.mask()
        det = gdot[..., 0, 0] * gdot[..., 1, 1] - gdot[..., 0, 1] ** 2
        if np.any(det[m] <= 0.0) or np.any(gdot[..., 0, 0][m] <= 0.0):
            raise NotSpacelikeError("induced metric not positive definite: "
                                    "surface is not spacelike")
    return gdot


def _inv2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


# ---------------------------------------------------------------------------
# null normal frame

@dataclass
class NullFrameSolution:
    e: np.ndarray         # (..., 2)
    eb: np.ndarray
    eps: np.ndarray       # (...)
    epsb: np.ndarray
    epsv: np.ndarray      # ε^k = e^k + ε ē^k
    epsbv: np.ndarray     # ε̄^k = ē^k + ε̄ e^k
    disc: np.ndarray      # discriminant of the quadratic
    om_dot2: np.ndarray   # Ω̇²
    Ldot: np.ndarray      # (..., 4)
    Lbdot: np.ndarray

    @property
    def om_dot(self):
        return np.sqrt(self.om_dot2)

    @property
    def Ldot_p(self):
        return self.Ldot / self.om_dot2[..., None]

    @property
    def Lbdot_p(self):
        return self.Lbdot / self.om_dot2[..., None]


def solve_null_frame(graph, frame=None, check=True):
    """Closed-form null normal frame adapted to the graph parametrization."""
    sm = graph.sample()
    fr = tangent_frame(graph, check=check) if frame is None else frame
    om2 = sm.omega2
    gi = sm.gamma_inv
    # e^k = −2Ω² γ^{kj} (B⁻¹)_j^i f_i ; likewise ē with f̄
    Btf = np.einsum("...ji,...i->...j", fr.B_inv, graph.f_d)
    Btfb = np.einsum("...ji,...i->...j", fr.B_inv, graph.fb_d)
    e = -2.0 * om2[..., None] * np.einsum("...kj,...j->...k", gi, Btf)
    eb = -2.0 * om2[..., None] * np.einsum("...kj,...j->...k", gi, Btfb)
    ip = lambda x, y: np.einsum("...ij,...i,...j->...", sm.gamma, x, y)
    e2 = ip(e, e)
    eb2 = ip(eb, eb)
    edeb = ip(e, eb)
    disc = (2.0 * om2 + edeb) ** 2 - e2 * eb2
    if check and np.any(disc[graph.mask()] <= 0.0):
        raise FrameDegeneracyError("frame discriminant non-positive: surface "
                                   "tangent to a null direction")
    denom = (2.0 * om2 + edeb) + np.sqrt(np.abs(disc))
    epsb = -eb2 / denom
    eps = -e2 / denom
    epsbv = eb + epsb[..., None] * e
    epsv = e + eps[..., None] * eb
    om_dot2 = om2 * (1.0 + eps * epsb) + 0.5 * ip(epsv, epsbv)
    shape = graph.grid.shape
    Ldot = np.zeros(shape + (4,))
    Ldot[..., 0] = eps
    Ldot[..., 1] = 1.0
    Ldot[..., 2:] = eps[..., None] * sm.b + epsv
    Lbdot = np.zeros(shape + (4,))
    Lbdot[..., 0] = 1.0
    Lbdot[..., 1] = epsb
    Lbdot[..., 2:] = sm.b + epsbv
    return NullFrameSolution(e, eb, eps, epsb, epsv, epsbv, disc, om_dot2, Ldot, Lbdot)


def null_frame_residuals(graph, sol=None):
    """Relative residuals of the defining frame system, via the full metric:
    g(L̇,L̇), g(L̄̇,L̄̇), g(L̇,∂̇_i), g(L̄̇,∂̇_i), and g(L̄̇,L̇′) − 2."""
    sm = graph.sample()
    fr = tangent_frame(graph, check=False)
    sol = solve_null_frame(graph, frame=fr) if sol is None else sol
    g, _ = assemble_metric(sm)
    scale = 2.0 * sol.om_dot2
    ip = lambda x, y: np.einsum("...m,...mn,...n->...", x, g, y)
    res = [np.abs(ip(sol.Ldot, sol.Ldot)) / scale,
           np.abs(ip(sol.Lbdot, sol.Lbdot)) / scale]
    for i in range(2):
        res.append(np.abs(ip(sol.Ldot, fr.pdot[..., i, :])) / scale)
        res.append(np.abs(ip(sol.Lbdot, fr.pdot[..., i, :])) / scale)
    res.append(np.abs(ip(sol.Lbdot, sol.Ldot_p) - 2.0) / 2.0)
    return np.max(np.stack(res, axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# closed-form second fundamental forms

@dataclass
class SurfaceGeometrySample:
    gdot: np.ndarray
    gdot_inv: np.ndarray
    chi_dot: np.ndarray    # (..., 2, 2)
    chib_dot: np.ndarray
    eta_dot: np.ndarray    # (..., 2)
    trchi_dot: np.ndarray
    trchib_dot: np.ndarray
    valid: np.ndarray = None   # nodes where every field is trustworthy

    @property
    def hat_chi_dot(self):
        return self.chi_dot - 0.5 * self.trchi_dot[..., None, None] * self.gdot

    @property
    def hat_chib_dot(self):
        return self.chib_dot - 0.5 * self.trchib_dot[..., None, None] * self.gdot

    def hat_chi_norm2(self):
        gi = self.gdot_inv
        h = self.hat_chi_dot
        return np.einsum("...ac,...bd,...ab,...cd->...", gi, gi, h, h)

    def hat_chib_norm2(self):
        gi = self.gdot_inv
        h = self.hat_chib_dot
        return np.einsum("...ac,...bd,...ab,...cd->...", gi, gi, h, h)


def _sym2(P, Q):
    return 0.5 * (P[..., :, None] * Q[..., None, :] + P[..., None, :] * Q[..., :, None])


class _Workspace:
    """Shared contractions for the closed-form and Π-coefficient paths."""

    def __init__(self, graph):
        self.graph = graph
        self.sm = sm = graph.sample()
        self.fr = tangent_frame(graph, check=False)
        self.sol = solve_null_frame(graph, frame=self.fr, check=False)
        self.sc = structure_coefficients_from_sample(sm)
        self.gsl = leaf_christoffel(sm)            # Γ̸^c_{ab}
        self.gdot = induced_metric(graph, frame=self.fr, check=False)
        self.gdot_inv = _inv2(self.gdot)
        gam = sm.gamma
        self.db = np.moveaxis(sm.b_d[..., :, 2:], -1, -2)   # ∂_j b^k -> [j, k]
        self.b_s = sm.b_d[..., :, 0]                        # ∂_s b^k
        # ∇̸_j b^k
        self.slash_db = self.db + np.einsum("...kjl,...l->...jk", self.gsl, sm.b)
        self.slash_bb = np.einsum("...j,...jk->...k", sm.b, self.slash_db)
        f_d, fb_d = graph.f_d, graph.fb_d
        # pulled-back Hessians ∇̸²f = f_ij − Γ̸^k_{ij} f_k
        self.F = graph.f_dd - np.einsum("...kij,...k->...ij", self.gsl, f_d)
        self.Fb = graph.fb_dd - np.einsum("...kij,...k->...ij", self.gsl, fb_d)
        lower = lambda v: np.einsum("...ij,...j->...i", gam, v)
        self.low = lower
        sdot = lambda u, v: np.einsum("...ij,...i,...j->...", gam, u, v)
        self.sdot = sdot

    def chi_cov(self, chi, vec):
        """(χ(v))_i = χ_{ij} v^j, a covector."""
        return np.einsum("...ij,...j->...i", chi, vec)

    def chi_scal(self, chi, u, v):
        return np.einsum("...ij,...i,...j->...", chi, u, v)


def _eps_array_derivatives(graph, sol):
    """Surface derivatives of the solved ε̄, ε̄⃗ arrays (grid differences)."""
    grid = graph.grid
    if graph.mode == "spectral":
        d_epsb = grid.spectral_gradient(sol.epsb)
        d_epsbv = np.stack([grid.spectral_gradient(sol.epsbv[..., k]) for k in range(2)],
                           axis=-2)  # [..., k, i]
    else:
        d_epsb = grid.gradient(sol.epsb)
        d_epsbv = np.stack([grid.gradient(sol.epsbv[..., k]) for k in range(2)], axis=-2)
    return d_epsb, np.moveaxis(d_epsbv, -1, -2)   # ∂̇_i ε̄^k -> [i, k]


def second_fundamental_forms(graph, ws=None):
    """Closed-form χ̇, χ̄̇, η̇ of the graph surface (CONVENTIONS.md algebra)."""
    ws = _Workspace(graph) if ws is None else ws
    sm, sc, sol = ws.sm, ws.sc, ws.sol
    om2 = sm.omega2
    b = sm.b
    f_d, fb_d = graph.f_d, graph.fb_d
    cc, cs, sd = ws.chi_cov, ws.chi_scal, ws.sdot
    eps, epsb = sol.eps, sol.epsb
    ev, ebv = sol.epsv, sol.epsbv

    # scalar contractions against γ
    b_ebv = sd(b, ebv)
    b_ev = sd(b, ev)
    eta_b = np.einsum("...a,...a->...", sc.eta, b)
    etab_b = np.einsum("...a,...a->...", sc.etab, b)
    eta_ebv = np.einsum("...a,...a->...", sc.eta, ebv)
    eta_ev = np.einsum("...a,...a->...", sc.eta, ev)
    etab_ebv = np.einsum("...a,...a->...", sc.etab, ebv)
    etab_ev = np.einsum("...a,...a->...", sc.etab, ev)
    slash_db_ebv = np.einsum("...jk,...k->...j", ws.slash_db, ws.low(ebv))
    slash_db_ev = np.einsum("...jk,...k->...j", ws.slash_db, ws.low(ev))
    nab_b_b_ebv = sd(ws.slash_bb, ebv)
    nab_b_b_ev = sd(ws.slash_bb, ev)
    bs_ebv = sd(ws.b_s, ebv)
    bs_ev = sd(ws.b_s, ev)

    # χ̄̇
    P_f = (slash_db_ebv - cc(sc.chib, ebv) - cc(sc.chib, b)
           - epsb[..., None] * cc(sc.chi, b) - 2.0 * (om2 * epsb)[..., None] * sc.eta)
    P_fb = -cc(sc.chi, ebv) - 2.0 * om2[..., None] * sc.etab
    cross = 2.0 * om2 * eta_ebv + cs(sc.chi, b, ebv) + 2.0 * om2 * etab_b
    dfdf = (2.0 * cs(sc.chib, b, ebv) + cs(sc.chib, b, b) + epsb * cs(sc.chi, b, b)
            + 4.0 * om2 * epsb * eta_b - nab_b_b_ebv + bs_ebv - 4.0 * om2 * epsb * sc.wb)
    chib_dot = (sc.chib + epsb[..., None, None] * sc.chi
                + (b_ebv - 2.0 * om2 * epsb)[..., None, None] * ws.F
                - 2.0 * om2[..., None, None] * ws.Fb
                + 2.0 * _sym2(P_f, f_d) + 2.0 * _sym2(P_fb, fb_d)
                + 2.0 * cross[..., None, None] * _sym2(f_d, fb_d)
                - 4.0 * (sc.w * om2)[..., None, None] * (fb_d[..., :, None] * fb_d[..., None, :])
                + dfdf[..., None, None] * (f_d[..., :, None] * f_d[..., None, :]))

    # χ̇
    Q_f = (slash_db_ev - cc(sc.chib, ev) - cc(sc.chi, b)
           - eps[..., None] * cc(sc.chib, b) - 2.0 * om2[..., None] * sc.eta)
    Q_fb = -cc(sc.chi, ev) - 2.0 * (om2 * eps)[..., None] * sc.etab
    cross_q = 2.0 * om2 * eta_ev + cs(sc.chi, b, ev) + 2.0 * om2 * eps * etab_b
    dfdf_q = (2.0 * cs(sc.chib, b, ev) + cs(sc.chi, b, b) + eps * cs(sc.chib, b, b)
              + 4.0 * om2 * eta_b - nab_b_b_ev + bs_ev - 4.0 * om2 * sc.wb)
    chi_dot = (sc.chi + eps[..., None, None] * sc.chib
               + (b_ev - 2.0 * om2)[..., None, None] * ws.F
               - 2.0 * (om2 * eps)[..., None, None] * ws.Fb
               + 2.0 * _sym2(Q_f, f_d) + 2.0 * _sym2(Q_fb, fb_d)
               + 2.0 * cross_q[..., None, None] * _sym2(f_d, fb_d)
               - 4.0 * (eps * sc.w * om2)[..., None, None] * (fb_d[..., :, None] * fb_d[..., None, :])
               + dfdf_q[..., None, None] * (f_d[..., :, None] * f_d[..., None, :]))

    # η̇
    d_epsb, d_epsbv = _eps_array_derivatives(graph, sol)
    slash_d_epsbv = d_epsbv + np.einsum("...kil,...l->...ik", ws.gsl, ebv)
    nab_ebv_b = np.einsum("...l,...lk->...k", ebv, ws.slash_db)
    head = (2.0 * om2[..., None] * sc.eta
            + 2.0 * (om2 * eps * epsb)[..., None] * sc.etab
            - cc(sc.chi, ebv) + epsb[..., None] * cc(sc.chi, ev)
            + cc(sc.chib, ev) - eps[..., None] * cc(sc.chib, ebv))
    fk = (4.0 * om2 * sc.wb - 2.0 * om2 * eta_b - 2.0 * om2 * eps * epsb * etab_b
          + 2.0 * om2 * eta_ebv - 2.0 * om2 * epsb * eta_ev
          + cs(sc.chi, b, ebv) - epsb * cs(sc.chi, b, ev)
          + cs(sc.chib, ebv, ev) - cs(sc.chib, b, ev) + eps * cs(sc.chib, b, ebv)
          - sd(nab_ebv_b, ev))
    fbk = (-2.0 * om2 * etab_ev + 2.0 * om2 * eps * etab_ebv
           + 4.0 * om2 * sc.w * eps * epsb + cs(sc.chi, ebv, ev))
    tail = (2.0 * (om2 * eps)[..., None] * d_epsb
            + np.einsum("...ik,...k->...i", slash_d_epsbv, ws.low(ev)))
    eta_dot = (head + fk[..., None] * f_d + fbk[..., None] * fb_d + tail) \
        / (2.0 * sol.om_dot2)[..., None]

    tr = lambda t: np.einsum("...ij,...ij->...", ws.gdot_inv, t)
    valid = graph.mask(0 if graph.grid.periodic1 else FD_MARGIN)
    return SurfaceGeometrySample(ws.gdot, ws.gdot_inv, chi_dot, chib_dot, eta_dot,
                                 tr(chi_dot), tr(chib_dot), valid)


# ---------------------------------------------------------------------------
# decomposition coefficients (the appendix path)

@dataclass
class PiCoefficients:
    """Expansion coefficients of ∇_{∂̇_i}∂̇_j and ∇_{∂̇_i}L̄̇ over
    (∂_k, L, L̄); coordinate (non-tensorialized) forms."""
    pi_k: np.ndarray      # (..., i, j, k)
    pi_L: np.ndarray      # (..., i, j)
    pi_Lb: np.ndarray     # (..., i, j)
    pi3_k: np.ndarray     # (..., i, k)
    pi3_Lb: np.ndarray    # (..., i)
    pi3_L: np.ndarray     # (..., i)


def pi_coefficients(graph, ws=None):
    ws = _Workspace(graph) if ws is None else ws
    sm, sc, sol = ws.sm, ws.sc, ws.sol
    om2 = sm.omega2
    gam_inv = sm.gamma_inv
    b = sm.b
    f_d, fb_d = graph.f_d, graph.fb_d
    f_dd, fb_dd = graph.f_dd, graph.fb_dd
    cc, cs, sd = ws.chi_cov, ws.chi_scal, ws.sdot
    up = lambda cov: np.einsum("...ij,...j->...i", gam_inv, cov)
    chib_mix = np.einsum("...il,...lk->...ik", sc.chib, gam_inv)   # χ̄_i^k
    chi_mix = np.einsum("...il,...lk->...ik", sc.chi, gam_inv)
    eta_b = np.einsum("...a,...a->...", sc.eta, b)
    etab_b = np.einsum("...a,...a->...", sc.etab, b)

    def symT(P, T):
        # sym(P ⊗ T)_{ij}^k = ½(P_i T_j^k + P_j T_i^k)
        return 0.5 * (P[..., :, None, None] * T[..., None, :, :]
                      + P[..., None, :, None] * np.swapaxes(T[..., None, :, :], -3, -2))

    ff = f_d[..., :, None] * f_d[..., None, :]
    fbfb = fb_d[..., :, None] * fb_d[..., None, :]
    sym_ffb = _sym2(f_d, fb_d)

    cross_vec = 2.0 * om2[..., None] * up(sc.eta) + up(cc(sc.chi, b))
    pi_k = (np.moveaxis(ws.gsl, -3, -1)                       # Γ̸^k_{ij} -> [i, j, k]
            - f_dd[..., :, :, None] * b[..., None, None, :]
            + 2.0 * symT(f_d, chib_mix) - 2.0 * symT(f_d, ws.slash_db)
            + 2.0 * symT(fb_d, chi_mix)
            - 2.0 * sym_ffb[..., :, :, None] * cross_vec[..., None, None, :]
            + ff[..., :, :, None] * (ws.slash_bb - 2.0 * up(cc(sc.chib, b))
                                     - ws.b_s)[..., None, None, :])
    pi_L = (fb_dd - 0.5 / om2[..., None, None] * sc.chib
            + (1.0 / om2)[..., None, None] * _sym2(f_d, cc(sc.chib, b))
            + 2.0 * _sym2(fb_d, sc.etab)
            - 0.5 * (cs(sc.chib, b, b) / om2)[..., None, None] * ff
            + 2.0 * sc.w[..., None, None] * fbfb
            - 2.0 * etab_b[..., None, None] * sym_ffb)
    pi_Lb = (f_dd - 0.5 / om2[..., None, None] * sc.chi
             + 2.0 * _sym2(f_d, sc.eta)
             + (1.0 / om2)[..., None, None] * _sym2(f_d, cc(sc.chi, b))
             + (2.0 * sc.wb - 2.0 * eta_b
                - 0.5 * cs(sc.chi, b, b) / om2)[..., None, None] * ff)

    # ∇_{∂̇_i} L̄̇ coefficients
    d_epsb, d_epsbv = _eps_array_derivatives(graph, sol)
    ebv = sol.epsbv
    epsb = sol.epsb
    slash_d_epsbv = d_epsbv + np.einsum("...kil,...l->...ik", ws.gsl, ebv)
    nab_ebv_b = np.einsum("...l,...lk->...k", ebv, ws.slash_db)
    chib_ebv_up = np.einsum("...lk,...l->...k", chib_mix, ebv)
    chi_ebv_up = np.einsum("...lk,...l->...k", chi_mix, ebv)
    chib_b_up = np.einsum("...lk,...l->...k", chib_mix, b)
    chi_b_up = np.einsum("...lk,...l->...k", chi_mix, b)
    pi3_k = (chib_mix + epsb[..., None, None] * chi_mix
             + f_d[..., :, None] * (-chib_b_up + chib_ebv_up
                                    - 2.0 * (om2 * epsb)[..., None] * up(sc.eta)
                                    - epsb[..., None] * chi_b_up
                                    - nab_ebv_b)[..., None, :]
             + fb_d[..., :, None] * (chi_ebv_up
                                     - 2.0 * om2[..., None] * up(sc.etab))[..., None, :]
             + slash_d_epsbv)
    pi3_Lb = (sc.eta - 0.5 / om2[..., None] * cc(sc.chi, ebv)
              + f_d * (2.0 * sc.wb - eta_b + np.einsum("...a,...a->...", sc.eta, ebv)
                       + 0.5 * cs(sc.chi, b, ebv) / om2)[..., None])
    pi3_L = (epsb[..., None] * sc.etab - 0.5 / om2[..., None] * cc(sc.chib, ebv)
             + f_d * (-epsb * etab_b + 0.5 * cs(sc.chib, b, ebv) / om2)[..., None]
             + fb_d * (2.0 * sc.w * epsb
                       + np.einsum("...a,...a->...", sc.etab, ebv))[..., None]
             + d_epsb)
    return PiCoefficients(pi_k, pi_L, pi_Lb, pi3_k, pi3_Lb, pi3_L)


def recompose_tangent_hessian(graph, pi=None):
    """Π_ij^k ∂_k + Π_ij^L L + Π_ij^{L̄} L̄ as coordinate 4-vectors."""
    pi = pi_coefficients(graph) if pi is None else pi
    sm = graph.sample()
    L, Lb, _, _ = frame_vectors(sm)
    out = (pi.pi_L[..., None] * L[..., None, None, :]
           + pi.pi_Lb[..., None] * Lb[..., None, None, :])
    out[..., 2:] += pi.pi_k
    return out


def direct_tangent_hessian(graph):
    """∇_{∂̇_i}∂̇_j directly from Christoffel symbols (no grid FD)."""
    sm = graph.sample()
    fr = tangent_frame(graph, check=False)
    gam4 = christoffel_from_sample(sm)
    out = np.zeros(graph.grid.shape + (2, 2, 4))
    out[..., 0] = graph.f_dd
    out[..., 1] = graph.fb_dd
    out += np.einsum("...mnr,...in,...jr->...ijm", gam4, fr.pdot, fr.pdot)
    return out


def recompose_chib_dot(graph, pi=None):
    """χ̄̇_ij = −γ_kl Π_ij^k ε̄^l − 2Ω² Π_ij^L − 2Ω² ε̄ Π_ij^{L̄}."""
    pi = pi_coefficients(graph) if pi is None else pi
    sm = graph.sample()
    sol = solve_null_frame(graph, check=False)
    om2 = sm.omega2
    return (-np.einsum("...kl,...ijk,...l->...ij", sm.gamma, pi.pi_k, sol.epsbv)
            - 2.0 * om2[..., None, None] * pi.pi_L
            - 2.0 * (om2 * sol.epsb)[..., None, None] * pi.pi_Lb)


def recompose_nabla_lbdot(graph, pi=None):
    """Π_{iL̄̇}^k ∂_k + Π_{iL̄̇}^{L̄} L̄ + Π_{iL̄̇}^L L as 4-vectors."""
    pi = pi_coefficients(graph) if pi is None else pi
    sm = graph.sample()
    L, Lb, _, _ = frame_vectors(sm)
    out = (pi.pi3_L[..., None] * L[..., None, :]
           + pi.pi3_Lb[..., None] * Lb[..., None, :])
    out[..., 2:] += pi.pi3_k
    return out


def direct_nabla_lbdot(graph):
    """∇_{∂̇_i}L̄̇ with the chart field b differentiated exactly and the
    solved ε̄-arrays differenced on the grid (shared with the Π path)."""
    sm = graph.sample()
    fr = tangent_frame(graph, check=False)
    sol = solve_null_frame(graph, check=False)
    gam4 = christoffel_from_sample(sm)
    d_epsb, d_epsbv = _eps_array_derivatives(graph, sol)
    shape = graph.grid.shape
    dLbdot = np.zeros(shape + (2, 4))       # ∂̇_i L̄̇^μ
    dLbdot[..., 1] = d_epsb
    # ∂̇_i b^k by the chain rule through the chart partials
    db_chain = (np.einsum("...km,...im->...ik", sm.b_d, fr.pdot))
    dLbdot[..., 2:] = db_chain + d_epsbv
    return dLbdot + np.einsum("...mnr,...in,...r->...im", gam4, fr.pdot, sol.Lbdot)


# ---------------------------------------------------------------------------
# projection oracle

def oracle_second_forms(graph, return_derivatives=False):
    """χ̇, χ̄̇, η̇ from first principles: difference the solved frame fields
    along the grid, add Christoffel terms, project on the tangent frame.

    Independent of the closed-form algebra; accuracy is set by the grid
    resolution (4th order).
    """
    sm = graph.sample()
    grid = graph.grid
    fr = tangent_frame(graph, check=False)
    sol = solve_null_frame(graph, frame=fr, check=False)
    g, _ = assemble_metric(sm)
    gam4 = christoffel_from_sample(sm)

    def grid_vec_grad(vec):
        # ∂̇_i of component arrays -> [..., i, μ]
        comps = [np.stack([grid.d1(vec[..., m], 0), grid.d1(vec[..., m], 1)], axis=-1)
                 for m in range(4)]
        return np.moveaxis(np.stack(comps, axis=-2), -1, -2)

    def cov_deriv(vec):
        dv = grid_vec_grad(vec)
        return dv + np.einsum("...mnr,...in,...r->...im", gam4, fr.pdot, vec)

    nab_Ldot = cov_deriv(sol.Ldot)
    nab_Lbdot = cov_deriv(sol.Lbdot)
    chi_dot = np.einsum("...im,...mn,...jn->...ij", nab_Ldot, g, fr.pdot)
    chib_dot = np.einsum("...im,...mn,...jn->...ij", nab_Lbdot, g, fr.pdot)
    eta_dot = 0.5 * np.einsum("...im,...mn,...n->...i", nab_Lbdot, g, sol.Ldot) \
        / sol.om_dot2[..., None]
    gdot = induced_metric(graph, frame=fr, check=False)
    gdot_inv = _inv2(gdot)
    tr = lambda t: np.einsum("...ij,...ij->...", gdot_inv, t)
    valid = graph.mask(0 if graph.grid.periodic1 else FD_MARGIN)
    geom = SurfaceGeometrySample(gdot, gdot_inv, chi_dot, chib_dot, eta_dot,
                                 tr(chi_dot), tr(chib_dot), valid)
    if return_derivatives:
        return geom, nab_Ldot, nab_Lbdot
    return geom


# ---------------------------------------------------------------------------
# the two embedded-in-a-cone specializations

def specialization_case1(graph):
    """Surface inside an outgoing cone: f ≡ s₀ constant on the grid."""
    if np.ptp(graph.f) > 1e-12:
        raise PreconditionError("case-1 specialization needs constant f")
    ws = _Workspace(graph)
    sm, sc = ws.sm, ws.sc
    om2 = sm.omega2
    gi = sm.gamma_inv
    fb_d = graph.fb_d
    grad_fb = np.einsum("...ij,...j->...i", gi, fb_d)      # ∇̸^i f̄
    dfb2 = np.einsum("...i,...i->...", fb_d, grad_fb)      # |d̸f̄|²_γ
    chi_grad_fb = np.einsum("...ij,...j->...i", sc.chi, grad_fb)
    chib_dot = (sc.chib - (om2 * dfb2)[..., None, None] * sc.chi
                - 2.0 * om2[..., None, None] * ws.Fb
                - 4.0 * om2[..., None, None] * _sym2(sc.etab, fb_d)
                - 4.0 * (sc.w * om2)[..., None, None] * (fb_d[..., :, None] * fb_d[..., None, :])
                + 4.0 * om2[..., None, None] * _sym2(fb_d, chi_grad_fb))
    chi_dot = sc.chi.copy()
    eta_dot = sc.eta + chi_grad_fb
    gdot = sm.gamma.copy()
    gdot_inv = gi.copy()
    tr = lambda t: np.einsum("...ij,...ij->...", gdot_inv, t)
    return SurfaceGeometrySample(gdot, gdot_inv, chi_dot, chib_dot, eta_dot,
                                 tr(chi_dot), tr(chib_dot), graph.mask())


def case1_trace_display(graph):
    """The displayed closed form of ṫrχ̄̇ in the cone specialization."""
    ws = _Workspace(graph)
    sm, sc = ws.sm, ws.sc
    om2 = sm.omega2
    gi = sm.gamma_inv
    fb_d = graph.fb_d
    grad_fb = np.einsum("...ij,...j->...i", gi, fb_d)
    dfb2 = np.einsum("...i,...i->...", fb_d, grad_fb)
    lap_fb = np.einsum("...ij,...ij->...", gi, ws.Fb)
    etab_dfb = np.einsum("...i,...i->...", sc.etab, grad_fb)
    chi_ff = np.einsum("...ij,...i,...j->...", sc.chi, grad_fb, grad_fb)
    return (sc.trchib - 2.0 * om2 * lap_fb - om2 * dfb2 * sc.trchi
            - 4.0 * om2 * etab_dfb - 4.0 * om2 * sc.w * dfb2 + 4.0 * om2 * chi_ff)


def specialization_case2(graph):
    """Surface inside an incoming cone: f̄ ≡ s̄₀ constant on the grid."""
    if np.ptp(graph.fb) > 1e-12:
        raise PreconditionError("case-2 specialization needs constant f̄")
    ws = _Workspace(graph)
    sm, sc, fr = ws.sm, ws.sc, ws.fr
    om2 = sm.omega2
    b = sm.b
    f_d = graph.f_d
    cc, cs, sd = ws.chi_cov, ws.chi_scal, ws.sdot
    # ε′ and ε⃗′ (the Ω⁻²-scaled frame coefficients of the case-2 frame)
    Btf = np.einsum("...ji,...i->...j", fr.B_inv, f_d)
    epsv_p = -2.0 * np.einsum("...kj,...j->...k", sm.gamma_inv, Btf)
    eps_p = -np.einsum("...kl,...k,...l->...", sm.gamma_inv, Btf, Btf)
    chib_dot = (sc.chib - 2.0 * _sym2(cc(sc.chib, b), f_d)
                + cs(sc.chib, b, b)[..., None, None] * (f_d[..., :, None] * f_d[..., None, :]))
    chi_p = sc.chi_p
    slash_db_evp = np.einsum("...jk,...k->...j", ws.slash_db, ws.low(epsv_p))
    bracket = (slash_db_evp - cc(sc.chib, epsv_p) - eps_p[..., None] * cc(sc.chib, b)
               - cc(chi_p, b) - 2.0 * sc.eta)
    dfdf = (2.0 * cs(sc.chib, b, epsv_p) + eps_p * cs(sc.chib, b, b) + cs(chi_p, b, b)
            + 4.0 * np.einsum("...a,...a->...", sc.eta, b)
            - sd(ws.slash_bb, epsv_p) + sd(ws.b_s, epsv_p) - 4.0 * sc.wb)
    chi_dot_p = (chi_p + eps_p[..., None, None] * sc.chib
                 + (sd(b, epsv_p) - 2.0)[..., None, None] * ws.F
                 + 2.0 * _sym2(bracket, f_d)
                 + dfdf[..., None, None] * (f_d[..., :, None] * f_d[..., None, :]))
    chi_dot = om2[..., None, None] * chi_dot_p
    eta_dot = (sc.eta + 0.5 * cc(sc.chib, epsv_p)
               + (2.0 * sc.wb - np.einsum("...a,...a->...", sc.eta, b)
                  - 0.5 * cs(sc.chib, b, epsv_p))[..., None] * f_d)
    gdot = induced_metric(graph, frame=fr, check=False)
    gdot_inv = _inv2(gdot)
    tr = lambda t: np.einsum("...ij,...ij->...", gdot_inv, t)
    return SurfaceGeometrySample(gdot, gdot_inv, chi_dot, chib_dot, eta_dot,
                                 tr(chi_dot), tr(chib_dot), graph.mask())


# ---------------------------------------------------------------------------
# surface files and tables

def load_surface(chart, source):
    """Surface from a spec file: grid shape plus either expression strings
    (variables t1, t2) or value arrays for f and fb."""
    import json
    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
    for key in ("grid", "f", "fb"):
        if key not in doc:
            raise ConfigurationError("surface file missing key %r" % key)
    n1, n2 = (int(v) for v in doc["grid"])
    band = tuple(doc["band"]) if "band" in doc else None
    grid = chart.theta_grid(n1, n2, band=band)
    vals = {}
    fields = {}
    for key in ("f", "fb"):
        spec = doc[key]
        if isinstance(spec, str):
            fields[key] = field_from_expression(spec, ("t1", "t2"))
        else:
            arr = np.asarray(spec, dtype=float)
            if arr.size != n1 * n2:
                raise ConfigurationError("%s has %d values, grid needs %d"
                                         % (key, arr.size, n1 * n2))
            vals[key] = arr.reshape(n1, n2)
    if fields and not vals:
        return SurfaceGraph.from_fields(chart, grid, fields["f"], fields["fb"])
    if vals and fields:
        for key, fld in fields.items():
            vals[key] = fld.value(grid.T1, grid.T2)
    return SurfaceGraph(chart, grid, vals["f"], vals["fb"], mode="fd4")


def geometry_rows(graph):
    """Per-node geometry fields for CSV export."""
    geom = second_fundamental_forms(graph)
    mask = graph.mask(extra_margin=FD_MARGIN if not graph.grid.periodic1 else 0)
    rows = []
    for i in range(graph.grid.n1):
        for j in range(graph.grid.n2):
            if not mask[i, j]:
                continue
            rows.append({
                "t1": graph.grid.t1[i], "t2": graph.grid.t2[j],
                "f": graph.f[i, j], "fb": graph.fb[i, j],
                "gdot11": geom.gdot[i, j, 0, 0], "gdot12": geom.gdot[i, j, 0, 1],
                "gdot22": geom.gdot[i, j, 1, 1],
                "trchi_dot": geom.trchi_dot[i, j],
                "trchib_dot": geom.trchib_dot[i, j],
                "hatchi2": geom.hat_chi_norm2()[i, j],
                "eta1": geom.eta_dot[i, j, 0], "eta2": geom.eta_dot[i, j, 1],
            })
    return rows
