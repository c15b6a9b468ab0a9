"""Shared-surface comparison between the plain and angularly-relabeled
Minkowski charts.

The relabeling θ² → θ² + ψ(s) maps one chart to the other while leaving
the null frame (L, L̄, ∂₁, ∂₂) geometrically fixed, so every frame scalar
of a surface must agree between the two representations.  Two families
make the comparison exact at matched evaluation points:

* constant-f surfaces: the relabeling restricted to the surface is a rigid
  θ²-shift, so choosing the relabeled grid's θ²-origin at the shift makes
  the two grids coincide node by node;
* θ²-only surfaces (f, f̄ functions of θ² alone): graph derivatives are
  exact (spectral in θ², identically zero in θ¹), the relabeled graph is
  built by per-node fixed-point solves, and invariant fields are compared
  through trigonometric interpolation in θ², with the exact relabeling
  Jacobian applied to covector components.
"""

import numpy as np
import sympy as sp

from nulltube import surface as S
from nulltube.fields import ScalarField
from nulltube.grids import _fft_diff, trig_interp_axis1

_T1, _T2 = sp.symbols("t1 t2", real=True)


def _rand_field(rng, base, amp, degree=3, theta2_only=False):
    expr = sp.Float(base)
    total = 0.0
    terms = []
    for k1 in range(0, degree + 1):
        for k2 in range(0, degree + 1):
            if k1 == 0 and k2 == 0:
                continue
            if theta2_only and k1 > 0:
                continue
            w = 1.0 / max(k1, k2) ** 4
            terms.append((rng.uniform(-1, 1) * w, k1, k2,
                          rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)))
            total += abs(terms[-1][0])
    for c, k1, k2, p1, p2 in terms:
        expr += sp.Float(c * amp / total) * sp.cos(k1 * _T1 + sp.Float(p1)) \
            * sp.cos(k2 * _T2 + sp.Float(p2))
    return ScalarField(expr, (_T1, _T2))


def _invariants(graph):
    geom = S.second_fundamental_forms(graph)
    sol = S.solve_null_frame(graph)
    eta2 = np.einsum("...ij,...i,...j->...", geom.gdot_inv, geom.eta_dot, geom.eta_dot)
    out = {
        "trchi": geom.trchi_dot,
        "trchib": geom.trchib_dot,
        "hatchi2": geom.hat_chi_norm2(),
        "hatchib2": geom.hat_chib_norm2(),
        "eta2": eta2 / sol.om_dot2,
        "eta_eps_1": geom.eta_dot[..., 0] * sol.epsbv[..., 0] / sol.om_dot2,
        "eta_eps_2": geom.eta_dot[..., 1] * sol.epsbv[..., 1] / sol.om_dot2,
    }
    return out, geom.valid


def compare_constant_f(mink, shifted, seed, n=24, band=(0.9, np.pi - 0.9)):
    """Family (a): rigid-shift matched grids; returns the max deviation."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(1.2, 1.8)
    cb = rng.uniform(1.6, 2.2)
    fb_old = _rand_field(rng, cb, 0.08)
    delta = shifted.theta2_shift(c)
    grid_old = mink.theta_grid(n, band=band)
    grid_new = shifted.theta_grid(n, band=band, t2_start=delta)
    const_f = ScalarField(sp.Float(c), (_T1, _T2))
    g_old = S.SurfaceGraph.from_fields(mink, grid_old, const_f, fb_old)
    fb_new = ScalarField(fb_old.expr.subs(_T2, _T2 - delta), (_T1, _T2))
    g_new = S.SurfaceGraph.from_fields(shifted, grid_new, const_f, fb_new)
    inv_old, m_old = _invariants(g_old)
    inv_new, m_new = _invariants(g_new)
    m = m_old & m_new
    worst = 0.0
    for key in ("trchi", "trchib", "hatchi2", "hatchib2", "eta2"):
        worst = max(worst, float(np.max(np.abs((inv_old[key] - inv_new[key])[m]))))
    # η̇·ε̄⃗: matched parametrization, compare the contraction directly
    ce_old = inv_old["eta_eps_1"] + inv_old["eta_eps_2"]
    ce_new = inv_new["eta_eps_1"] + inv_new["eta_eps_2"]
    worst = max(worst, float(np.max(np.abs((ce_old - ce_new)[m]))))
    return worst


def compare_theta2_only(mink, shifted, seed, n=32, band=(0.9, np.pi - 0.9)):
    """Family (b): θ²-only graphs, trig interpolation at matched points."""
    rng = np.random.default_rng(seed)
    f_old = _rand_field(rng, rng.uniform(1.2, 1.6), 0.08, theta2_only=True)
    fb_old = _rand_field(rng, rng.uniform(1.8, 2.2), 0.08, theta2_only=True)
    grid = mink.theta_grid(n, band=band)
    g_old = S.SurfaceGraph.from_fields(mink, grid, f_old, fb_old)
    psi = shifted.theta2_shift
    rate = shifted.parameters["rate"]
    # relabeled graph on its own uniform grid by per-node fixed point
    grid_new = shifted.theta_grid(n, band=band)
    t2n = grid_new.t2
    x = f_old.value(np.zeros_like(t2n), t2n)
    for _ in range(60):
        x = f_old.value(np.zeros_like(t2n), t2n - psi(x))
    f_new_row = x
    fb_new_row = fb_old.value(np.zeros_like(t2n), t2n - psi(x))
    f_new = np.broadcast_to(f_new_row, grid_new.shape).copy()
    fb_new = np.broadcast_to(fb_new_row, grid_new.shape).copy()

    def arrays(vals_row):
        d = np.zeros(grid_new.shape + (2,))
        dd = np.zeros(grid_new.shape + (2, 2))
        d1 = _fft_diff(vals_row, 0, grid_new.period2)
        d2 = _fft_diff(d1, 0, grid_new.period2)
        d[..., 1] = np.broadcast_to(d1, grid_new.shape)
        dd[..., 1, 1] = np.broadcast_to(d2, grid_new.shape)
        return d, dd

    f_d, f_dd = arrays(f_new_row)
    fb_d, fb_dd = arrays(fb_new_row)
    g_new = S.SurfaceGraph(shifted, grid_new, f_new, fb_new, mode="analytic",
                           f_d=f_d, f_dd=f_dd, fb_d=fb_d, fb_dd=fb_dd)
    inv_old, m_old = _invariants(g_old)
    inv_new, m_new = _invariants(g_new)
    # matched points of old nodes and the exact relabeling Jacobian there
    t2o = grid.t2
    f_at_old = f_old.value(np.zeros_like(t2o), t2o)
    targets = t2o + psi(f_at_old)
    dfo = _fft_diff(f_at_old, 0, grid.period2)
    jac = 1.0 + rate * dfo
    worst = 0.0
    rows = np.where(m_old.all(axis=1) & m_new.all(axis=1))[0]
    for key in ("trchi", "trchib", "hatchi2", "hatchib2", "eta2"):
        interp = trig_interp_axis1(inv_new[key][rows], np.broadcast_to(
            targets, (len(rows), len(targets))))
        worst = max(worst, float(np.max(np.abs(inv_old[key][rows] - interp))))
    # η̇·ε̄⃗ with the θ²-component Jacobian correction
    i1 = trig_interp_axis1(inv_new["eta_eps_1"][rows],
                           np.broadcast_to(targets, (len(rows), len(targets))))
    i2 = trig_interp_axis1(inv_new["eta_eps_2"][rows],
                           np.broadcast_to(targets, (len(rows), len(targets))))
    ce_old = inv_old["eta_eps_1"][rows] + inv_old["eta_eps_2"][rows]
    ce_new = i1 + jac[None, :] * i2
    worst = max(worst, float(np.max(np.abs(ce_old - ce_new))))
    return worst
