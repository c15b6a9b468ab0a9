"""Double-null-coordinate spacetime patches.

A chart supplies the metric data (Ω, bᵃ, γ_ab) of the line element

    g = 2Ω² (ds⊗ds̄ + ds̄⊗ds) + γ_ab (dθᵃ − bᵃ ds) ⊗ (dθᵇ − bᵇ ds)

together with all partial derivatives up to total order 2, over a validity
rectangle in (s, s̄) and an angular patch (torus, or a spherical band
excluding the poles).  Coordinates are ordered (s, s̄, θ¹, θ²) = (0, 1, 2, 3).

Any smooth data (Ω > 0, b, γ positive definite) defines a valid double-null
chart: the coordinate functions s and s̄ satisfy the eikonal equations
identically because g^{ss} = g^{s̄s̄} = 0 for this metric form.
"""

import json
from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.interpolate import NdBSpline, make_interp_spline
from scipy.special import lambertw

from .errors import ChartLoadError, ConfigurationError, DegenerateMetricError, DomainError
from .fields import ScalarField
from .grids import ThetaGrid

FIELD_NAMES = ("omega", "b1", "b2", "gamma11", "gamma12", "gamma22")


@dataclass
class ChartPoint:
    s: float
    sb: float
    t1: float
    t2: float

    def array(self):
        return np.array([self.s, self.sb, self.t1, self.t2], dtype=float)


def as_points(p):
    if isinstance(p, ChartPoint):
        return p.array()
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1] != 4:
        raise ConfigurationError("points must have a trailing axis of length 4")
    return arr


@dataclass
class MetricSample:
    """Metric data and partials at a batch of points.

    Field axes come first in b/γ, derivative axes last; all derivative axes
    index the coordinates (s, s̄, θ¹, θ²).
    """
    points: np.ndarray        # (..., 4)
    omega: np.ndarray         # (...)
    omega_d: np.ndarray       # (..., 4)
    omega_dd: np.ndarray      # (..., 4, 4)
    b: np.ndarray             # (..., 2)
    b_d: np.ndarray           # (..., 2, 4)
    b_dd: np.ndarray          # (..., 2, 4, 4)
    gamma: np.ndarray         # (..., 2, 2)
    gamma_d: np.ndarray       # (..., 2, 2, 4)
    gamma_dd: np.ndarray      # (..., 2, 2, 4, 4)

    @property
    def omega2(self):
        return self.omega ** 2

    @property
    def gamma_inv(self):
        return _inv2(self.gamma)

    def check(self, atol=1e-12):
        """Raise if γ is not symmetric positive definite at every point."""
        if not np.allclose(self.gamma[..., 0, 1], self.gamma[..., 1, 0], atol=atol):
            raise DegenerateMetricError("γ is not symmetric")
        det = self.gamma[..., 0, 0] * self.gamma[..., 1, 1] - self.gamma[..., 0, 1] ** 2
        if np.any(det <= 0.0) or np.any(self.gamma[..., 0, 0] <= 0.0):
            raise DegenerateMetricError("γ is not positive definite")
        if np.any(self.omega <= 0.0):
            raise DegenerateMetricError("Ω must be positive")
        return self


def _inv2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


class Topology:
    """Angular patch description."""

    def __init__(self, kind, t1_min, t1_max, period2=2.0 * np.pi):
        if kind not in ("torus", "spherical"):
            raise ConfigurationError("unknown topology %r" % kind)
        self.kind = kind
        self.t1_min = float(t1_min)
        self.t1_max = float(t1_max)
        self.period2 = float(period2)

    @property
    def periodic1(self):
        return self.kind == "torus"

    def contains_t1(self, t1, tol=1e-12):
        if self.periodic1:
            return np.ones_like(np.asarray(t1, dtype=float), dtype=bool)
        t1 = np.asarray(t1, dtype=float)
        return (t1 >= self.t1_min - tol) & (t1 <= self.t1_max + tol)

    def grid(self, n1, n2=None, band=None, t2_start=0.0):
        """Uniform grid on the patch; ``band=(lo, hi)`` restricts θ¹."""
        n2 = n1 if n2 is None else n2
        lo, hi = (self.t1_min, self.t1_max) if band is None else band
        return ThetaGrid(n1, n2, lo, hi, self.periodic1, self.period2, t2_start)

    def to_dict(self):
        return {"kind": self.kind, "t1_min": self.t1_min, "t1_max": self.t1_max,
                "t2_period": self.period2}


class DoubleNullChart:
    """An analytic or interpolated double-null patch."""

    def __init__(self, name, backend, s_range, sb_range, topology, parameters=None):
        self.name = name
        self._backend = backend
        self.s_range = (float(s_range[0]), float(s_range[1]))
        self.sb_range = (float(sb_range[0]), float(sb_range[1]))
        self.topology = topology
        self.parameters = dict(parameters or {})

    def __repr__(self):
        return "DoubleNullChart(%r)" % self.name

    def contains(self, points, tol=1e-12):
        pts = as_points(points)
        ok = (pts[..., 0] >= self.s_range[0] - tol) & (pts[..., 0] <= self.s_range[1] + tol)
        ok &= (pts[..., 1] >= self.sb_range[0] - tol) & (pts[..., 1] <= self.sb_range[1] + tol)
        ok &= self.topology.contains_t1(pts[..., 2], tol)
        return ok

    def require_inside(self, points):
        pts = as_points(points)
        for idx, name_, rng in ((0, "s", self.s_range), (1, "s̄", self.sb_range)):
            v = pts[..., idx]
            if np.any(v < rng[0] - 1e-12) or np.any(v > rng[1] + 1e-12):
                bad = float(v.min()) if np.any(v < rng[0]) else float(v.max())
                raise DomainError("%s=%.17g outside validity range (%g, %g) of chart %s"
                                  % (name_, bad, rng[0], rng[1], self.name))
        if not np.all(self.topology.contains_t1(pts[..., 2])):
            raise DomainError("θ¹ outside angular patch [%g, %g] of chart %s"
                              % (self.topology.t1_min, self.topology.t1_max, self.name))
        return pts

    def eval(self, points, validate=True):
        pts = self.require_inside(points) if validate else as_points(points)
        return self._backend(pts)

    def theta_grid(self, n1, n2=None, band=None, t2_start=0.0):
        return self.topology.grid(n1, n2, band, t2_start)

    def fd_scale(self):
        """Coordinate scale used for finite-difference steps.

        A quarter of the smallest validity half-width, capped at 1: small
        enough that 4th-order stencils stay accurate near the angular patch
        edges, large enough to stay far above roundoff.
        """
        half_s = (self.s_range[1] - self.s_range[0]) / 2.0
        half_sb = (self.sb_range[1] - self.sb_range[0]) / 2.0
        return 0.125 * min(half_s, half_sb, 1.0)


def eval_chart(chart, p):
    """Metric data (Ω, b, γ) and partials at a point or point batch."""
    return chart.eval(p)


# ---------------------------------------------------------------------------
# metric assembly

def assemble_metric(sample, with_inverse=True):
    """Coordinate components g_{μν} (..., 4, 4) of the double-null metric,
    and its inverse.  Raises on a numerically singular result."""
    om2 = sample.omega2
    b = sample.b
    gam = sample.gamma
    shape = om2.shape
    g = np.zeros(shape + (4, 4))
    gb = np.einsum("...ab,...b->...a", gam, b)
    g[..., 0, 0] = np.einsum("...a,...a->...", gb, b)
    g[..., 0, 1] = 2.0 * om2
    g[..., 1, 0] = 2.0 * om2
    for a in range(2):
        g[..., 0, 2 + a] = -gb[..., a]
        g[..., 2 + a, 0] = -gb[..., a]
    g[..., 2:, 2:] = gam
    if not with_inverse:
        return g
    det = np.linalg.det(g)
    scale = np.max(np.abs(g), axis=(-2, -1))
    if np.any(np.abs(det) < 1e-14 * scale ** 4):
        raise DegenerateMetricError("metric determinant below 1e-14 of scale")
    return g, np.linalg.inv(g)


def metric_partials(sample):
    """∂_μ g_{αβ}, shape (..., 4, 4, 4) with the derivative axis last."""
    om = sample.omega
    om_d = sample.omega_d
    b = sample.b
    b_d = sample.b_d
    gam = sample.gamma
    gam_d = sample.gamma_d
    shape = om.shape
    gd = np.zeros(shape + (4, 4, 4))
    gb_d = (np.einsum("...abm,...b->...am", gam_d, b)
            + np.einsum("...ab,...bm->...am", gam, b_d))
    g00_d = (np.einsum("...abm,...a,...b->...m", gam_d, b, b)
             + 2.0 * np.einsum("...ab,...am,...b->...m", gam, b_d, b))
    gd[..., 0, 0, :] = g00_d
    gd[..., 0, 1, :] = 4.0 * om[..., None] * om_d
    gd[..., 1, 0, :] = gd[..., 0, 1, :]
    for a in range(2):
        gd[..., 0, 2 + a, :] = -gb_d[..., a, :]
        gd[..., 2 + a, 0, :] = -gb_d[..., a, :]
    gd[..., 2:, 2:, :] = gam_d
    return gd


def lorentzian_signature_ok(g):
    """True where g has exactly one negative eigenvalue."""
    ev = np.linalg.eigvalsh(g)
    return np.sum(ev < 0.0, axis=-1) == 1


def verify_eikonal(chart, p):
    """Residual triple (|g(∇s,∇s)|, |g(∇s̄,∇s̄)|, |g(L′,L̄′) − 2Ω⁻²|)."""
    sample = chart.eval(p)
    _, ginv = assemble_metric(sample)
    r1 = np.abs(ginv[..., 0, 0])
    r2 = np.abs(ginv[..., 1, 1])
    r3 = np.abs(4.0 * ginv[..., 0, 1] - 2.0 / sample.omega2)
    return r1, r2, r3


# ---------------------------------------------------------------------------
# analytic backends

class _SympyBackend:
    """Six lambdified fields with exact partials to order 2."""

    def __init__(self, exprs, symbols):
        self.fields = {name: ScalarField(exprs[name], symbols) for name in FIELD_NAMES}

    def __call__(self, pts):
        args = (pts[..., 0], pts[..., 1], pts[..., 2], pts[..., 3])
        shape = pts.shape[:-1]
        f = self.fields
        om = f["omega"].value(*args)
        om_d = f["omega"].grad(*args)
        om_dd = f["omega"].hess(*args)
        b = np.empty(shape + (2,))
        b_d = np.empty(shape + (2, 4))
        b_dd = np.empty(shape + (2, 4, 4))
        for a, nm in enumerate(("b1", "b2")):
            b[..., a] = f[nm].value(*args)
            b_d[..., a, :] = f[nm].grad(*args)
            b_dd[..., a, :, :] = f[nm].hess(*args)
        gam = np.empty(shape + (2, 2))
        gam_d = np.empty(shape + (2, 2, 4))
        gam_dd = np.empty(shape + (2, 2, 4, 4))
        for (i, j, nm) in ((0, 0, "gamma11"), (0, 1, "gamma12"), (1, 1, "gamma22")):
            gam[..., i, j] = f[nm].value(*args)
            gam_d[..., i, j, :] = f[nm].grad(*args)
            gam_dd[..., i, j, :, :] = f[nm].hess(*args)
            if i != j:
                gam[..., j, i] = gam[..., i, j]
                gam_d[..., j, i, :] = gam_d[..., i, j, :]
                gam_dd[..., j, i, :, :] = gam_dd[..., i, j, :, :]
        return MetricSample(pts, om, om_d, om_dd, b, b_d, b_dd, gam, gam_d, gam_dd)


def _zero_like(shape):
    return np.zeros(shape)


class _KruskalBackend:
    """Schwarzschild in Kruskal-type double-null coordinates.

    r(s, s̄) solves (r/2M − 1) e^{r/2M} = s·s̄, i.e. r = 2M(1 + W(s·s̄/e)).
    Ω² = (8M³/r) e^{−r/2M}, b = 0, γ = diag(r², r² sin²θ¹).
    """

    def __init__(self, mass):
        self.M = float(mass)

    def _radius(self, pts):
        M = self.M
        s = pts[..., 0]
        sb = pts[..., 1]
        x = s * sb
        if np.any(x <= -0.999):
            raise DomainError("s·s̄ ≤ -0.999: point beyond the r=0 singularity margin")
        w = np.real(lambertw(x / np.e))
        r = 2.0 * M * (1.0 + w)
        shape = np.shape(r)
        A = (4.0 * M * M / r) * np.exp(-r / (2.0 * M))
        Ap = -A * (1.0 / r + 1.0 / (2.0 * M))
        App = A * (1.0 / r + 1.0 / (2.0 * M)) ** 2 + A / r ** 2
        r_d = np.zeros(shape + (4,))
        r_d[..., 0] = A * sb
        r_d[..., 1] = A * s
        r_dd = np.zeros(shape + (4, 4))
        r_dd[..., 0, 0] = Ap * A * sb * sb
        r_dd[..., 1, 1] = Ap * A * s * s
        m = Ap * A * s * sb + A
        r_dd[..., 0, 1] = m
        r_dd[..., 1, 0] = m
        return r, r_d, r_dd, A, Ap, App

    def __call__(self, pts):
        M = self.M
        shape = pts.shape[:-1]
        r, r_d, r_dd, A, Ap, App = self._radius(pts)
        # Ω = sqrt(2 M A(r)); chain rule through r
        P = 2.0 * M * A
        Pp = 2.0 * M * Ap
        Ppp = 2.0 * M * App
        om = np.sqrt(P)
        Qp = Pp / (2.0 * om)
        Qpp = Ppp / (2.0 * om) - Pp ** 2 / (4.0 * P * om)
        om_d = Qp[..., None] * r_d
        om_dd = (Qpp[..., None, None] * r_d[..., :, None] * r_d[..., None, :]
                 + Qp[..., None, None] * r_dd)
        b = _zero_like(shape + (2,))
        b_d = _zero_like(shape + (2, 4))
        b_dd = _zero_like(shape + (2, 4, 4))
        # γ11 = r², γ22 = r² sin²θ¹
        g11 = r ** 2
        g11_d = 2.0 * r[..., None] * r_d
        g11_dd = 2.0 * (r_d[..., :, None] * r_d[..., None, :]
                        + r[..., None, None] * r_dd)
        t1 = pts[..., 2]
        u = np.sin(t1) ** 2
        u_d = np.zeros(shape + (4,))
        u_d[..., 2] = np.sin(2.0 * t1)
        u_dd = np.zeros(shape + (4, 4))
        u_dd[..., 2, 2] = 2.0 * np.cos(2.0 * t1)
        g22 = g11 * u
        g22_d = g11_d * u[..., None] + g11[..., None] * u_d
        g22_dd = (g11_dd * u[..., None, None]
                  + g11_d[..., :, None] * u_d[..., None, :]
                  + u_d[..., :, None] * g11_d[..., None, :]
                  + g11[..., None, None] * u_dd)
        gam = np.zeros(shape + (2, 2))
        gam_d = np.zeros(shape + (2, 2, 4))
        gam_dd = np.zeros(shape + (2, 2, 4, 4))
        gam[..., 0, 0] = g11
        gam[..., 1, 1] = g22
        gam_d[..., 0, 0, :] = g11_d
        gam_d[..., 1, 1, :] = g22_d
        gam_dd[..., 0, 0, :, :] = g11_dd
        gam_dd[..., 1, 1, :, :] = g22_dd
        return MetricSample(pts, om, om_d, om_dd, b, b_d, b_dd, gam, gam_d, gam_dd)

    def radius(self, pts):
        """Area radius r(s, s̄)."""
        return self._radius(as_points(pts))[0]


class _SplineBackend:
    """Tensor-product B-spline interpolation of gridded field samples."""

    def __init__(self, axes, field_values, order):
        if order % 2 == 0 or order < 3:
            raise ChartLoadError("spline order must be odd and >= 3, got %d" % order)
        self.splines = {}
        for name, vals in field_values.items():
            self.splines[name] = _fit_ndspline(axes, vals, order)

    def __call__(self, pts):
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 4)
        out = {}
        for name, spl in self.splines.items():
            val = spl(flat).reshape(shape)
            grad = np.empty(shape + (4,))
            hess = np.empty(shape + (4, 4))
            for i in range(4):
                nu = [0, 0, 0, 0]
                nu[i] = 1
                grad[..., i] = spl(flat, nu=nu).reshape(shape)
                for j in range(i, 4):
                    nu2 = [0, 0, 0, 0]
                    nu2[i] += 1
                    nu2[j] += 1
                    v = spl(flat, nu=nu2).reshape(shape)
                    hess[..., i, j] = v
                    hess[..., j, i] = v
            out[name] = (val, grad, hess)
        om, om_d, om_dd = out["omega"]
        b = np.stack([out["b1"][0], out["b2"][0]], axis=-1)
        b_d = np.stack([out["b1"][1], out["b2"][1]], axis=-2)
        b_dd = np.stack([out["b1"][2], out["b2"][2]], axis=-3)
        gam = np.empty(shape + (2, 2))
        gam_d = np.empty(shape + (2, 2, 4))
        gam_dd = np.empty(shape + (2, 2, 4, 4))
        for (i, j, nm) in ((0, 0, "gamma11"), (0, 1, "gamma12"), (1, 1, "gamma22")):
            gam[..., i, j] = out[nm][0]
            gam_d[..., i, j, :] = out[nm][1]
            gam_dd[..., i, j, :, :] = out[nm][2]
            gam[..., j, i] = gam[..., i, j]
            gam_d[..., j, i, :] = gam_d[..., i, j, :]
            gam_dd[..., j, i, :, :] = gam_dd[..., i, j, :, :]
        return MetricSample(pts, om, om_d, om_dd, b, b_d, b_dd, gam, gam_d, gam_dd)


def _fit_ndspline(axes, values, k):
    """Chain 1-D interpolating spline fits into an NdBSpline."""
    c = np.asarray(values, dtype=float)
    knots = []
    for ax, x in enumerate(axes):
        spl = make_interp_spline(x, np.moveaxis(c, ax, 0), k=k, axis=0)
        knots.append(spl.t)
        c = np.moveaxis(spl.c, 0, ax)
    return NdBSpline(tuple(knots), c, k)


# ---------------------------------------------------------------------------
# builtin charts

_S, _SB, _T1, _T2 = sp.symbols("s sb t1 t2", real=True)
_POLE_MARGIN = 0.2


def make_minkowski():
    r = _S + _SB
    exprs = {"omega": sp.Integer(1), "b1": sp.Integer(0), "b2": sp.Integer(0),
             "gamma11": r ** 2, "gamma12": sp.Integer(0),
             "gamma22": r ** 2 * sp.sin(_T1) ** 2}
    topo = Topology("spherical", _POLE_MARGIN, np.pi - _POLE_MARGIN)
    return DoubleNullChart("minkowski", _SympyBackend(exprs, (_S, _SB, _T1, _T2)),
                           (0.05, 4.0), (0.05, 4.0), topo)


def make_minkowski_shifted(rate=0.1, curv=0.0):
    """Minkowski after the angular relabeling θ² → θ² + ψ(s) with
    ψ'(s) = rate + curv·s, which produces b = (0, ψ'(s)) ≠ 0."""
    r = _S + _SB
    psi_prime = sp.Float(rate) + sp.Float(curv) * _S
    exprs = {"omega": sp.Integer(1), "b1": sp.Integer(0), "b2": psi_prime,
             "gamma11": r ** 2, "gamma12": sp.Integer(0),
             "gamma22": r ** 2 * sp.sin(_T1) ** 2}
    topo = Topology("spherical", _POLE_MARGIN, np.pi - _POLE_MARGIN)
    chart = DoubleNullChart("minkowski_shifted", _SympyBackend(exprs, (_S, _SB, _T1, _T2)),
                            (0.05, 4.0), (0.05, 4.0), topo,
                            parameters={"rate": rate, "curv": curv})
    chart.theta2_shift = lambda s: rate * s + 0.5 * curv * s * s
    return chart


def make_schwarzschild_kruskal(M=1.0):
    if M <= 0:
        raise ConfigurationError("mass must be positive, got %g" % M)
    topo = Topology("spherical", _POLE_MARGIN, np.pi - _POLE_MARGIN)
    chart = DoubleNullChart("schwarzschild_kruskal", _KruskalBackend(M),
                            (-0.5, 1.5), (0.05, 1.5), topo, parameters={"M": M})
    chart.radius = chart._backend.radius
    return chart


def make_wavy(amp=0.1):
    """Generic analytic double-null data on a torus patch.

    Every structure coefficient (including η, η̄ and ∂_s b couplings) is
    nonzero here, which makes it the chart of choice for validating the
    closed-form surface evaluators against the projection oracle.
    """
    a = sp.Float(amp)
    exprs = {
        "omega": 1 + a * sp.sin(_T1) * sp.cos(_T2) * sp.cos(0.7 * _SB - 0.3 * _S)
                 + sp.Rational(1, 2) * a * sp.sin(0.4 * _S + 0.6 * _SB),
        "b1": a * sp.sin(_T2) * sp.cos(0.5 * _S) + sp.Rational(1, 2) * a * sp.cos(_T1 + 0.4 * _SB),
        "b2": a * sp.cos(_T1) * sp.sin(0.6 * _SB) - sp.Rational(1, 2) * a * sp.sin(_T2 + 0.3 * _S),
        "gamma11": 1 + 0.8 * a * sp.sin(_T1 + 0.2 * _SB) * sp.cos(0.3 * _S),
        "gamma12": sp.Rational(1, 2) * a * sp.sin(_T1 - _T2 + 0.5 * _S - 0.4 * _SB),
        "gamma22": 1 + 0.8 * a * sp.cos(_T2 - 0.4 * _S) * sp.sin(0.5 * _SB + 0.3),
    }
    if amp <= 0 or amp > 0.15:
        raise ConfigurationError("wavy amplitude must lie in (0, 0.15], got %g" % amp)
    topo = Topology("torus", 0.0, 2.0 * np.pi)
    return DoubleNullChart("wavy", _SympyBackend(exprs, (_S, _SB, _T1, _T2)),
                           (-1.0, 1.0), (-1.0, 1.0), topo, parameters={"amp": amp})


_BUILTIN = {
    "minkowski": make_minkowski,
    "minkowski_shifted": make_minkowski_shifted,
    "schwarzschild_kruskal": make_schwarzschild_kruskal,
    "wavy": make_wavy,
}


def builtin_charts():
    """Catalogue of bundled chart factories."""
    return dict(_BUILTIN)


def make_chart(name, **params):
    try:
        factory = _BUILTIN[name]
    except KeyError:
        raise ConfigurationError("unknown chart %r (available: %s)"
                                 % (name, ", ".join(sorted(_BUILTIN)))) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError("bad parameters for chart %r: %s" % (name, exc)) from None


# ---------------------------------------------------------------------------
# chart files

def load_chart(source):
    """Build a chart from the gridded JSON chart format.

    ``source`` is a path or an already-parsed dict.  Required keys: name,
    topology, domain, grid, omega, gamma11, gamma12, gamma22; b1/b2 default
    to zero.  Arrays are row-major over (s, s̄, θ¹, θ²).
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ChartLoadError("malformed chart file: %s" % exc) from exc
    for key in ("name", "topology", "domain", "grid", "omega",
                "gamma11", "gamma12", "gamma22"):
        if key not in doc:
            raise ChartLoadError("chart file missing key %r" % key)
    topo_doc = doc["topology"]
    topo = Topology(topo_doc.get("kind", "torus"), topo_doc["t1_min"], topo_doc["t1_max"],
                    topo_doc.get("t2_period", 2.0 * np.pi))
    dom = doc["domain"]
    shape = tuple(int(n) for n in doc["grid"])
    if len(shape) != 4:
        raise ChartLoadError("grid must have 4 axes, got %r" % (doc["grid"],))
    s_ax = np.linspace(dom["s"][0], dom["s"][1], shape[0])
    sb_ax = np.linspace(dom["sb"][0], dom["sb"][1], shape[1])
    t1_ax = np.linspace(topo.t1_min, topo.t1_max, shape[2])
    t2_ax = np.linspace(0.0, topo.period2, shape[3])
    order = int(doc.get("order", 3))
    values = {}
    for name in FIELD_NAMES:
        if name in ("b1", "b2") and name not in doc:
            values[name] = np.zeros(shape)
            continue
        arr = np.asarray(doc[name], dtype=float)
        if arr.size != int(np.prod(shape)):
            raise ChartLoadError("field %r has %d values, grid needs %d"
                                 % (name, arr.size, int(np.prod(shape))))
        values[name] = arr.reshape(shape)
    if np.any(values["omega"] <= 0.0):
        idx = int(np.argmax(values["omega"].ravel() <= 0.0))
        raise ChartLoadError("non-positive Ω at flat grid index %d" % idx)
    det = values["gamma11"] * values["gamma22"] - values["gamma12"] ** 2
    if np.any(det <= 0.0) or np.any(values["gamma11"] <= 0.0):
        idx = int(np.argmax((det <= 0.0).ravel() | (values["gamma11"] <= 0.0).ravel()))
        raise ChartLoadError("γ not positive definite at flat grid index %d" % idx)
    backend = _SplineBackend((s_ax, sb_ax, t1_ax, t2_ax), values, order)
    return DoubleNullChart(str(doc["name"]), backend,
                           (dom["s"][0], dom["s"][1]), (dom["sb"][0], dom["sb"][1]),
                           topo, parameters={"order": order})


def sample_chart_to_dict(chart, shape, order=3):
    """Sample a chart onto a grid in the chart-file layout (for tests/export)."""
    ns, nsb, n1, n2 = shape
    s_ax = np.linspace(chart.s_range[0], chart.s_range[1], ns)
    sb_ax = np.linspace(chart.sb_range[0], chart.sb_range[1], nsb)
    t1_ax = np.linspace(chart.topology.t1_min, chart.topology.t1_max, n1)
    t2_ax = np.linspace(0.0, chart.topology.period2, n2)
    S, SB, T1, T2 = np.meshgrid(s_ax, sb_ax, t1_ax, t2_ax, indexing="ij")
    pts = np.stack([S, SB, T1, T2], axis=-1)
    sm = chart.eval(pts, validate=False)
    doc = {
        "name": chart.name + "_gridded",
        "topology": chart.topology.to_dict(),
        "domain": {"s": list(chart.s_range), "sb": list(chart.sb_range)},
        "grid": [ns, nsb, n1, n2],
        "order": order,
        "omega": sm.omega.ravel().tolist(),
        "b1": sm.b[..., 0].ravel().tolist(),
        "b2": sm.b[..., 1].ravel().tolist(),
        "gamma11": sm.gamma[..., 0, 0].ravel().tolist(),
        "gamma12": sm.gamma[..., 0, 1].ravel().tolist(),
        "gamma22": sm.gamma[..., 1, 1].ravel().tolist(),
    }
    return doc
