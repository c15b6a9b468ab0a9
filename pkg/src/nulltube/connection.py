"""Ambient connection, curvature, and structure coefficients.

Everything is computed from chart metric data through the Christoffel
symbols; the closed-form identities (covariant-derivative decompositions,
the Lie-derivative identity for b, the Raychaudhuri equation) are exposed as
residual reports so tests can set tolerance policy centrally.

Conventions: coordinates (s, s̄, θ¹, θ²); L = ∂_s̄, L̄ = ∂_s + bᵃ∂_a,
L′ = Ω⁻²L, L̄′ = Ω⁻²L̄; angular (leaf) indices a, b ∈ {0, 1} map to
coordinate slots 2 + a.
"""

from dataclasses import dataclass

import numpy as np

from .charts import assemble_metric, metric_partials
from .errors import StencilError

_EPS16 = float(np.finfo(float).eps) ** (1.0 / 6.0)


def default_fd_step(chart):
    """eps^(1/6) times the chart's coordinate scale."""
    return _EPS16 * chart.fd_scale()


# ---------------------------------------------------------------------------
# frames

def frame_vectors(sample):
    """Coordinate components of L, L̄, L′, L̄′ at the sample points."""
    shape = sample.omega.shape
    L = np.zeros(shape + (4,))
    L[..., 1] = 1.0
    Lb = np.zeros(shape + (4,))
    Lb[..., 0] = 1.0
    Lb[..., 2] = sample.b[..., 0]
    Lb[..., 3] = sample.b[..., 1]
    om2 = sample.omega2[..., None]
    return L, Lb, L / om2, Lb / om2


def frame_residuals(sample):
    """Max violations of the null-frame algebra: g(L,L), g(L̄,L̄),
    g(L,L̄′)−2, g(L′,L̄)−2, and g(L,L̄)−2Ω² (relative)."""
    g, _ = assemble_metric(sample)
    L, Lb, Lp, Lbp = frame_vectors(sample)

    def ip(x, y):
        return np.einsum("...m,...mn,...n->...", x, g, y)

    r = [np.abs(ip(L, L)), np.abs(ip(Lb, Lb)),
         np.abs(ip(L, Lbp) - 2.0), np.abs(ip(Lp, Lb) - 2.0),
         np.abs(ip(L, Lb) - 2.0 * sample.omega2) / (2.0 * sample.omega2)]
    return np.max(np.stack(r, axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# Christoffel symbols and curvature

def christoffel_from_sample(sample, return_metric=False):
    """Γ^m_{ab} (..., 4, 4, 4) from assembled g and its exact partials."""
    g, ginv = assemble_metric(sample)
    gd = metric_partials(sample)                   # gd[..., α, β, m] = ∂_m g_{αβ}
    # Γ_{σab} = ½(∂_a g_{σb} + ∂_b g_{σa} − ∂_σ g_{ab})
    low = 0.5 * (np.swapaxes(gd, -1, -2)           # [σ,a,b] <- ∂_a g_{σb}
                 + gd                              # [σ,a,b] <- ∂_b g_{σa}
                 - np.moveaxis(gd, -1, -3))        # [σ,a,b] <- ∂_σ g_{ab}
    gamma = np.einsum("...ms,...sab->...mab", ginv, low)
    if return_metric:
        return gamma, g, ginv, low
    return gamma


def christoffel(chart, p):
    """Γ^m_{ab} at a point or point batch."""
    return christoffel_from_sample(chart.eval(p))


@dataclass
class CurvatureSample:
    gamma: np.ndarray   # Γ^m_{ab}
    ric: np.ndarray     # Ric_{ab}
    r_ll: np.ndarray    # Ric(L, L)


def stencil_ok(chart, pts, h=None, directions=(0, 1, 2, 3)):
    """Per-point mask: all 4th-order stencil offsets stay inside the chart."""
    h = default_fd_step(chart) if h is None else float(h)
    pts = np.asarray(pts, dtype=float)
    ok = np.ones(pts.shape[:-1], dtype=bool)
    for d in directions:
        for k in (-2, 2):
            shifted = pts.copy()
            shifted[..., d] += k * h
            ok &= chart.contains(shifted)
    return ok


def _stencil_points(chart, pts, h, directions):
    offsets = []
    for d in directions:
        for k in (-2, -1, 1, 2):
            e = np.zeros(4)
            e[d] = k * h
            offsets.append(e)
    stack = pts[None, ...] + np.array(offsets)[(slice(None),) + (None,) * (pts.ndim - 1)]
    if not np.all(chart.contains(stack.reshape(-1, 4))):
        raise StencilError("finite-difference stencil (step %.3g) exits the chart domain" % h)
    return stack


_D1_W4 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0   # offsets -2,-1,1,2


def ricci(chart, p, step=None):
    """Ricci tensor via 4th-order finite differences of Γ.

    Γ itself is exact (from analytic metric partials); only ∂Γ is
    differenced, with the step from the charts-module policy.
    """
    pts = chart.require_inside(p)
    h = default_fd_step(chart) if step is None else float(step)
    stack = _stencil_points(chart, pts, h, range(4))
    gam_stack = christoffel_from_sample(chart.eval(stack, validate=False))
    gam0 = christoffel_from_sample(chart.eval(pts, validate=False))
    dG = np.empty(pts.shape[:-1] + (4, 4, 4, 4))   # [..., m, a, b, d]
    for d in range(4):
        block = gam_stack[4 * d:4 * d + 4]
        dG[..., d] = np.einsum("k,k...->...", _D1_W4, block) / h
    ric = (np.einsum("...mabm->...ab", dG)
           - np.einsum("...mmba->...ab", dG)
           + np.einsum("...mml,...lab->...ab", gam0, gam0)
           - np.einsum("...mal,...lmb->...ab", gam0, gam0))
    return CurvatureSample(gam0, ric, ric[..., 1, 1])


def metric_compatibility_residual(chart, p, step=None):
    """Max |∇_m g_{ab}| with ∂g analytic and Γ exact (identity check)."""
    sample = chart.eval(p)
    gam, g, _, _ = christoffel_from_sample(sample, return_metric=True)
    gd = metric_partials(sample)
    nabla_g = (np.moveaxis(gd, -1, -3)
               - np.einsum("...lma,...lb->...mab", gam, g)
               - np.einsum("...lmb,...al->...mab", gam, g))
    return np.max(np.abs(nabla_g), axis=(-3, -2, -1))


# ---------------------------------------------------------------------------
# structure coefficients

@dataclass
class StructureCoefficients:
    """ω, ω̄, η, η̄, χ, χ̄ with primed variants, traces and shears."""
    w: np.ndarray          # ω = L log Ω
    wb: np.ndarray         # ω̄ = L̄ log Ω
    eta: np.ndarray        # η_a
    etab: np.ndarray       # η̄_a
    chi: np.ndarray        # χ_ab
    chib: np.ndarray       # χ̄_ab
    gamma: np.ndarray
    gamma_inv: np.ndarray
    omega2: np.ndarray

    @property
    def chi_p(self):
        return self.chi / self.omega2[..., None, None]

    @property
    def chib_p(self):
        return self.chib / self.omega2[..., None, None]

    @property
    def trchi(self):
        return np.einsum("...ab,...ab->...", self.gamma_inv, self.chi)

    @property
    def trchib(self):
        return np.einsum("...ab,...ab->...", self.gamma_inv, self.chib)

    @property
    def hat_chi(self):
        return self.chi - 0.5 * self.trchi[..., None, None] * self.gamma

    @property
    def hat_chib(self):
        return self.chib - 0.5 * self.trchib[..., None, None] * self.gamma

    def hat_chi_norm2(self):
        """|χ̂|² with both index pairs raised by γ."""
        gi = self.gamma_inv
        return np.einsum("...ac,...bd,...ab,...cd->...", gi, gi, self.hat_chi, self.hat_chi)


def structure_coefficients_from_sample(sample):
    gam4, g, ginv, low = christoffel_from_sample(sample, return_metric=True)
    om = sample.omega
    om2 = sample.omega2
    b = sample.b
    # ω, ω̄ from directional derivatives of log Ω
    w = sample.omega_d[..., 1] / om
    wb = (sample.omega_d[..., 0] + np.einsum("...a,...a->...", b, sample.omega_d[..., 2:])) / om
    L, Lb, _, _ = frame_vectors(sample)
    # ∇_{∂_A} L and ∇_{∂_A} L̄ as 4-vectors, A = 2+a
    nab_L = gam4[..., :, 2:, 1]                       # (..., m, a)
    nab_L = np.moveaxis(nab_L, -1, -2)                # (..., a, m)
    dLb = np.zeros(sample.b_d.shape[:-2] + (4, 4))    # ∂_ν L̄^μ
    dLb[..., 2, :] = sample.b_d[..., 0, :]
    dLb[..., 3, :] = sample.b_d[..., 1, :]
    nab_Lb = (np.moveaxis(dLb[..., :, 2:], -1, -2)
              + np.einsum("...man,...n->...am", gam4[..., :, 2:, :], Lb))
    ang = g[..., :, 2:]                               # g_{μ, 2+b}
    chi = np.einsum("...am,...mb->...ab", nab_L, ang)
    chib = np.einsum("...am,...mb->...ab", nab_Lb, ang)
    eta = (0.5 / om2)[..., None] * np.einsum("...am,...mn,...n->...a", nab_Lb, g, L)
    etab = (0.5 / om2)[..., None] * np.einsum("...am,...mn,...n->...a", nab_L, g, Lb)
    return StructureCoefficients(w, wb, eta, etab, chi, chib,
                                 sample.gamma, sample.gamma_inv, om2)


def structure_coefficients(chart, p):
    """All §-coefficients of the double-null foliation at p (batched)."""
    return structure_coefficients_from_sample(chart.eval(p))


def leaf_christoffel(sample):
    """Christoffel symbols Γ̸^c_{ab} of (Σ_{s,s̄}, γ) at the sample points."""
    gd = sample.gamma_d[..., 2:]          # gd[..., a, b, c] = γ_{ab,c}
    gi = sample.gamma_inv
    # Γ̸_{dab} = ½(γ_{da,b} + γ_{db,a} − γ_{ab,d}); same layout moves as ambient
    low = 0.5 * (np.swapaxes(gd, -1, -2) + gd - np.moveaxis(gd, -1, -3))
    return np.einsum("...cd,...dab->...cab", gi, low)


# ---------------------------------------------------------------------------
# identity residuals

def _orthonormal_frame(sample):
    """Gram–Schmidt frame e₁ ∝ ∂₁, e₂ from ∂₂, plus coordinate derivatives."""
    gam = sample.gamma
    gd = sample.gamma_d
    g11 = gam[..., 0, 0]
    g12 = gam[..., 0, 1]
    g22 = gam[..., 1, 1]
    g11_d = gd[..., 0, 0, :]
    g12_d = gd[..., 0, 1, :]
    g22_d = gd[..., 1, 1, :]
    q = g12 / g11
    q_d = (g12_d * g11[..., None] - g12[..., None] * g11_d) / (g11 ** 2)[..., None]
    w = g22 - g12 * q
    w_d = g22_d - g12_d * q[..., None] - g12[..., None] * q_d
    shape = g11.shape
    E = np.zeros(shape + (2, 4))
    dE = np.zeros(shape + (2, 4, 4))
    E[..., 0, 2] = g11 ** -0.5
    dE[..., 0, 2, :] = -0.5 * (g11 ** -1.5)[..., None] * g11_d
    E[..., 1, 2] = -q * w ** -0.5
    E[..., 1, 3] = w ** -0.5
    dE[..., 1, 2, :] = (-q_d * (w ** -0.5)[..., None]
                        + 0.5 * (q * w ** -1.5)[..., None] * w_d)
    dE[..., 1, 3, :] = -0.5 * (w ** -1.5)[..., None] * w_d
    return E, dE


def _covariant(gam4, X, dX, direction):
    """(∇_dir X)^μ = dir^ν (∂_ν X^μ + Γ^μ_{νρ} X^ρ)."""
    return (np.einsum("...n,...mn->...m", direction, dX)
            + np.einsum("...n,...mnr,...r->...m", direction, gam4, X))


def scacs_residuals(chart, p):
    """Max componentwise residual of the covariant-derivative identities
    relating the connection to the structure coefficients, evaluated in
    the Gram–Schmidt orthonormal leaf frame."""
    sample = chart.eval(p)
    gam4, g, ginv, _ = christoffel_from_sample(sample, return_metric=True)
    sc = structure_coefficients_from_sample(sample)
    gslash = leaf_christoffel(sample)
    L, Lb, _, _ = frame_vectors(sample)
    dL = np.zeros(g.shape[:-2] + (4, 4))
    dLb = np.zeros(g.shape[:-2] + (4, 4))
    dLb[..., 2, :] = sample.b_d[..., 0, :]
    dLb[..., 3, :] = sample.b_d[..., 1, :]
    E, dE = _orthonormal_frame(sample)
    om2 = sample.omega2

    res = []

    def sharp(cov):
        v = np.einsum("...ab,...b->...a", sample.gamma_inv, cov)
        out = np.zeros(g.shape[:-2] + (4,))
        out[..., 2:] = v
        return out

    chiE = np.einsum("...am,...bn,...mn->...ab",
                     E[..., :, 2:], E[..., :, 2:], sc.chi)
    chibE = np.einsum("...am,...bn,...mn->...ab",
                      E[..., :, 2:], E[..., :, 2:], sc.chib)
    etaE = np.einsum("...am,...m->...a", E[..., :, 2:], sc.eta)
    etabE = np.einsum("...am,...m->...a", E[..., :, 2:], sc.etab)

    for A in range(2):
        eA = E[..., A, :]
        # ∇_{e_A} e_B
        for B in range(2):
            lhs = _covariant(gam4, E[..., B, :], dE[..., B, :, :], eA)
            # leaf covariant derivative of e_B in direction e_A
            leaf = (np.einsum("...n,...mn->...m", eA[..., 2:], dE[..., B, :, 2:])
                    + _lift(np.einsum("...a,...cab,...b->...c",
                                      eA[..., 2:], gslash, E[..., B, 2:])))
            rhs = (leaf
                   - 0.5 / om2[..., None] * chiE[..., A, B, None] * Lb
                   - 0.5 / om2[..., None] * chibE[..., A, B, None] * L)
            res.append(lhs - rhs)
        # ∇_{e_A} L̄ = η(e_A) L̄ + χ̄(e_A, e_B) e_B
        lhs = _covariant(gam4, Lb, dLb, eA)
        rhs = etaE[..., A, None] * Lb + np.einsum("...b,...bm->...m", chibE[..., A, :], E)
        res.append(lhs - rhs)
        # ∇_{e_A} L = η̄(e_A) L + χ(e_A, e_B) e_B
        lhs = _covariant(gam4, L, dL, eA)
        rhs = etabE[..., A, None] * L + np.einsum("...b,...bm->...m", chiE[..., A, :], E)
        res.append(lhs - rhs)
    # ∇_{L̄} L̄ = 2ω̄ L̄ ; ∇_L L = 2ω L
    res.append(_covariant(gam4, Lb, dLb, Lb) - 2.0 * sc.wb[..., None] * Lb)
    res.append(_covariant(gam4, L, dL, L) - 2.0 * sc.w[..., None] * L)
    # ∇_{L̄} L = −2Ω² η♯ ; ∇_L L̄ = −2Ω² η̄♯
    res.append(_covariant(gam4, L, dL, Lb) + 2.0 * om2[..., None] * sharp(sc.eta))
    res.append(_covariant(gam4, Lb, dLb, L) + 2.0 * om2[..., None] * sharp(sc.etab))
    stacked = np.stack(res, axis=-1)
    return np.max(np.abs(stacked), axis=(-2, -1))


def _lift(angular):
    out = np.zeros(angular.shape[:-1] + (4,))
    out[..., 2:] = angular
    return out


def lie_b_residual(chart, p):
    """|ℒ_L b − 2Ω²(η♯ − η̄♯)| (max over angular components).

    L = ∂_s̄ is a coordinate vector, so ℒ_L b reduces to ∂_s̄ bᵃ.
    """
    sample = chart.eval(p)
    sc = structure_coefficients_from_sample(sample)
    lie = sample.b_d[..., :, 1]
    rhs = 2.0 * sample.omega2[..., None] * np.einsum(
        "...ab,...b->...a", sample.gamma_inv, sc.eta - sc.etab)
    return np.max(np.abs(lie - rhs), axis=-1)


def raychaudhuri_residual(chart, p, step=None, ricci_step=None):
    """|L trχ − 2ω trχ + ½(trχ)² + |χ̂|² + R_LL| with L trχ a 4th-order
    difference along s̄ of the structure-coefficient trace."""
    pts = chart.require_inside(p)
    h = default_fd_step(chart) if step is None else float(step)
    stack = _stencil_points(chart, pts, h, [1])
    trchi_stack = structure_coefficients_from_sample(chart.eval(stack, validate=False)).trchi
    dtrchi = np.einsum("k,k...->...", _D1_W4, trchi_stack) / h
    sc = structure_coefficients_from_sample(chart.eval(pts, validate=False))
    r_ll = ricci(chart, pts, step=ricci_step).r_ll
    return np.abs(dtrchi - 2.0 * sc.w * sc.trchi + 0.5 * sc.trchi ** 2
                  + sc.hat_chi_norm2() + r_ll)
