"""Marginal-surface finding on null cones.

Marginality of a section embedded in a null cone reduces to a pointwise
condition on the background null expansion, so the finder is a per-node
scalar root problem: on the advanced-coordinate level set {s̄ = level},
find where trχ(s, level, θ) vanishes along each generator.  On the
Schwarzschild chart the root locus is the horizon cone s = 0 (r = 2M),
the expansion changes sign across it, and the constant-s section through
the roots is itself a marginal surface (its own outgoing expansion equals
the background trχ pointwise).
"""

from dataclasses import dataclass, field

import numpy as np

from .connection import structure_coefficients
from .errors import NoRootError, SolverError
from .surface import SurfaceGraph


@dataclass
class BracketSolve:
    roots: np.ndarray
    values: np.ndarray
    converged: np.ndarray
    multiple_roots: np.ndarray
    iterations: int


def solve_bracketed(func, lo, hi, ftol, xtol=1e-14, max_iter=120, coarse=33):
    """Vectorized safeguarded scalar root solve on per-node brackets.

    Bisection keeps the bracket valid; a finite-difference Newton step is
    taken whenever it lands strictly inside.  ``func`` maps an array of
    abscissae (one per node) to residual values.  Nodes without a sign
    change raise NoRootError carrying the offending mask; brackets with
    several sign changes are narrowed to the one nearest the midpoint and
    flagged.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.shape
    # coarse scan: locate sign-change cells
    xs = np.linspace(0.0, 1.0, coarse)
    grid = lo[None, ...] + (hi - lo)[None, ...] * xs[(slice(None),) + (None,) * lo.ndim]
    vals = np.stack([func(grid[k]) for k in range(coarse)])
    sign = np.sign(vals)
    flips = (sign[:-1] * sign[1:] < 0) | (sign[:-1] == 0)
    nflips = np.sum(flips, axis=0)
    no_root = nflips == 0
    if np.any(no_root):
        err = NoRootError("no sign change of the expansion in the bracket at "
                          "%d of %d nodes" % (int(np.sum(no_root)), int(no_root.size)))
        err.no_root_mask = no_root
        raise err
    multiple = nflips > 1
    # choose the flip cell nearest the bracket midpoint
    cell_mid = 0.5 * (xs[:-1] + xs[1:])
    dist = np.abs(cell_mid[(slice(None),) + (None,) * lo.ndim] - 0.5)
    dist = np.where(flips, dist, np.inf)
    pick = np.argmin(dist, axis=0)
    take = lambda arr, idx: np.take_along_axis(arr, idx[None, ...], axis=0)[0]
    a = take(grid, pick)
    b = take(grid, pick + 1)
    fa = take(vals, pick)
    fb = take(vals, pick + 1)
    x = 0.5 * (a + b)
    h_newton = 1e-7 * np.maximum(hi - lo, 1e-12)
    converged = np.zeros(n, dtype=bool)
    fx = np.full(n, np.inf)
    iters = 0
    for iters in range(1, max_iter + 1):
        x = np.clip(x, a, b)
        stack = np.stack([x - h_newton, x, x + h_newton])
        fvals = np.stack([func(stack[k]) for k in range(3)])
        fx = fvals[1]
        converged = np.abs(fx) <= ftol
        if np.all(converged | ((b - a) <= xtol * np.maximum(1.0, np.abs(x)))):
            break
        # maintain the bracket
        neg_side = np.sign(fx) == np.sign(fa)
        a = np.where(neg_side, x, a)
        fa = np.where(neg_side, fx, fa)
        b = np.where(~neg_side, x, b)
        fb = np.where(~neg_side, fx, fb)
        deriv = (fvals[2] - fvals[0]) / (2.0 * h_newton)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_newton = x - fx / deriv
        inside = np.isfinite(x_newton) & (x_newton > a) & (x_newton < b)
        x = np.where(inside, x_newton, 0.5 * (a + b))
    ok = converged | (np.abs(fx) <= ftol) | ((b - a) <= xtol * np.maximum(1.0, np.abs(x)))
    if not np.all(ok):
        raise SolverError("root solve failed to converge at %d nodes"
                          % int(np.sum(~ok)))
    return BracketSolve(x, fx, ok, multiple, iters)


@dataclass
class MarginalSection:
    """Per-node roots of the outgoing expansion on a scan cone."""
    level: float                    # the advanced coordinate of the cone
    t1: np.ndarray
    t2: np.ndarray
    roots: np.ndarray               # retarded coordinate of the marginal locus
    residuals: np.ndarray           # trχ at the roots
    expansion_scale: float
    multiple_roots: np.ndarray
    bracket: tuple = field(default=(0.0, 0.0))

    def max_residual(self):
        return float(np.max(np.abs(self.residuals)))

    def as_surface(self, chart, grid):
        """The found section as a graph (f = roots, f̄ ≡ level)."""
        return SurfaceGraph(chart, grid, self.roots, np.full(grid.shape, self.level),
                            mode="fd4")


def _trchi_on_cone(chart, level, t1, t2, axis):
    def func(x):
        pts = np.stack([x, np.full_like(x, level),
                        np.broadcast_to(t1, x.shape),
                        np.broadcast_to(t2, x.shape)], axis=-1)
        if axis == "sbar":
            pts = pts[..., [1, 0, 2, 3]]
        return structure_coefficients(chart, pts).trchi
    return func


def find_marginal_on_cone(chart, level, grid, bracket, ftol_rel=1e-12):
    """Locate the marginal locus trχ = 0 on the cone {s̄ = level}.

    Per θ-node, a safeguarded Newton/bisection solve along the retarded
    coordinate inside ``bracket``.  The residual tolerance is relative to
    the expansion scale sampled on the bracket.
    """
    chart.require_inside(np.array([bracket[0], level,
                                   0.5 * (chart.topology.t1_min + chart.topology.t1_max), 0.0]))
    chart.require_inside(np.array([bracket[1], level,
                                   0.5 * (chart.topology.t1_min + chart.topology.t1_max), 0.0]))
    t1 = grid.T1.ravel()
    t2 = grid.T2.ravel()
    func = _trchi_on_cone(chart, level, t1, t2, axis="s")
    # expansion scale over the bracket (for the relative tolerance)
    sample = np.stack([func(np.full_like(t1, x))
                       for x in np.linspace(bracket[0], bracket[1], 9)])
    scale = float(np.max(np.abs(sample)))
    sol = solve_bracketed(func, np.full_like(t1, float(bracket[0])),
                          np.full_like(t1, float(bracket[1])),
                          ftol=ftol_rel * scale)
    return MarginalSection(float(level), t1.reshape(grid.shape), t2.reshape(grid.shape),
                           sol.roots.reshape(grid.shape), sol.values.reshape(grid.shape),
                           scale, sol.multiple_roots.reshape(grid.shape),
                           (float(bracket[0]), float(bracket[1])))


def expansion_profile(chart, level, lo, hi, theta, n=200, axis="s"):
    """Sample trχ along a generator: by default along s at fixed s̄ = level
    (the finder's scan direction); axis="sbar" profiles along s̄ at fixed
    s = level instead."""
    t1, t2 = theta
    xs = np.linspace(float(lo), float(hi), int(n))
    func = _trchi_on_cone(chart, level, np.full(1, t1), np.full(1, t2), axis)
    vals = np.array([float(func(np.full(1, x))[0]) for x in xs])
    return xs, vals
