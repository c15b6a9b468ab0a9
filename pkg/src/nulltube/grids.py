"""Angular grids and 4th-order finite differences.

Grids are uniform in each angular direction.  An axis is either periodic
(values wrap, the stencil rolls around) or bounded (central stencils are only
valid two nodes away from the edge; edge bands are filled with NaN and masked
out by ``interior_mask``).  One-sided closures are deliberately not provided.
"""

import numpy as np

from .errors import StencilError

# 4th-order central stencils, offsets -2..2
_D1_W = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_W = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0

FD_MARGIN = 2


def _apply_stencil(arr, weights, axis, h, power):
    out = np.zeros_like(arr, dtype=float)
    for k, w in zip(range(-2, 3), weights):
        if w != 0.0:
            out += w * np.roll(arr, -k, axis=axis)
    return out / h**power


def _mask_edges(out, axis, margin=FD_MARGIN):
    sl = [slice(None)] * out.ndim
    sl[axis] = slice(0, margin)
    out[tuple(sl)] = np.nan
    sl[axis] = slice(-margin, None)
    out[tuple(sl)] = np.nan
    return out


def diff1(arr, h, axis, periodic):
    """4th-order first derivative along ``axis`` (spacing h)."""
    out = _apply_stencil(np.asarray(arr, dtype=float), _D1_W, axis, h, 1)
    if not periodic:
        out = _mask_edges(out, axis)
    return out


def diff2(arr, h, axis, periodic):
    """4th-order second derivative along ``axis``."""
    out = _apply_stencil(np.asarray(arr, dtype=float), _D2_W, axis, h, 2)
    if not periodic:
        out = _mask_edges(out, axis)
    return out


def fd1_line(values, h):
    """4th-order derivative at the center of a 5-point line sample."""
    return float(np.dot(_D1_W, values)) / h


class ThetaGrid:
    """Uniform (θ¹, θ²) grid.

    θ² is always periodic with period 2π.  θ¹ is periodic (torus topology,
    nodes at t1_start + k*period1/n1) or bounded (nodes spanning
    [t1_start, t1_end] inclusively).
    """

    def __init__(self, n1, n2, t1_start, t1_end, periodic1, period2=2.0 * np.pi,
                 t2_start=0.0):
        if n1 < 8 or n2 < 8:
            raise StencilError("grid too coarse for 4th-order stencils: %dx%d" % (n1, n2))
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.periodic1 = bool(periodic1)
        self.t1_start = float(t1_start)
        self.t1_end = float(t1_end)
        self.period2 = float(period2)
        self.t2_start = float(t2_start)
        if periodic1:
            self.period1 = self.t1_end - self.t1_start
            self.h1 = self.period1 / self.n1
            self.t1 = self.t1_start + self.h1 * np.arange(self.n1)
        else:
            self.period1 = None
            self.h1 = (self.t1_end - self.t1_start) / (self.n1 - 1)
            self.t1 = np.linspace(self.t1_start, self.t1_end, self.n1)
        self.h2 = self.period2 / self.n2
        self.t2 = self.t2_start + self.h2 * np.arange(self.n2)
        # node coordinate arrays, shape (n1, n2)
        self.T1, self.T2 = np.meshgrid(self.t1, self.t2, indexing="ij")

    @property
    def shape(self):
        return (self.n1, self.n2)

    def refine(self, factor=2):
        return ThetaGrid(self.n1 * factor, self.n2 * factor, self.t1_start,
                         self.t1_end, self.periodic1, self.period2, self.t2_start)

    def interior_mask(self, margin=FD_MARGIN):
        m = np.ones(self.shape, dtype=bool)
        if not self.periodic1 and margin > 0:
            m[:margin, :] = False
            m[-margin:, :] = False
        return m

    def d1(self, arr, axis):
        """∂/∂θ^(axis+1) of a nodal array; axes (0, 1) are the grid axes."""
        if axis == 0:
            return diff1(arr, self.h1, 0, self.periodic1)
        return diff1(arr, self.h2, 1, True)

    def d2(self, arr, axis):
        if axis == 0:
            return diff2(arr, self.h1, 0, self.periodic1)
        return diff2(arr, self.h2, 1, True)

    def gradient(self, arr):
        """First partials, shape arr.shape + (2,)."""
        return np.stack([self.d1(arr, 0), self.d1(arr, 1)], axis=-1)

    def hessian(self, arr):
        """Coordinate second partials, shape arr.shape + (2, 2)."""
        d11 = self.d2(arr, 0)
        d22 = self.d2(arr, 1)
        d12 = self.d1(self.d1(arr, 0), 1)
        h = np.empty(arr.shape + (2, 2))
        h[..., 0, 0] = d11
        h[..., 1, 1] = d22
        h[..., 0, 1] = d12
        h[..., 1, 0] = d12
        return h

    def spectral_gradient(self, arr):
        """FFT first partials; exact for trig polynomials, both axes periodic."""
        if not self.periodic1:
            raise StencilError("spectral differentiation needs a fully periodic grid")
        return np.stack([_fft_diff(arr, 0, self.period1),
                         _fft_diff(arr, 1, self.period2)], axis=-1)

    def spectral_hessian(self, arr):
        if not self.periodic1:
            raise StencilError("spectral differentiation needs a fully periodic grid")
        d1a = _fft_diff(arr, 0, self.period1)
        d2a = _fft_diff(arr, 1, self.period2)
        h = np.empty(arr.shape + (2, 2))
        h[..., 0, 0] = _fft_diff(d1a, 0, self.period1)
        h[..., 1, 1] = _fft_diff(d2a, 1, self.period2)
        m = _fft_diff(d1a, 1, self.period2)
        h[..., 0, 1] = m
        h[..., 1, 0] = m
        return h


def _fft_diff(arr, axis, period):
    n = arr.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)
    if n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0  # drop the unpaired Nyquist mode
    shape = [1] * arr.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(arr, axis=axis), axis=axis))


def trig_interp_axis1(values, targets, period=2.0 * np.pi, start=0.0):
    """Trigonometric interpolation along the last (periodic) axis.

    ``values`` has shape (..., n) sampled at start + j·period/n; ``targets``
    has shape (..., T) with matching leading axes.  Exact for bandlimited
    data, spectrally accurate for smooth periodic data.
    """
    values = np.asarray(values, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = values.shape[-1]
    c = np.fft.rfft(values, axis=-1) / n
    k = np.arange(c.shape[-1])
    weights = np.full(c.shape[-1], 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    phase = np.exp(1j * (targets[..., :, None] - start) * (2.0 * np.pi / period) * k)
    return np.real(np.einsum("...k,...tk->...t", weights * c, phase))
