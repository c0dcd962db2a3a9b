"""Independent reference computations used by the test suite only.

These stay deliberately naive: brute-force principal-value quadrature for the
forward finite Hilbert transform, and an FFT analytic-signal Hilbert of a
wide-canvas rasterization (so the 1/t tails inside the cropped field are
genuine) for image-domain Hilbert references.
"""

import numpy as np
from scipy.signal import hilbert as _analytic_signal

from lctlab import ImageGrid, rasterize


def forward_hilbert_pv(f_func, t_out, lo, hi, oversample=8):
    """g(t) = (1/pi) PV int_lo^hi f(t')/(t - t') dt' by midpoint quadrature on
    a staggered fine grid (never lands on an output point)."""
    n = len(t_out) * oversample
    tp = np.linspace(lo, hi, n, endpoint=False) + (hi - lo) / (2 * n)
    fp = f_func(tp)
    dt = (hi - lo) / n
    return np.array([np.sum(fp / (t - tp)) * dt / np.pi for t in t_out])


def hilbert_rows(img, pad_factor=4):
    """Discrete full-line Hilbert transform of each row (1/(pi t) kernel)."""
    n = img.shape[1]
    return np.imag(_analytic_signal(img, N=pad_factor * n, axis=1))[:, :n]


def wide_canvas_hilbert(spec, grid: ImageGrid, factor=4, supersample=2):
    """(f_crop, H_crop): rasterize on a canvas ``factor`` times wider, take the
    row Hilbert transform there, and crop the central grid-sized field."""
    nbig = factor * grid.n
    gbig = ImageGrid(n=nbig, pixel_size=grid.pixel_size, center=grid.center)
    fbig = rasterize(spec, gbig, supersample=supersample)
    hbig = hilbert_rows(fbig)
    c = slice((nbig - grid.n) // 2, (nbig + grid.n) // 2)
    return fbig[c, c], hbig[c, c], fbig, hbig
