"""Finite inverse Hilbert transform and the backprojection-filtration chain.

``finite_inverse_1d`` inverts samples of the 1/(pi*(t-t')) Hilbert transform
known on an interval [L, U] that contains the object's support: the data is
weighted by sqrt((t'-L)(U-t')), convolved against the principal-value kernel
(exact integration of the piecewise-linear interpolant, so the singularity
needs no special casing), scaled by -1/sqrt((t-L)(U-t)), and shifted by an
offset constant fixed by requiring zero mean over the bands known to lie
outside the object support.

``directional_inverse`` applies that row-wise along an arbitrary filtering
axis by rotate / filter / unrotate with bilinear resampling, after padding
to 1.5x the grid side so rotation loses nothing.  ``bpf_reconstruct`` runs
the full chain on a multi-segment scan.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .dbp import DBP_HILBERT_SCALE, DBPImage, dbp_segments, overlay
from .geometry import ImageGrid, MultiScanConfig, composite_axis, segments
from .projector import Sinogram

__all__ = [
    "InversionError",
    "FiniteHilbertLine",
    "InversionResult",
    "finite_inverse_1d",
    "ReconImage",
    "directional_inverse",
    "reconstruct_segments",
    "bpf_reconstruct",
]


class InversionError(ValueError):
    """Unusable inversion setup (no zero band, clipped support, missing axis)."""


@dataclass
class FiniteHilbertLine:
    """Hilbert-domain samples g(t) on a uniform grid over [L, U].

    samples are cell-centered: t_i = L + (i + 1/2) * (U - L) / len(samples).
    support = (t_lo, t_hi) bounds the object on this line, strictly inside
    (L, U).  eps_margin is the endpoint exclusion zone (default: two steps).
    """

    samples: np.ndarray
    L: float
    U: float
    support: tuple
    eps_margin: Optional[float] = None

    def __post_init__(self):
        if not self.U > self.L:
            raise InversionError("need U > L")
        if len(self.samples) < 8:
            raise InversionError("need at least 8 samples")
        t_lo, t_hi = self.support
        if not (self.L < t_lo <= t_hi < self.U):
            raise InversionError("support must be strictly interior to (L, U)")

    @property
    def step(self) -> float:
        return (self.U - self.L) / len(self.samples)

    @property
    def centers(self) -> np.ndarray:
        return self.L + (np.arange(len(self.samples)) + 0.5) * self.step


@dataclass
class InversionResult:
    """Recovered samples, endpoint-proximity flags, and the offset constant."""

    values: np.ndarray
    edge_flags: np.ndarray
    offset: float


def _pv_convolve_linear(phi_nodes: np.ndarray, x_nodes: np.ndarray,
                        t_eval: np.ndarray) -> np.ndarray:
    """Exact principal-value integral of the piecewise-linear interpolant of
    phi against 1/(t - t'), for every t in t_eval.

    Valid when no t coincides with a node (the caller staggers the grids).
    """
    a = x_nodes[:-1]
    b = x_nodes[1:]
    pa = phi_nodes[:-1]
    pb = phi_nodes[1:]
    m = (pb - pa) / (b - a)
    t = t_eval[:, None]
    La = np.log(np.abs(t - a[None, :]))
    Lb = np.log(np.abs(t - b[None, :]))
    phit = pa[None, :] + m[None, :] * (t - a[None, :])
    return (phit * (La - Lb)).sum(axis=1) - (pb - pa).sum()


def finite_inverse_1d(line: FiniteHilbertLine, oversample: int = 8) -> InversionResult:
    """Invert finite-interval Hilbert data (see module docstring).

    oversample (even) controls cubic-spline refinement of the data grid
    before the exact piecewise-linear convolution; 8 reaches ~1e-3 relative
    accuracy on smooth data at 512 samples.
    """
    if oversample < 2 or oversample % 2:
        raise InversionError("oversample must be even and >= 2")
    g = np.asarray(line.samples, dtype=float)
    if not np.all(np.isfinite(g)):
        raise InversionError("samples must be finite")
    lo, hi = line.L, line.U
    n = len(g)
    d = line.step
    tc = line.centers
    eps = line.eps_margin if line.eps_margin is not None else 2 * d

    nf = n * oversample
    tf = lo + (np.arange(nf) + 0.5) * (hi - lo) / nf
    spline = CubicSpline(tc, g, bc_type="natural")
    gf = spline(np.clip(tf, tc[0], tc[-1]))
    nodes = np.concatenate([[lo], tf, [hi]])
    gn = np.concatenate([[0.0], gf, [0.0]])
    weight = np.sqrt(np.clip((nodes - lo) * (hi - nodes), 0.0, None))
    integral = _pv_convolve_linear(weight * gn, nodes, tc) / math.pi

    pref = -1.0 / np.sqrt(np.clip((tc - lo) * (hi - tc), eps * eps, None))
    f0 = pref * integral

    t_lo, t_hi = line.support
    zero_band = ((tc > lo + eps) & (tc < t_lo)) | ((tc > t_hi) & (tc < hi - eps))
    if not zero_band.any():
        raise InversionError("support leaves no known-zero band inside (L, U)")
    offset = -float(np.mean(f0[zero_band]) / np.mean(pref[zero_band]))
    values = f0 + offset * pref
    edge_flags = (tc - lo < eps) | (hi - tc < eps)
    return InversionResult(values, edge_flags, offset)


# ---------------------------------------------------------------------------
# image-domain application


@dataclass
class ReconImage:
    values: np.ndarray
    validity: np.ndarray
    grid: ImageGrid


def _rotate_about_center(arr: np.ndarray, ang: float, order: int = 1) -> np.ndarray:
    """Rotate image content by +ang in world coordinates (rows hold maximal y
    first), resampling with the given spline order, zeros outside."""
    n = arr.shape[0]
    c = (n - 1) / 2
    rr, cc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    xw = cc - c
    yw = c - rr
    ca, sa = math.cos(-ang), math.sin(-ang)
    xs = ca * xw - sa * yw
    ys = sa * xw + ca * yw
    return ndimage.map_coordinates(arr, [c - ys, xs + c], order=order,
                                   mode="constant", cval=0.0)


def padded_side(n: int, rate: float = 0.5) -> int:
    """Padded side length: (1 + rate) * n rounded up to an even number."""
    return int(math.ceil((1 + rate) * n / 2) * 2)


def directional_inverse(dbp: DBPImage, grid: ImageGrid, support_radius: float,
                        axis_theta: Optional[float] = None,
                        oversample: int = 2) -> ReconImage:
    """Row-wise finite Hilbert inversion along a filtering axis.

    The image is padded to 1.5x its side, rotated so the axis aligns with
    rows, and each row is inverted over its valid-data interval with the
    support chord of the (grid-centered) support disk; the result is scaled
    by 1/DBP_HILBERT_SCALE, rotated back, and cropped.  Invalid input pixels
    and endpoint-flagged samples propagate into the output validity.
    """
    if axis_theta is None:
        if dbp.eta is None:
            raise InversionError("DBP image has no filtering direction "
                                 "(overlay); pass axis_theta explicitly")
        axis_theta = dbp.eta + math.pi / 2
    if dbp.values.shape != (grid.n, grid.n):
        raise ValueError("DBP image does not match the grid")
    n = grid.n
    px = grid.pixel_size
    npad = padded_side(n)
    padw = (npad - n) // 2

    b = np.pad(np.where(dbp.validity, dbp.values, 0.0), padw)
    v = np.pad(dbp.validity.astype(float), padw)
    brot = _rotate_about_center(b, -axis_theta)
    vrot = _rotate_about_center(v, -axis_theta)

    out = np.zeros_like(brot)
    out_ok = np.zeros(brot.shape, dtype=bool)
    half_idx = (npad - 1) / 2
    scale = 1.0 / DBP_HILBERT_SCALE
    rows_done = 0
    for r in range(npad):
        yw = (half_idx - r) * px
        if abs(yw) >= support_radius:
            continue
        valid_row = vrot[r] > 0.999
        idx = np.nonzero(valid_row)[0]
        if idx.size < 8:
            continue
        j0, j1 = idx[0], idx[-1]
        lo = (j0 - half_idx) * px - px / 2
        hi = (j1 - half_idx) * px + px / 2
        half_chord = math.sqrt(support_radius**2 - yw**2)
        t_lo = -half_chord - px
        t_hi = half_chord + px
        if t_lo <= lo + 2 * px or t_hi >= hi - 2 * px:
            continue
        g = brot[r, j0:j1 + 1] * scale
        res = finite_inverse_1d(
            FiniteHilbertLine(g, lo, hi, (t_lo, t_hi)), oversample=oversample
        )
        out[r, j0:j1 + 1] = res.values
        out_ok[r, j0:j1 + 1] = ~res.edge_flags
        rows_done += 1
    if rows_done == 0:
        raise InversionError("no row kept both valid data and the support chord "
                             "(rotation clipped the support)")

    frot = _rotate_about_center(out, axis_theta)
    okrot = _rotate_about_center(out_ok.astype(float), axis_theta) > 0.999
    values = frot[padw:padw + n, padw:padw + n]
    validity = okrot[padw:padw + n, padw:padw + n] & dbp.validity
    return ReconImage(values, validity, grid)


def reconstruct_segments(sinos: Sequence[Sinogram], config: MultiScanConfig,
                         grid: ImageGrid, support_radius: float,
                         oversample: int = 2) -> list:
    """Per-segment partial reconstructions along the composite axis.

    Their pixelwise sum equals ``bpf_reconstruct`` exactly (the inversion is
    linear and every piece shares one filtering axis).
    """
    axis = composite_axis(config)
    pieces = dbp_segments(sinos, config, grid)
    return [
        directional_inverse(p, grid, support_radius, axis_theta=axis,
                            oversample=oversample)
        for p in pieces
    ]


def _match_config_order(sinos: Sequence[Sinogram], config: MultiScanConfig):
    ordered = []
    pool = list(sinos)
    for g in segments(config):
        idx = next((i for i, s in enumerate(pool) if s.geom == g), None)
        if idx is None:
            raise ValueError(f"no sinogram for segment theta={g.theta:.6f}")
        ordered.append(pool.pop(idx))
    return ordered


def bpf_reconstruct(sinos: Sequence[Sinogram], config: MultiScanConfig,
                    grid: ImageGrid, support_radius: float,
                    oversample: int = 2) -> np.ndarray:
    """Full analytic reconstruction: partition-weighted per-segment DBP,
    overlay, one finite Hilbert inversion along the composite axis.

    Input sinograms may arrive in any order (matched to the config by
    geometry, so the summation order is fixed).  Truncated inputs produce a
    warning and a best-effort result.
    """
    ordered = _match_config_order(sinos, config)
    if any(s.mask is not None for s in ordered):
        warnings.warn("truncated sinogram(s): reconstruction is best-effort")
    pieces = dbp_segments(ordered, config, grid)
    total = overlay(pieces)
    rec = directional_inverse(total, grid, support_radius,
                              axis_theta=composite_axis(config),
                              oversample=oversample)
    return np.where(rec.validity, rec.values, 0.0)
