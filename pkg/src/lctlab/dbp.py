"""Differentiated backprojection of linear-trajectory sinograms.

The backprojection accumulates, for every image pixel, the trapezoid sum
over source positions of ``(1/|r - S_k|) * D p(s_k, u*)`` where ``D`` is a
projection derivative and ``u*`` the detector coordinate of the ray through
the pixel.  With the fixed-ray-direction derivative (``diff_ray``) this sum
equals ``DBP_HILBERT_SCALE`` times the Hilbert transform of the object along
the trajectory direction, up to the angular wedge actually spanned by the
trajectory.

Multi-segment scans are assembled by ``dbp_segments``: each segment's rays
are weighted by a smooth partition of unity over ray orientation (so every
orientation is counted exactly once across segments) and sign-aligned to a
common composite filtering axis.  The weighted per-segment images then sum
to the composite-axis Hilbert transform of the object, which the hilbert
module inverts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    ImageGrid,
    MultiScanConfig,
    SegmentGeometry,
    arc_positions,
    composite_axis,
    detector_cells,
    segments,
)
from .projector import Sinogram

__all__ = [
    "DBP_HILBERT_SCALE",
    "PARTITION_FEATHER",
    "DerivativeTable",
    "DBPImage",
    "diff_u",
    "diff_ray",
    "backproject",
    "dbp_segments",
    "overlay",
]

# Backprojection-to-Hilbert scale: a full-coverage trajectory yields
# b = DBP_HILBERT_SCALE * H_t f with H the 1/(pi*t) convolution along the
# trajectory direction.  Frozen after one empirical calibration against a
# brute-force Hilbert oracle (regression-tested); the reconstruction divides
# by this constant.
DBP_HILBERT_SCALE = -2.0 * math.pi

# Half-width of the smooth transition applied at the edges of each segment's
# measured angular range before partition normalization (radians).
PARTITION_FEATHER = math.radians(1.5)

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _HAVE_NUMBA = False


@dataclass
class DerivativeTable:
    """Projection-derivative samples aligned with a sinogram's (s, u) grid."""

    values: np.ndarray
    valid: np.ndarray
    geom: SegmentGeometry
    kind: str  # "u" (detector derivative) or "ray" (fixed-direction)


@dataclass
class DBPImage:
    """Intermediate backprojection image on a reconstruction grid.

    validity marks pixels whose interpolation stencil stayed inside measured
    detector cells for every source sample.
    """

    values: np.ndarray
    validity: np.ndarray
    grid: ImageGrid
    eta: Optional[float]
    segment_ids: tuple


def _mask_or_true(sino: Sinogram) -> np.ndarray:
    if sino.mask is None:
        return np.ones_like(sino.values, dtype=bool)
    return sino.mask


def diff_u(sino: Sinogram) -> DerivativeTable:
    """Detector-coordinate derivative: central differences inside, one-sided
    at the detector ends; cells whose stencil touches unmeasured cells are
    flagged invalid and zeroed."""
    if sino.geom.det_cells < 3:
        raise ValueError("need at least 3 detector cells for differences")
    p = sino.values
    du = sino.geom.det_cell_size
    d = np.empty_like(p)
    d[:, 1:-1] = (p[:, 2:] - p[:, :-2]) / (2 * du)
    d[:, 0] = (p[:, 1] - p[:, 0]) / du
    d[:, -1] = (p[:, -1] - p[:, -2]) / du
    m = _mask_or_true(sino)
    valid = np.empty_like(m)
    valid[:, 1:-1] = m[:, :-2] & m[:, 1:-1] & m[:, 2:]
    valid[:, 0] = m[:, 0] & m[:, 1]
    valid[:, -1] = m[:, -1] & m[:, -2]
    d[~valid] = 0.0
    return DerivativeTable(d, valid, sino.geom, "u")


def diff_ray(sino: Sinogram) -> DerivativeTable:
    """Fixed-ray-direction derivative (d/ds + d/du) p.

    Moving source and detector coordinate together keeps the ray direction
    constant, which is the derivative the exact backprojection identity
    requires on this geometry.
    """
    if sino.geom.det_cells < 3 or sino.geom.n_src < 3:
        raise ValueError("need at least 3 samples along each axis")
    p = sino.values
    du = sino.geom.det_cell_size
    ds = sino.geom.traj_len / (sino.geom.n_src - 1)
    d = np.empty_like(p)
    d[:, 1:-1] = (p[:, 2:] - p[:, :-2]) / (2 * du)
    d[:, 0] = (p[:, 1] - p[:, 0]) / du
    d[:, -1] = (p[:, -1] - p[:, -2]) / du
    d[1:-1, :] += (p[2:, :] - p[:-2, :]) / (2 * ds)
    d[0, :] += (p[1, :] - p[0, :]) / ds
    d[-1, :] += (p[-1, :] - p[-2, :]) / ds
    m = _mask_or_true(sino)
    valid = np.empty_like(m)
    valid[:, 1:-1] = m[:, :-2] & m[:, 1:-1] & m[:, 2:]
    valid[:, 0] = m[:, 0] & m[:, 1]
    valid[:, -1] = m[:, -1] & m[:, -2]
    sv = np.empty_like(m)
    sv[1:-1, :] = m[:-2, :] & m[2:, :]
    sv[0, :] = m[1, :]
    sv[-1, :] = m[-2, :]
    valid &= sv
    d[~valid] = 0.0
    return DerivativeTable(d, valid, sino.geom, "ray")


def _coverage_windows(pixels_x, pixels_y, segs: Sequence[SegmentGeometry]):
    """Per (pixel, segment) world ray-angle window [lo, hi] subtended by the
    trajectory, as raw angles in the branch (theta_j, theta_j + pi).

    Pixels behind a segment's source line get an empty window.
    """
    npix = pixels_x.size
    T = len(segs)
    lo = np.zeros((T, npix))
    hi = np.zeros((T, npix))
    for j, g in enumerate(segs):
        ct, st = math.cos(g.theta), math.sin(g.theta)
        xl = pixels_x * ct + pixels_y * st
        yl = -pixels_x * st + pixels_y * ct
        depth = yl + g.l
        front = depth > 0
        with np.errstate(invalid="ignore"):
            lo_j = np.arctan2(depth, xl + g.traj_len / 2) + g.theta
            hi_j = np.arctan2(depth, xl - g.traj_len / 2) + g.theta
        lo[j] = np.where(front, lo_j, 0.0)
        hi[j] = np.where(front, hi_j, -1.0)
    return lo, hi


def _partition_tables(config: MultiScanConfig):
    thetas = np.array([config.theta0 + i * config.delta_theta for i in range(config.T)])
    if config.T > 1:
        width = max(config.delta_theta, math.pi / config.T)
    else:
        width = math.pi
    return thetas, width


# ---------------------------------------------------------------------------
# backprojection kernels


def _kernel_args(geom: SegmentGeometry, grid: ImageGrid):
    X, Y = grid.xy()
    s = arc_positions(geom)
    u = detector_cells(geom)
    return X.ravel(), Y.ravel(), s, u[0], geom.det_cell_size


def _backproject_numpy(X, Y, deriv, dvalid, s, u0, du, geom,
                       weights_cfg=None):
    """Vectorized-over-pixels reference implementation (k-loop in order)."""
    ct, st = math.cos(geom.theta), math.sin(geom.theta)
    xl = X * ct + Y * st
    yl = -X * st + Y * ct
    depth = yl + geom.l
    front = depth > 0
    cfac = np.where(front, geom.h / np.where(front, depth, 1.0), 0.0)
    ndet = deriv.shape[1]
    ds = s[1] - s[0]
    b = np.zeros_like(X)
    ok = front.copy()
    if weights_cfg is not None:
        thetas, width, seg_i, theta_g, feather, wlo, whi = weights_cfg
        sgx = -math.sin(theta_g)
        sgy = math.cos(theta_g)
        six = -st
        siy = ct
    sx, sy = geom.source_xy(s)
    for k in range(len(s)):
        w = ds if 0 < k < len(s) - 1 else ds / 2
        ustar = s[k] + (xl - s[k]) * cfac
        tt = (ustar - u0) / du
        inr = front & (tt >= 0.0) & (tt <= ndet - 1)
        ok &= inr
        j0 = np.clip(tt.astype(np.int64), 0, ndet - 2)
        fr = np.clip(tt - j0, 0.0, 1.0)
        val = deriv[k, j0] * (1 - fr) + deriv[k, j0 + 1] * fr
        ok &= ~inr | (dvalid[k, j0] & dvalid[k, j0 + 1])
        val = np.where(inr, val, 0.0)
        dx = X - sx[k]
        dy = Y - sy[k]
        dist = np.sqrt(dx * dx + dy * dy)
        contrib = w * val / dist
        if weights_cfg is not None:
            psi = np.arctan2(dy, dx)
            den = np.zeros_like(psi)
            num = np.zeros_like(psi)
            for j in range(len(thetas)):
                pj = psi.copy()
                pj = np.where(pj <= thetas[j], pj + math.pi, pj)
                pj = np.where(pj <= thetas[j], pj + math.pi, pj)
                pj = np.where(pj > thetas[j] + math.pi, pj - math.pi, pj)
                d = pj - (thetas[j] + math.pi / 2)
                g = np.where(np.abs(d) < width,
                             np.cos(math.pi * d / (2 * width)) ** 2, 0.0)
                margin = np.minimum(pj - wlo[j], whi[j] - pj)
                m = np.clip(margin / feather, 0.0, 1.0)
                m = np.where(margin > 0, m, 0.0)
                term = g * m
                den += term
                if j == seg_i:
                    num = term
            wgt = np.where(den > 1e-9, num / np.maximum(den, 1e-12), 0.0)
            sg = (dx * sgx + dy * sgy) * (dx * six + dy * siy)
            contrib = contrib * wgt * np.where(sg >= 0, 1.0, -1.0)
        b += contrib
    return b, ok


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _backproject_nb(X, Y, deriv, dvalid, s, u0, du, theta, l, h,
                        use_weights, thetas, width, seg_i, theta_g, feather,
                        wlo, whi, out_b, out_ok):
        ct = math.cos(theta)
        st = math.sin(theta)
        ndet = deriv.shape[1]
        n_src = s.shape[0]
        ds = s[1] - s[0]
        T = thetas.shape[0]
        sgx = -math.sin(theta_g)
        sgy = math.cos(theta_g)
        for p in prange(X.shape[0]):
            x = X[p]
            y = Y[p]
            xl = x * ct + y * st
            yl = -x * st + y * ct
            depth = yl + l
            if depth <= 0.0:
                out_b[p] = 0.0
                out_ok[p] = 0
                continue
            cfac = h / depth
            acc = 0.0
            ok = True
            for k in range(n_src):
                sk = s[k]
                w = ds
                if k == 0 or k == n_src - 1:
                    w = ds / 2
                ustar = sk + (xl - sk) * cfac
                tt = (ustar - u0) / du
                if tt < 0.0 or tt > ndet - 1:
                    ok = False
                    continue
                j0 = int(tt)
                if j0 > ndet - 2:
                    j0 = ndet - 2
                fr = tt - j0
                if not (dvalid[k, j0] and dvalid[k, j0 + 1]):
                    ok = False
                val = deriv[k, j0] * (1.0 - fr) + deriv[k, j0 + 1] * fr
                dx = x - (sk * ct + l * st)
                dy = y - (sk * st - l * ct)
                dist = math.sqrt(dx * dx + dy * dy)
                contrib = w * val / dist
                if use_weights:
                    psi = math.atan2(dy, dx)
                    den = 0.0
                    num = 0.0
                    for j in range(T):
                        pj = psi
                        while pj <= thetas[j]:
                            pj += math.pi
                        while pj > thetas[j] + math.pi:
                            pj -= math.pi
                        d = pj - (thetas[j] + math.pi / 2)
                        term = 0.0
                        if -width < d < width:
                            margin = pj - wlo[j, p]
                            m2 = whi[j, p] - pj
                            if m2 < margin:
                                margin = m2
                            if margin > 0.0:
                                m = margin / feather
                                if m > 1.0:
                                    m = 1.0
                                c = math.cos(math.pi * d / (2.0 * width))
                                term = c * c * m
                        den += term
                        if j == seg_i:
                            num = term
                    if den > 1e-9:
                        wgt = num / den
                    else:
                        wgt = 0.0
                    sg = (dx * sgx + dy * sgy) * (dx * (-st) + dy * ct)
                    if sg < 0.0:
                        wgt = -wgt
                    contrib *= wgt
                acc += contrib
            out_b[p] = acc
            out_ok[p] = 1 if ok else 0


def _run_backprojection(deriv_table: DerivativeTable, grid: ImageGrid,
                        weights_cfg=None) -> DBPImage:
    geom = deriv_table.geom
    X, Y, s, u0, du = _kernel_args(geom, grid)
    deriv = np.ascontiguousarray(deriv_table.values)
    dvalid = np.ascontiguousarray(deriv_table.valid.astype(np.uint8))
    if _HAVE_NUMBA:
        out_b = np.empty(X.shape[0])
        out_ok = np.empty(X.shape[0], dtype=np.uint8)
        if weights_cfg is None:
            thetas = np.zeros(1)
            args = (False, thetas, 0.0, 0, 0.0, 1.0,
                    np.zeros((1, X.shape[0])), np.zeros((1, X.shape[0])))
        else:
            thetas, width, seg_i, theta_g, feather, wlo, whi = weights_cfg
            args = (True, thetas, width, seg_i, theta_g, feather,
                    np.ascontiguousarray(wlo), np.ascontiguousarray(whi))
        _backproject_nb(X, Y, deriv, dvalid.astype(np.bool_), s, u0, du,
                        geom.theta, geom.l, geom.h, *args, out_b, out_ok)
        values = out_b
        ok = out_ok.astype(bool)
    else:
        values, ok = _backproject_numpy(X, Y, deriv, dvalid.astype(bool),
                                        s, u0, du, geom, weights_cfg)
    n = grid.n
    return DBPImage(values.reshape(n, n), ok.reshape(n, n), grid,
                    geom.eta, (0,))


def backproject(deriv: DerivativeTable, grid: ImageGrid) -> DBPImage:
    """Single-segment backprojection of a derivative table (no partition
    weighting); validity marks pixels whose rays all stayed on measured cells."""
    return _run_backprojection(deriv, grid, None)


def dbp_segments(sinos: Sequence[Sinogram], config: MultiScanConfig,
                 grid: ImageGrid, axis_theta: Optional[float] = None,
                 feather: float = PARTITION_FEATHER) -> list:
    """Partition-weighted, sign-coherent per-segment backprojections.

    Every ray orientation through a pixel is shared across the segments that
    measure it (smooth partition of unity), and each contribution is sign
    aligned with the composite filtering axis, so the per-segment images sum
    to the composite-axis Hilbert transform of the object.  With T = 1 the
    weights reduce to 1 and the result equals ``backproject``.
    """
    segs = segments(config)
    if len(sinos) != len(segs):
        raise ValueError(f"expected {len(segs)} sinograms, got {len(sinos)}")
    for sino, g in zip(sinos, segs):
        if sino.geom != g:
            raise ValueError("sinogram geometry does not match the config")
    if axis_theta is None:
        axis_theta = composite_axis(config)
    if config.T == 1:
        # single segment: literal single-trajectory DBP, no sharing to encode
        img = backproject(diff_ray(sinos[0]), grid)
        img.segment_ids = (0,)
        return [img]
    thetas, width = _partition_tables(config)
    X, Y = grid.xy()
    wlo, whi = _coverage_windows(X.ravel(), Y.ravel(), segs)
    out = []
    for i, sino in enumerate(sinos):
        table = diff_ray(sino)
        cfg = (thetas, width, i, axis_theta, feather, wlo, whi)
        img = _run_backprojection(table, grid, cfg)
        img.segment_ids = (i,)
        out.append(img)
    return out


def overlay(dbps: Sequence[DBPImage]) -> DBPImage:
    """Pixelwise sum in the given order; validity is the AND of the inputs."""
    if not dbps:
        raise ValueError("need at least one DBP image")
    grid = dbps[0].grid
    for d in dbps[1:]:
        if d.grid != grid:
            raise ValueError("DBP images live on different grids")
    values = np.zeros_like(dbps[0].values)
    validity = np.ones_like(dbps[0].validity)
    ids = []
    for d in dbps:
        values += d.values
        validity &= d.validity
        ids.extend(d.segment_ids)
    return DBPImage(values, validity, grid, None, tuple(ids))
