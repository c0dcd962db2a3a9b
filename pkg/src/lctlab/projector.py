"""Sinogram synthesis and interior-ROI truncation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    GeometryError,
    ImageGrid,
    SegmentGeometry,
    arc_positions,
    detector_cells,
)
from .phantom import PhantomSpec, chord_lengths

__all__ = ["Sinogram", "EmptyROIError", "simulate", "project_raster", "truncate_to_roi"]


class EmptyROIError(ValueError):
    """No measured ray intersects the requested ROI."""


@dataclass
class Sinogram:
    """Projection samples p(s_k, u_j) for one segment.

    values: (n_src, det_cells) float array.
    mask: optional bool array, False marks unmeasured cells; masked cells
    hold exactly zero in ``values``.
    """

    values: np.ndarray
    geom: SegmentGeometry
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        expected = (self.geom.n_src, self.geom.det_cells)
        if self.values.shape != expected:
            raise ValueError(f"sinogram shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sinogram contains non-finite values")
        if self.mask is not None:
            if self.mask.shape != expected:
                raise ValueError("mask shape mismatch")
            if np.any(self.values[~self.mask] != 0.0):
                raise ValueError("masked cells must hold zero")


def _coverage_warning(spec: PhantomSpec, geom: SegmentGeometry):
    """Warn when rays through the support disk can fall off the detector."""
    ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    bx = spec.support_radius * np.cos(ang)
    by = spec.support_radius * np.sin(ang)
    xl, yl = geom.local_coords(bx, by)
    depth = yl + geom.l
    if np.any(depth <= 0):
        warnings.warn("phantom support reaches behind the source line")
        return
    u_cells = detector_cells(geom)
    for s_end in (-geom.traj_len / 2, geom.traj_len / 2):
        u = s_end + (xl - s_end) * geom.h / depth
        if u.min() < u_cells[0] or u.max() > u_cells[-1]:
            warnings.warn(
                "phantom support is not fully covered by the detector over the "
                "whole trajectory; sinogram will be truncated"
            )
            return


def simulate(spec: PhantomSpec, geom: SegmentGeometry, chunk: int = 64) -> Sinogram:
    """Exact analytic sinogram: values[k, j] is the phantom line integral from
    the source at s_k through detector cell center u_j."""
    _coverage_warning(spec, geom)
    s = arc_positions(geom)
    u = detector_cells(geom)
    sx, sy = geom.source_xy(s)
    dx, dy = geom.detector_xy(u)
    values = np.empty((geom.n_src, geom.det_cells))
    for k0 in range(0, geom.n_src, chunk):
        k1 = min(k0 + chunk, geom.n_src)
        values[k0:k1] = chord_lengths(
            spec,
            sx[k0:k1, None], sy[k0:k1, None],
            dx[None, :], dy[None, :],
        )
    return Sinogram(values, geom)


def project_raster(img: np.ndarray, grid: ImageGrid, geom: SegmentGeometry,
                   chunk: int = 16) -> Sinogram:
    """Sinogram of a raster image by ray marching with bilinear sampling.

    Rays are clipped to the grid's bounding square; the marching step never
    exceeds half a pixel.
    """
    if img.shape != (grid.n, grid.n):
        raise ValueError(f"image shape {img.shape} != grid ({grid.n}, {grid.n})")
    s = arc_positions(geom)
    u = detector_cells(geom)
    sx, sy = geom.source_xy(s)
    dxw, dyw = geom.detector_xy(u)

    half = grid.extent / 2
    x0c, y0c = grid.center
    n_steps = int(np.ceil(2 * np.sqrt(2.0) * half / (grid.pixel_size / 2)))
    frac = (np.arange(n_steps) + 0.5) / n_steps

    values = np.zeros((geom.n_src, geom.det_cells))
    inv_px = 1.0 / grid.pixel_size
    half_idx = (grid.n - 1) / 2
    for k0 in range(0, geom.n_src, chunk):
        k1 = min(k0 + chunk, geom.n_src)
        ax = sx[k0:k1, None]
        ay = sy[k0:k1, None]
        vx = dxw[None, :] - ax
        vy = dyw[None, :] - ay
        nrm = np.hypot(vx, vy)
        ux, uy = vx / nrm, vy / nrm
        # slab clipping against the bounding square
        with np.errstate(divide="ignore", invalid="ignore"):
            tx1 = (x0c - half - ax) / ux
            tx2 = (x0c + half - ax) / ux
            ty1 = (y0c - half - ay) / uy
            ty2 = (y0c + half - ay) / uy
        txmin = np.fmin(tx1, tx2)
        txmax = np.fmax(tx1, tx2)
        tymin = np.fmin(ty1, ty2)
        tymax = np.fmax(ty1, ty2)
        t_in = np.fmax(np.where(np.isfinite(txmin), txmin, -np.inf),
                       np.where(np.isfinite(tymin), tymin, -np.inf))
        t_out = np.fmin(np.where(np.isfinite(txmax), txmax, np.inf),
                        np.where(np.isfinite(tymax), tymax, np.inf))
        seg_len = np.clip(t_out - t_in, 0.0, None)
        acc = np.zeros_like(seg_len)
        for f in frac:
            t = t_in + f * seg_len
            px = ax + t * ux
            py = ay + t * uy
            ci = (px - x0c) * inv_px + half_idx
            ri = half_idx - (py - y0c) * inv_px
            c0 = np.clip(np.floor(ci).astype(np.int64), 0, grid.n - 2)
            r0 = np.clip(np.floor(ri).astype(np.int64), 0, grid.n - 2)
            fc = np.clip(ci - c0, 0.0, 1.0)
            fr = np.clip(ri - r0, 0.0, 1.0)
            v = (img[r0, c0] * (1 - fr) * (1 - fc)
                 + img[r0, c0 + 1] * (1 - fr) * fc
                 + img[r0 + 1, c0] * fr * (1 - fc)
                 + img[r0 + 1, c0 + 1] * fr * fc)
            acc += v
        values[k0:k1] = acc * seg_len / n_steps
    return Sinogram(values, geom)


def truncate_to_roi(sino: Sinogram, roi_center, roi_radius: float) -> Sinogram:
    """Zero and mask every cell whose ray misses the ROI disk.

    Measured cells are untouched, so applying the same ROI twice is a no-op.
    """
    if roi_radius <= 0:
        raise ValueError("roi_radius must be positive")
    geom = sino.geom
    s = arc_positions(geom)
    u = detector_cells(geom)
    sx, sy = geom.source_xy(s)
    dx, dy = geom.detector_xy(u)
    vx = dx[None, :] - sx[:, None]
    vy = dy[None, :] - sy[:, None]
    nrm = np.hypot(vx, vy)
    ux, uy = vx / nrm, vy / nrm
    px = roi_center[0] - sx[:, None]
    py = roi_center[1] - sy[:, None]
    # distance to the physical source->detector segment, not the full line
    tproj = np.clip(px * ux + py * uy, 0.0, nrm)
    dist2 = (px - tproj * ux) ** 2 + (py - tproj * uy) ** 2
    keep = dist2 <= roi_radius * roi_radius
    if not keep.any():
        raise EmptyROIError("no measured ray intersects the ROI disk")
    mask = keep if sino.mask is None else (sino.mask & keep)
    values = np.where(mask, sino.values, 0.0)
    return Sinogram(values, geom, mask)
