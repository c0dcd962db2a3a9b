"""Scan geometry for linear-trajectory CT.

Conventions (world frame, mm):

* A segment's source travels along a straight line with direction
  ``(cos(theta), sin(theta))`` at perpendicular distance ``l`` from the
  origin; the foot of the perpendicular is ``F = (l sin(theta), -l cos(theta))``.
* The flat detector is the parallel line at perpendicular distance ``h``
  from the source line, on the far side of the object.  The detector
  coordinate ``u`` is measured along the detector from the perpendicular-foot
  axis (plus ``det_offset``); it does not translate with the source.
* The source parameter is either the signed arc position ``s`` (uniform
  sampling over ``[-traj_len/2, +traj_len/2]``) or the view angle ``lambda``
  measured from the +y axis; the two are linked by ``s = -l tan(theta+lambda)``.

Angles are radians everywhere in code; file I/O uses degrees.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "GeometryError",
    "SegmentGeometry",
    "MultiScanConfig",
    "ImageGrid",
    "source_position",
    "arclength_to_lambda",
    "lambda_to_arclength",
    "arc_positions",
    "detector_cells",
    "detector_u",
    "magnification",
    "segments",
    "composite_axis",
    "segment_fov",
    "fov_mask",
    "geometry_digest",
    "to_json",
    "from_json",
]

_DEGENERACY_TOL = 1e-12


class GeometryError(ValueError):
    """Degenerate ray or invalid geometry parameters."""


@dataclass(frozen=True)
class SegmentGeometry:
    """One linear scan segment.

    theta: angle from the +x axis to the trajectory line (radians).
    l: perpendicular source-line-to-origin distance (mm).
    h: perpendicular source-line-to-detector-line distance (mm).
    traj_len: scanned trajectory extent LS (mm).
    n_src: number of source positions, uniform in arc length.
    det_cells / det_cell_size / det_offset: detector layout (mm).
    """

    theta: float = 0.0
    l: float = 15.0
    h: float = 190.0
    traj_len: float = 20.0
    n_src: int = 1001
    det_cells: int = 4096
    det_cell_size: float = 0.127
    det_offset: float = 0.0

    def __post_init__(self):
        if not self.l > 0:
            raise GeometryError(f"l must be positive, got {self.l}")
        if not self.h > self.l:
            raise GeometryError(f"h must exceed l, got h={self.h}, l={self.l}")
        if not self.traj_len > 0:
            raise GeometryError(f"traj_len must be positive, got {self.traj_len}")
        if self.n_src < 2:
            raise GeometryError(f"n_src must be >= 2, got {self.n_src}")
        if self.det_cells < 2:
            raise GeometryError(f"det_cells must be >= 2, got {self.det_cells}")
        if not self.det_cell_size > 0:
            raise GeometryError("det_cell_size must be positive")

    # unit vectors of the trajectory-local frame
    @property
    def t_hat(self) -> np.ndarray:
        """Trajectory direction (filtering direction)."""
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def n_hat(self) -> np.ndarray:
        """Forward normal, pointing from the source line toward the detector."""
        return np.array([-math.sin(self.theta), math.cos(self.theta)])

    @property
    def eta(self) -> float:
        """Filtering-direction label: eta = theta - pi/2."""
        return self.theta - math.pi / 2

    def local_coords(self, x, y):
        """World -> trajectory-local (x', y'); the source line is y' = -l."""
        ct, st = math.cos(self.theta), math.sin(self.theta)
        return x * ct + y * st, -x * st + y * ct

    def source_xy(self, s):
        """World source position for arc position(s) s."""
        ct, st = math.cos(self.theta), math.sin(self.theta)
        s = np.asarray(s, dtype=float)
        return s * ct + self.l * st, s * st - self.l * ct

    def detector_xy(self, u):
        """World position of detector coordinate(s) u."""
        ct, st = math.cos(self.theta), math.sin(self.theta)
        u = np.asarray(u, dtype=float)
        d = self.h - self.l
        return u * ct - d * st, u * st + d * ct


@dataclass(frozen=True)
class MultiScanConfig:
    """T segments with evenly stepped trajectory angles."""

    T: int = 5
    delta_theta: float = math.radians(36.5)
    theta0: float = 0.0
    base: SegmentGeometry = field(default_factory=SegmentGeometry)

    def __post_init__(self):
        if self.T < 1:
            raise GeometryError(f"T must be >= 1, got {self.T}")
        if self.T > 1 and not self.delta_theta > 0:
            raise GeometryError("delta_theta must be positive")


@dataclass(frozen=True)
class ImageGrid:
    """Square reconstruction grid; row 0 holds the maximal y coordinate."""

    n: int = 512
    pixel_size: float = 0.0165
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n < 2:
            raise GeometryError(f"grid n must be >= 2, got {self.n}")
        if not self.pixel_size > 0:
            raise GeometryError("pixel_size must be positive")

    @property
    def extent(self) -> float:
        """Physical side length (mm)."""
        return self.n * self.pixel_size

    def axes(self):
        """1-D world coordinates: (x of columns, y of rows)."""
        half = (self.n - 1) / 2
        cols = (np.arange(self.n) - half) * self.pixel_size + self.center[0]
        rows = (half - np.arange(self.n)) * self.pixel_size + self.center[1]
        return cols, rows

    def xy(self):
        """Meshgrids (X, Y) of pixel-center world coordinates."""
        cols, rows = self.axes()
        return np.meshgrid(cols, rows)


def source_position(geom: SegmentGeometry, lam: float) -> np.ndarray:
    """Source position for view angle lambda: (-l/cos(theta+lam))*(sin lam, cos lam)."""
    c = math.cos(geom.theta + lam)
    if c <= _DEGENERACY_TOL:
        raise GeometryError(f"ray degenerate: cos(theta+lambda)={c:.3e} <= 0")
    r = -geom.l / c
    return np.array([r * math.sin(lam), r * math.cos(lam)])


def arclength_to_lambda(geom: SegmentGeometry, s: float) -> float:
    """View angle of the source at signed arc position s along the trajectory."""
    return math.atan2(-s, geom.l) - geom.theta


def lambda_to_arclength(geom: SegmentGeometry, lam: float) -> float:
    """Inverse of :func:`arclength_to_lambda`."""
    return -geom.l * math.tan(geom.theta + lam)


def arc_positions(geom: SegmentGeometry) -> np.ndarray:
    """Uniform arc-length sampling s_k over [-traj_len/2, +traj_len/2]."""
    return np.linspace(-geom.traj_len / 2, geom.traj_len / 2, geom.n_src)


def detector_cells(geom: SegmentGeometry) -> np.ndarray:
    """Detector cell-center coordinates u_j."""
    j = np.arange(geom.det_cells)
    return (j - (geom.det_cells - 1) / 2) * geom.det_cell_size + geom.det_offset


def detector_u(geom: SegmentGeometry, s, p):
    """u-coordinate where the ray from the source at arc position s through p
    meets the detector line.

    p may be a point (x, y) or arrays; broadcasting applies.
    """
    x, y = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    xl, yl = geom.local_coords(x, y)
    depth = yl + geom.l
    if np.any(depth <= _DEGENERACY_TOL):
        raise GeometryError("point on or behind the source line (y' + l <= 0)")
    return s + (xl - s) * geom.h / depth


def magnification(geom: SegmentGeometry) -> float:
    """Detector-plane to object-plane distance ratio h/l."""
    return geom.h / geom.l


def segments(config: MultiScanConfig) -> list:
    """The T segment geometries, theta_i = theta0 + i*delta_theta."""
    return [
        replace(config.base, theta=config.theta0 + i * config.delta_theta)
        for i in range(config.T)
    ]


def composite_axis(config: MultiScanConfig) -> float:
    """Bisecting trajectory direction theta_g = theta0 + (T-1)/2 * delta_theta.

    The multi-segment reconstruction filters along this common axis.
    """
    return config.theta0 + (config.T - 1) / 2 * config.delta_theta


def segment_fov(geom: SegmentGeometry, grid: ImageGrid) -> np.ndarray:
    """Pixels whose rays stay strictly inside the detector for every source
    position of this segment.

    u(s) is affine in s for a fixed pixel, so checking the two trajectory
    endpoints covers every intermediate sample exactly.
    """
    X, Y = grid.xy()
    xl, yl = geom.local_coords(X, Y)
    depth = yl + geom.l
    front = depth > _DEGENERACY_TOL
    u_cells = detector_cells(geom)
    u_lo, u_hi = u_cells[0], u_cells[-1]
    mask = front.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        for s_end in (-geom.traj_len / 2, geom.traj_len / 2):
            u = s_end + (xl - s_end) * geom.h / depth
            mask &= front & (u > u_lo) & (u < u_hi)
    return mask


def fov_mask(config: MultiScanConfig, grid: ImageGrid) -> np.ndarray:
    """AND of every segment's detector-coverage mask."""
    mask = np.ones((grid.n, grid.n), dtype=bool)
    for geom in segments(config):
        mask &= segment_fov(geom, grid)
    return mask


# ----------------------------------------------------------------------------
# serialization (degrees + mm in files)

def _segment_record(geom: SegmentGeometry) -> dict:
    return {
        "theta_deg": math.degrees(geom.theta),
        "l_mm": geom.l,
        "h_mm": geom.h,
        "traj_len_mm": geom.traj_len,
        "n_src": geom.n_src,
        "det_cells": geom.det_cells,
        "det_cell_size_mm": geom.det_cell_size,
        "det_offset_mm": geom.det_offset,
    }


def _segment_from_record(rec: dict) -> SegmentGeometry:
    return SegmentGeometry(
        theta=math.radians(rec["theta_deg"]),
        l=rec["l_mm"],
        h=rec["h_mm"],
        traj_len=rec["traj_len_mm"],
        n_src=int(rec["n_src"]),
        det_cells=int(rec["det_cells"]),
        det_cell_size=rec["det_cell_size_mm"],
        det_offset=rec.get("det_offset_mm", 0.0),
    )


def to_json(obj) -> str:
    """Serialize a SegmentGeometry, MultiScanConfig, or ImageGrid."""
    if isinstance(obj, SegmentGeometry):
        doc = {"kind": "segment", **_segment_record(obj)}
    elif isinstance(obj, MultiScanConfig):
        doc = {
            "kind": "multiscan",
            "T": obj.T,
            "delta_theta_deg": math.degrees(obj.delta_theta),
            "theta0_deg": math.degrees(obj.theta0),
            "base": _segment_record(obj.base),
        }
    elif isinstance(obj, ImageGrid):
        doc = {
            "kind": "grid",
            "n": obj.n,
            "pixel_size_mm": obj.pixel_size,
            "center_mm": list(obj.center),
        }
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return json.dumps(doc, sort_keys=True)


def from_json(text: str):
    """Inverse of :func:`to_json`."""
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "segment":
        return _segment_from_record(doc)
    if kind == "multiscan":
        return MultiScanConfig(
            T=int(doc["T"]),
            delta_theta=math.radians(doc["delta_theta_deg"]),
            theta0=math.radians(doc["theta0_deg"]),
            base=_segment_from_record(doc["base"]),
        )
    if kind == "grid":
        return ImageGrid(
            n=int(doc["n"]),
            pixel_size=doc["pixel_size_mm"],
            center=tuple(doc.get("center_mm", (0.0, 0.0))),
        )
    raise ValueError(f"unknown geometry document kind: {kind!r}")


def geometry_digest(obj) -> str:
    """Short stable digest of a geometry object's canonical JSON."""
    return hashlib.blake2b(to_json(obj).encode(), digest_size=8).hexdigest()
