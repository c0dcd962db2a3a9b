"""Image-quality metrics: RMSE, PSNR, SSIM, and line profiles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["MetricReport", "rmse", "psnr", "ssim", "profile", "evaluate"]


def _check_shapes(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray]):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is not None and mask.shape != a.shape:
        raise ValueError(f"mask shape {mask.shape} != image shape {a.shape}")


def rmse(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Root-mean-square difference, optionally over a boolean mask."""
    _check_shapes(a, b, mask)
    d = a - b
    if mask is not None:
        d = d[mask]
    return float(np.sqrt(np.mean(d * d)))


def psnr(a: np.ndarray, b: np.ndarray, data_range: float,
         mask: Optional[np.ndarray] = None) -> float:
    """10 log10(data_range^2 / MSE); +inf when the images agree exactly."""
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    _check_shapes(a, b, mask)
    d = a - b
    if mask is not None:
        d = d[mask]
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def _window_sums(img: np.ndarray, w: int) -> np.ndarray:
    """Exact sums over every w x w window (integral-image based)."""
    c = np.cumsum(np.cumsum(img, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return (c[w:, w:] - c[:-w, w:] - c[w:, :-w] + c[:-w, :-w])


def ssim(a: np.ndarray, b: np.ndarray, data_range: float, window: int = 8,
         k1: float = 0.01, k2: float = 0.03,
         mask: Optional[np.ndarray] = None) -> float:
    """Mean local SSIM with a uniform window.

    Local means, variances (population), and covariance come from exact
    window sums; with a mask, only windows fully inside the mask count.
    """
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    _check_shapes(a, b, mask)
    if min(a.shape) < window:
        raise ValueError(f"images smaller than the {window}x{window} window")
    npx = window * window
    sa = _window_sums(a, window)
    sb = _window_sums(b, window)
    saa = _window_sums(a * a, window)
    sbb = _window_sums(b * b, window)
    sab = _window_sums(a * b, window)
    mu_a = sa / npx
    mu_b = sb / npx
    var_a = saa / npx - mu_a * mu_a
    var_b = sbb / npx - mu_b * mu_b
    cov = sab / npx - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    smap = num / den
    if mask is None:
        return float(np.mean(smap))
    inside = _window_sums(mask.astype(float), window) >= npx - 0.5
    if not inside.any():
        raise ValueError("mask admits no full window")
    return float(np.mean(smap[inside]))


def profile(img: np.ndarray, axis: str = "row", index: Optional[int] = None,
            span: Optional[tuple] = None) -> np.ndarray:
    """Extract a 1-D slice: the center row/column by default, optionally a
    half-open [start, stop) range along it."""
    if axis not in ("row", "col"):
        raise ValueError("axis must be 'row' or 'col'")
    n_along = img.shape[1] if axis == "row" else img.shape[0]
    n_across = img.shape[0] if axis == "row" else img.shape[1]
    if index is None:
        index = n_across // 2
    if not 0 <= index < n_across:
        raise IndexError(f"index {index} out of bounds for {n_across}")
    line = img[index, :] if axis == "row" else img[:, index]
    if span is not None:
        start, stop = span
        if not (0 <= start < stop <= n_along):
            raise IndexError(f"span {span} out of bounds for length {n_along}")
        line = line[start:stop]
    return np.array(line, copy=True)


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    rmse: float
    data_range: float
    masked: bool

    def to_json(self) -> str:
        doc = {
            "psnr_db": self.psnr if math.isfinite(self.psnr) else "inf",
            "ssim": self.ssim,
            "rmse": self.rmse,
            "data_range": self.data_range,
            "masked": self.masked,
        }
        return json.dumps(doc, sort_keys=True)


def evaluate(img: np.ndarray, reference: np.ndarray,
             data_range: Optional[float] = None,
             mask: Optional[np.ndarray] = None) -> MetricReport:
    """Full report of an image against a reference label.

    data_range defaults to the reference maximum.
    """
    if data_range is None:
        data_range = float(reference.max())
        if data_range <= 0:
            data_range = 1.0
    return MetricReport(
        psnr=psnr(img, reference, data_range, mask),
        ssim=ssim(img, reference, data_range, mask=mask),
        rmse=rmse(img, reference, mask),
        data_range=data_range,
        masked=mask is not None,
    )
