"""lctlab: linear-trajectory CT simulation, BPF reconstruction, and dataset factory."""

from .geometry import (
    GeometryError,
    ImageGrid,
    MultiScanConfig,
    SegmentGeometry,
    arclength_to_lambda,
    composite_axis,
    detector_u,
    fov_mask,
    magnification,
    segments,
    source_position,
)
from .phantom import Ellipse, PhantomSpec, builtin, line_integral, random_phantom, rasterize
from .projector import Sinogram, project_raster, simulate, truncate_to_roi
from .dbp import DBP_HILBERT_SCALE, DBPImage, backproject, dbp_segments, diff_ray, diff_u, overlay
from .hilbert import (
    FiniteHilbertLine,
    bpf_reconstruct,
    directional_inverse,
    finite_inverse_1d,
    reconstruct_segments,
)
from .metrics import MetricReport, evaluate, profile, psnr, rmse, ssim

__version__ = "0.1.0"
