import numpy as np
import pytest

from lctlab import ImageGrid, MultiScanConfig, SegmentGeometry
from lctlab.phantom import Ellipse, PhantomSpec


@pytest.fixture
def geom_small():
    """Compact single segment: low magnification keeps the detector short."""
    return SegmentGeometry(theta=0.0, l=15.0, h=40.0, traj_len=20.0,
                           n_src=201, det_cells=641, det_cell_size=0.127)


@pytest.fixture
def cfg_small():
    """Five-segment scan at test scale (small detector and sampling)."""
    return MultiScanConfig(
        T=5,
        base=SegmentGeometry(theta=0.0, l=15.0, h=40.0, traj_len=20.0,
                             n_src=201, det_cells=641, det_cell_size=0.127),
    )


@pytest.fixture
def grid64():
    return ImageGrid(n=64, pixel_size=6.0 / 64)


@pytest.fixture
def grid128():
    return ImageGrid(n=128, pixel_size=8.448 / 128)


@pytest.fixture
def disk_spec():
    return PhantomSpec((Ellipse((0.0, 0.0), 2.0, 2.0, 0.0, 1.0),), 2.5)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))
