import numpy as np
import pytest

from tabletop.cloud import PointCloud
from tabletop.camera import CameraModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def trivial_camera():
    return CameraModel(f_i=525.0, f_j=525.0, c_i=319.5, c_j=239.5,
                       image_width=640, image_height=480)


def random_cloud(rng, n, lo=-1.0, hi=1.0):
    xyz = rng.uniform(lo, hi, (n, 3))
    rgb = rng.integers(0, 256, (n, 3), dtype=np.uint8)
    return PointCloud(xyz, rgb)


@pytest.fixture
def make_cloud(rng):
    def factory(n, lo=-1.0, hi=1.0):
        return random_cloud(rng, n, lo, hi)
    return factory
