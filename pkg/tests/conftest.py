import numpy as np
import pytest

from liverprog.volume import Mask3D, Volume3D


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_volume(voxels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Volume3D:
    return Volume3D(
        voxels=np.asarray(voxels, dtype=np.float64), spacing=spacing, origin=origin
    )


def make_mask(labels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Mask3D:
    return Mask3D(
        labels=np.asarray(labels, dtype=np.uint8), spacing=spacing, origin=origin
    )
