import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from splidar import ImpulseModel, PhotonCube, PrelimEstimates


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def make_irf(amplitude=1000.0, sigma2=100.0, n_bins=2000, alpha=0.0):
    return ImpulseModel.gaussian(amplitude, sigma2, n_bins, alpha=alpha)


def cube_from_counts(counts, bin_width_ps=2.0, refractive_index=1.0):
    return PhotonCube(np.asarray(counts, dtype=np.uint32), bin_width_ps,
                      refractive_index)


def single_pixel_prelim(depth, refl, observed=True):
    return PrelimEstimates(
        depth=np.array([[depth if observed else np.nan]]),
        refl=np.array([[refl if observed else 0.0]]),
        mask=np.array([[observed]]),
    )
