"""Synthetic scene builders.

The standard benchmark scene is a double staircase on a 100 x 100 grid over
a 2000-bin window of 2 ps bins: ten depth steps spanning 12..48 cm along the
rows and ten reflectivity levels along the columns spanning peak
signal-to-background ratios of 1..1000 at unit background.  Rows/columns can
be cropped (the ten bands scale with the grid) for desk-scale runs.
"""

import numpy as np

from .model import GroundTruthScene, ImpulseModel, meters_to_bins


def default_impulse(n_bins: int = 2000, amplitude: float = 1000.0,
                    sigma2: float = 100.0, alpha: float = 0.0) -> ImpulseModel:
    return ImpulseModel.gaussian(amplitude, sigma2, n_bins, alpha=alpha)


def _band_index(n_items: int, n_bands: int) -> np.ndarray:
    return (np.arange(n_items) * n_bands) // n_items


def staircase_scene(rows: int = 100, cols: int = 100, n_bins: int = 2000,
                    bin_width_ps: float = 2.0, refractive_index: float = 1.0,
                    depth_range_m=(0.12, 0.48), n_depth_levels: int = 10,
                    refl_levels=None, background: float = 1.0,
                    alpha: float = 0.0) -> GroundTruthScene:
    """Depth bands along rows, reflectivity bands along columns."""
    if refl_levels is None:
        refl_levels = np.logspace(-3.0, 0.0, 10)
    refl_levels = np.asarray(refl_levels, dtype=float)
    depth_levels = meters_to_bins(
        np.linspace(depth_range_m[0], depth_range_m[1], n_depth_levels),
        bin_width_ps, refractive_index)
    if np.any(depth_levels < 0) or np.any(depth_levels > n_bins - 1):
        raise ValueError("depth levels fall outside the acquisition window")
    depth = depth_levels[_band_index(rows, n_depth_levels)][:, None] \
        * np.ones((1, cols))
    refl = np.ones((rows, 1)) * refl_levels[_band_index(cols, refl_levels.size)][None, :]
    return GroundTruthScene(depth=depth, reflectivity=refl,
                            background=background, alpha=alpha)


def flat_scene(rows: int, cols: int, depth_bins: float, refl: float,
               background: float = 0.0, alpha: float = 0.0) -> GroundTruthScene:
    """Constant depth and reflectivity everywhere."""
    return GroundTruthScene(
        depth=np.full((rows, cols), float(depth_bins)),
        reflectivity=np.full((rows, cols), float(refl)),
        background=background, alpha=alpha)
