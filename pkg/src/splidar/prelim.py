"""Per-pixel preliminary depth/reflectivity estimates.

Two classical estimators feed the refinement stage:

* the centroid estimator: depth is the count-weighted mean arrival bin and
  reflectivity the photon total divided by the pulse area (these are the
  in-air maximisers of the simplified per-pixel likelihood);
* the matched-filter (cross-correlation) estimator: depth is the argmax of
  the correlation between the histogram and the sampled pulse, which is far
  more robust to background photons and is the standard initialisation.

With a uniform background and a wide acquisition window the raw centroid is
pulled toward the window centre, so the default restoration pipeline
recentres it: the matched-filter peak is spatially regularised by a masked
median, the correlation search is constrained around that guide, and the
centroid/photon sums are taken in a short window around the detected peak.
This is the per-pixel analogue of gating the histograms before processing.

Empty pixels (zero photons) carry no information: their mask entry is 0,
reflectivity is 0, and depth is flagged NaN and never consumed.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .model import REFL_FLOOR, ImpulseModel, PhotonCube, SceneImages
from .priors import local_refl_mean


@dataclass
class PrelimEstimates:
    """Per-pixel depth/reflectivity estimates plus the non-empty mask."""

    depth: np.ndarray  # bins; NaN where mask is False
    refl: np.ndarray   # nonnegative; 0 where mask is False
    mask: np.ndarray   # True = pixel observed at least one photon

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        self.refl = np.asarray(self.refl, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if not (self.depth.shape == self.refl.shape == self.mask.shape):
            raise ValueError("prelim image shapes differ")
        if np.any(self.refl[~self.mask] != 0):
            raise ValueError("empty pixels must have zero reflectivity")
        if np.any(self.refl[self.mask] <= 0):
            raise ValueError("non-empty pixels must have positive reflectivity")

    @property
    def shape(self):
        return self.mask.shape

    def n_nonempty(self) -> int:
        return int(self.mask.sum())


def _row_chunks(n_rows: int, chunk: int = 16):
    for lo in range(0, n_rows, chunk):
        yield slice(lo, min(lo + chunk, n_rows))


def _totals_and_first_moment(cube: PhotonCube):
    t = np.arange(cube.n_bins, dtype=float)
    totals = np.empty((cube.n_rows, cube.n_cols), dtype=float)
    moment = np.empty_like(totals)
    for rows in _row_chunks(cube.n_rows):
        block = cube.counts[rows].astype(float)
        totals[rows] = block.sum(axis=2)
        moment[rows] = block @ t
    return totals, moment


def centroid_estimates(cube: PhotonCube, irf: ImpulseModel) -> PrelimEstimates:
    """Count-weighted mean bin and scaled photon total per pixel."""
    totals, moment = _totals_and_first_moment(cube)
    mask = totals > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = np.where(mask, moment / totals, np.nan)
    refl = np.where(mask, totals / irf.area, 0.0)
    return PrelimEstimates(depth=depth, refl=refl, mask=mask)


def xcorr_depth(cube: PhotonCube, irf: ImpulseModel,
                kernel_halfwidth: int | None = None,
                window_center: np.ndarray | None = None,
                window_halfwidth: int | None = None) -> np.ndarray:
    """Matched-filter depth: argmax over shifts of sum_t y[t] * pulse(t - shift).

    Ties resolve to the smallest shift.  When a window is given the search is
    restricted to |shift - center| <= halfwidth per pixel.  Empty pixels get
    NaN.
    """
    kernel = irf.pulse_kernel(kernel_halfwidth)
    t_idx = np.arange(cube.n_bins)
    depth = np.empty((cube.n_rows, cube.n_cols), dtype=float)
    if window_center is not None:
        center = np.asarray(window_center, dtype=float)
        center = np.where(np.isfinite(center), center, (cube.n_bins - 1) / 2.0)
        if window_halfwidth is None:
            raise ValueError("window_center requires window_halfwidth")
    for rows in _row_chunks(cube.n_rows):
        block = cube.counts[rows].astype(float)
        corr = correlate1d(block, kernel, axis=2, mode="constant", cval=0.0)
        if window_center is not None:
            inside = np.abs(t_idx[None, None, :] - center[rows][:, :, None]) \
                <= window_halfwidth
            corr = np.where(inside, corr, -1.0)
        depth[rows] = np.argmax(corr, axis=2)
        depth[rows][block.sum(axis=2) == 0] = np.nan
    return depth


def xcorr_estimates(cube: PhotonCube, irf: ImpulseModel,
                    kernel_halfwidth: int | None = None) -> PrelimEstimates:
    """Classical baseline: matched-filter depth, scaled photon-total reflectivity."""
    base = centroid_estimates(cube, irf)
    depth = xcorr_depth(cube, irf, kernel_halfwidth)
    return PrelimEstimates(depth=depth, refl=base.refl, mask=base.mask)


def windowed_centroid_estimates(cube: PhotonCube, irf: ImpulseModel,
                                centers: np.ndarray,
                                halfwidth: int) -> PrelimEstimates:
    """Centroid/photon-total estimates restricted to a window per pixel.

    Windows are [center - halfwidth, center + halfwidth] clipped to the
    acquisition range.  The non-empty mask still reflects the full histogram;
    if a window catches no photon the full-range values are kept for that
    pixel so the estimate stays defined.
    """
    if halfwidth < 0:
        raise ValueError("halfwidth must be nonnegative")
    full = centroid_estimates(cube, irf)
    centers = np.asarray(centers, dtype=float)
    ctr = np.where(np.isfinite(centers), centers, 0.0).round().astype(np.int64)
    lo = np.clip(ctr - halfwidth, 0, cube.n_bins - 1)
    hi = np.clip(ctr + halfwidth, 0, cube.n_bins - 1)

    t = np.arange(cube.n_bins, dtype=float)
    depth = np.full(full.shape, np.nan)
    refl = np.zeros(full.shape)
    cols = np.arange(cube.n_cols)
    for rows in _row_chunks(cube.n_rows):
        block = cube.counts[rows].astype(float)
        cs = np.concatenate([np.zeros(block.shape[:2] + (1,)),
                             np.cumsum(block, axis=2)], axis=2)
        csm = np.concatenate([np.zeros(block.shape[:2] + (1,)),
                              np.cumsum(block * t, axis=2)], axis=2)
        r_lo, r_hi = lo[rows], hi[rows]
        ridx = np.arange(cs.shape[0])[:, None]
        win_tot = cs[ridx, cols, r_hi + 1] - cs[ridx, cols, r_lo]
        win_mom = csm[ridx, cols, r_hi + 1] - csm[ridx, cols, r_lo]
        with np.errstate(invalid="ignore", divide="ignore"):
            depth[rows] = np.where(win_tot > 0, win_mom / win_tot, np.nan)
        refl[rows] = win_tot / irf.area

    fallback = full.mask & ~(refl > 0)
    depth[fallback] = full.depth[fallback]
    refl[fallback] = full.refl[fallback]
    depth[~full.mask] = np.nan
    refl[~full.mask] = 0.0
    return PrelimEstimates(depth=depth, refl=refl, mask=full.mask)


def median_guide(depth: np.ndarray, mask: np.ndarray, size: int = 5) -> np.ndarray:
    """Masked median filter of a depth map; NaN/empty entries are ignored.

    Pixels whose whole neighbourhood is empty fall back to the global median
    of the observed depths.
    """
    if size % 2 != 1 or size < 1:
        raise ValueError("size must be odd and positive")
    half = size // 2
    src = np.where(mask, depth, np.nan)
    padded = np.pad(src, half, constant_values=np.nan)
    stack = np.empty((size * size,) + depth.shape)
    k = 0
    for di in range(size):
        for dj in range(size):
            stack[k] = padded[di:di + depth.shape[0], dj:dj + depth.shape[1]]
            k += 1
    with np.errstate(all="ignore"):
        guide = np.nanmedian(stack, axis=0)
    finite = np.isfinite(src)
    if finite.any():
        guide = np.where(np.isfinite(guide), guide, np.nanmedian(src))
    return guide


@dataclass
class RestorePrelim:
    """Preliminary-estimation bundle consumed by the restoration solvers."""

    used: PrelimEstimates       # estimates the refinement likelihood is built on
    classical: PrelimEstimates  # plain matched-filter baseline
    centers: np.ndarray         # per-pixel peak positions used for windowing


def build_prelim(cube: PhotonCube, irf: ImpulseModel, *, guided: bool = True,
                 centroid_window: int | None = None,
                 gate_halfwidth: int | None = None,
                 kernel_halfwidth: int | None = None,
                 guide_size: int = 5) -> RestorePrelim:
    """Standard preliminary pipeline.

    centroid_window: half-width of the per-pixel gating window in bins;
        None picks ceil(3 * sigma), 0 disables gating (full-range centroid).
    gate_halfwidth: half-width of the constrained peak search around the
        median guide; None picks max(100, ceil(10 * sigma)).
    """
    classical = xcorr_estimates(cube, irf, kernel_halfwidth)
    centers = classical.depth
    if guided and classical.mask.any():
        if gate_halfwidth is None:
            gate_halfwidth = max(100, int(np.ceil(10.0 * irf.sigma)))
        guide = median_guide(classical.depth, classical.mask, guide_size)
        centers = xcorr_depth(cube, irf, kernel_halfwidth,
                              window_center=guide,
                              window_halfwidth=gate_halfwidth)
        # a constrained peak clamped to the window edge while the global
        # peak lies outside means the guide excluded the real return
        # (steep depth changes near the guide neighbourhood); trust the
        # global peak there
        lo = np.maximum(guide - gate_halfwidth, 0)
        hi = np.minimum(guide + gate_halfwidth, cube.n_bins - 1)
        with np.errstate(invalid="ignore"):
            clamped = (np.abs(centers - lo) <= 1) | (np.abs(centers - hi) <= 1)
            outside = np.abs(classical.depth - guide) > gate_halfwidth
        override = clamped & outside & classical.mask
        centers = np.where(override, classical.depth, centers)
    if centroid_window is None:
        centroid_window = int(np.ceil(3.0 * irf.sigma))
    if centroid_window > 0:
        used = windowed_centroid_estimates(cube, irf, centers, centroid_window)
    else:
        used = centroid_estimates(cube, irf)
    return RestorePrelim(used=used, classical=classical, centers=centers)


def initial_images(prelim: PrelimEstimates,
                   depth_init: np.ndarray | None = None) -> SceneImages:
    """Feasible starting images for the iterative solvers.

    Depth starts from depth_init (default: the prelim depths) with empty
    pixels filled by the median observed depth; reflectivity is floored to
    stay strictly positive; the auxiliary image starts at the local
    reflectivity mean so the bipartite lattice is consistent.
    """
    depth = np.array(prelim.depth if depth_init is None else depth_init,
                     dtype=float)
    finite = np.isfinite(depth)
    fill = float(np.median(depth[finite])) if finite.any() else 0.0
    depth = np.where(finite, depth, fill)
    depth = np.maximum(depth, 0.0)
    refl = np.maximum(prelim.refl, REFL_FLOOR)
    aux = local_refl_mean(refl)
    return SceneImages(depth=depth, refl=refl, aux=aux)
