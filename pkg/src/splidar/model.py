"""Forward observation model for single-photon lidar histogram cubes.

A scanning TCSPC system records, for every pixel (i, j), a histogram of
photon arrival times over T bins.  Counts are Poisson distributed around
a rate that combines a Gaussian system pulse with the target reflectivity,
a range-dependent attenuation of the propagation medium, and a constant
background level:

    rate(i, j, t) = refl[i,j] * exp(-alpha * depth[i,j])
                    * pulse(t - depth[i,j]) + background

with pulse(x) = amplitude * exp(-x^2 / (2 * sigma2)).  In air alpha = 0 and
the attenuation factor disappears.

All depths and the attenuation coefficient are expressed in bin units;
conversion to metres (one bin of delay corresponds to
bin_width * c / (2 * refractive_index) metres of range) happens only at the
I/O boundary.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import SolverError

SPEED_OF_LIGHT = 299792458.0  # m/s

# Poisson rates above this would risk overflowing the uint32 count storage.
MAX_RATE = 1.0e9

# Strictly positive floor applied to reflectivity initialisations so the
# refinement objectives stay strictly convex.
REFL_FLOOR = 1e-6


def meters_per_bin(bin_width_ps: float, refractive_index: float = 1.0) -> float:
    """Range increment corresponding to one histogram bin of delay."""
    return bin_width_ps * 1e-12 * SPEED_OF_LIGHT / (2.0 * refractive_index)


def bins_to_meters(bins, bin_width_ps: float, refractive_index: float = 1.0):
    return np.asarray(bins, dtype=float) * meters_per_bin(bin_width_ps, refractive_index)


def meters_to_bins(meters, bin_width_ps: float, refractive_index: float = 1.0):
    return np.asarray(meters, dtype=float) / meters_per_bin(bin_width_ps, refractive_index)


def alpha_per_bin(alpha_per_meter: float, bin_width_ps: float,
                  refractive_index: float = 1.0) -> float:
    """Convert an attenuation coefficient from 1/m to 1/bin.

    The product alpha * depth is invariant under the conversion, so
    exp(-alpha*t) gives the same attenuation whether (alpha, t) are
    expressed per bin or per metre.
    """
    return alpha_per_meter * meters_per_bin(bin_width_ps, refractive_index)


def alpha_per_meter(alpha_bin: float, bin_width_ps: float,
                    refractive_index: float = 1.0) -> float:
    return alpha_bin / meters_per_bin(bin_width_ps, refractive_index)


@dataclass(frozen=True)
class ImpulseModel:
    """Gaussian system pulse plus the medium attenuation coefficient.

    amplitude: peak of the pulse (counts at the mode).
    sigma2:    pulse variance in bins^2.
    alpha:     attenuation per bin (0 in air).
    area:      temporal sum of the pulse over the acquisition window; for a
               pulse well inside the window this is amplitude*sigma*sqrt(2*pi)
               and is treated as shift independent.
    """

    amplitude: float
    sigma2: float
    alpha: float = 0.0
    area: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("impulse amplitude must be positive")
        if not self.sigma2 > 0:
            raise ValueError("impulse sigma2 must be positive")
        if self.alpha < 0:
            raise ValueError("attenuation must be nonnegative")
        if not self.area > 0:
            raise ValueError("impulse area must be positive")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @classmethod
    def gaussian(cls, amplitude: float, sigma2: float, n_bins: int,
                 alpha: float = 0.0) -> "ImpulseModel":
        """Build the model, computing the pulse area by summation over bins."""
        area = pulse_area(amplitude, sigma2, n_bins)
        return cls(amplitude=amplitude, sigma2=sigma2, alpha=alpha, area=area)

    def with_alpha(self, alpha: float) -> "ImpulseModel":
        return replace(self, alpha=alpha)

    def pulse(self, offsets):
        """Evaluate the pulse at the given bin offsets from its centre."""
        x = np.asarray(offsets, dtype=float)
        return self.amplitude * np.exp(-(x * x) / (2.0 * self.sigma2))

    def pulse_kernel(self, halfwidth: int | None = None):
        """Symmetric sampled pulse used by matched-filter correlation."""
        if halfwidth is None:
            halfwidth = int(np.ceil(6.0 * self.sigma))
        return self.pulse(np.arange(-halfwidth, halfwidth + 1))


def pulse_area(amplitude: float, sigma2: float, n_bins: int,
               center: float | None = None) -> float:
    """Sum of the sampled Gaussian pulse over an n_bins window.

    For centres at least a few sigma inside the window the value is
    independent of the centre (relative variation below 1e-6), which is what
    lets the refinement treat it as a constant.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if center is None:
        center = (n_bins - 1) / 2.0
    t = np.arange(n_bins, dtype=float)
    return float(np.sum(amplitude * np.exp(-(t - center) ** 2 / (2.0 * sigma2))))


@dataclass
class PhotonCube:
    """Nr x Nc x T histogram of photon counts with bin metadata."""

    counts: np.ndarray
    bin_width_ps: float = 2.0
    refractive_index: float = 1.0

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3 or min(counts.shape) < 1:
            raise ValueError("counts must be a nonempty (rows, cols, bins) array")
        if np.issubdtype(counts.dtype, np.floating):
            if np.any(counts < 0) or np.any(counts != np.floor(counts)):
                raise ValueError("counts must be nonnegative integers")
        elif np.issubdtype(counts.dtype, np.signedinteger):
            if np.any(counts < 0):
                raise ValueError("counts must be nonnegative")
        elif not np.issubdtype(counts.dtype, np.unsignedinteger):
            raise ValueError("counts must have an integer dtype")
        if np.any(counts > np.iinfo(np.uint32).max):
            raise ValueError("counts exceed uint32 storage")
        self.counts = counts.astype(np.uint32, copy=False)
        if not self.bin_width_ps > 0:
            raise ValueError("bin_width_ps must be positive")
        if not self.refractive_index > 0:
            raise ValueError("refractive_index must be positive")

    @property
    def n_rows(self) -> int:
        return self.counts.shape[0]

    @property
    def n_cols(self) -> int:
        return self.counts.shape[1]

    @property
    def n_bins(self) -> int:
        return self.counts.shape[2]

    def pixel_totals(self) -> np.ndarray:
        """Per-pixel photon totals; a pixel is non-empty iff its total > 0."""
        return self.counts.sum(axis=2, dtype=np.int64)

    def nonempty_mask(self) -> np.ndarray:
        return self.pixel_totals() > 0

    def crop_bins(self, lo: int, hi: int) -> "PhotonCube":
        """Keep bins lo..hi inclusive (gating).  Depths in the cropped cube
        are expressed relative to bin lo."""
        if not (0 <= lo <= hi < self.n_bins):
            raise ValueError(f"gate [{lo}, {hi}] outside 0..{self.n_bins - 1}")
        return PhotonCube(self.counts[:, :, lo:hi + 1].copy(),
                          self.bin_width_ps, self.refractive_index)

    def meters_per_bin(self) -> float:
        return meters_per_bin(self.bin_width_ps, self.refractive_index)


@dataclass
class GroundTruthScene:
    """Known depth/reflectivity images used to synthesize test cubes."""

    depth: np.ndarray          # bins
    reflectivity: np.ndarray   # dimensionless, [0, 1] for the standard scenes
    background: float = 0.0    # counts per bin
    alpha: float = 0.0         # per-bin attenuation of the medium

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        self.reflectivity = np.asarray(self.reflectivity, dtype=float)
        if self.depth.shape != self.reflectivity.shape or self.depth.ndim != 2:
            raise ValueError("depth and reflectivity must be equal-shaped 2-D images")
        if not (np.all(np.isfinite(self.depth))
                and np.all(np.isfinite(self.reflectivity))):
            raise ValueError("scene images must be finite")
        if np.any(self.depth < 0):
            raise ValueError("depth must be nonnegative")
        if np.any(self.reflectivity < 0):
            raise ValueError("reflectivity must be nonnegative")
        if np.any(np.asarray(self.background) < 0):
            raise ValueError("background must be nonnegative")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def shape(self):
        return self.depth.shape


@dataclass
class SceneImages:
    """A solver state / result: depth, reflectivity and the auxiliary image
    living on the interleaved (Nr+1) x (Nc+1) lattice."""

    depth: np.ndarray
    refl: np.ndarray
    aux: np.ndarray | None = None

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        self.refl = np.asarray(self.refl, dtype=float)
        if self.depth.shape != self.refl.shape:
            raise ValueError("depth and reflectivity shapes differ")
        if not (np.all(np.isfinite(self.depth))
                and np.all(np.isfinite(self.refl))):
            raise ValueError("solver images must be finite")
        if np.any(self.depth < 0):
            raise ValueError("depth must be nonnegative")
        if np.any(self.refl <= 0):
            raise ValueError("reflectivity must be strictly positive")
        if self.aux is not None:
            self.aux = np.asarray(self.aux, dtype=float)
            if np.any(self.aux <= 0):
                raise ValueError("auxiliary image must be strictly positive")

    def copy(self) -> "SceneImages":
        return SceneImages(self.depth.copy(), self.refl.copy(),
                           None if self.aux is None else self.aux.copy())


def forward_rate(scene: GroundTruthScene, irf: ImpulseModel,
                 pixel: tuple[int, int], t_bin: int) -> float:
    """Mean photon count of one histogram bin of one pixel."""
    i, j = pixel
    d = scene.depth[i, j]
    r = scene.reflectivity[i, j]
    b = np.asarray(scene.background)
    b_ij = float(b[i, j]) if b.ndim == 2 else float(b)
    pulse = irf.amplitude * np.exp(-(t_bin - d) ** 2 / (2.0 * irf.sigma2))
    return float(r * np.exp(-scene.alpha * d) * pulse + b_ij)


def forward_rate_block(scene: GroundTruthScene, irf: ImpulseModel,
                       n_bins: int, rows: slice | None = None) -> np.ndarray:
    """Vectorised rates for a block of rows, shape (rows, Nc, T)."""
    if rows is None:
        rows = slice(0, scene.shape[0])
    d = scene.depth[rows]
    r = scene.reflectivity[rows]
    b = np.asarray(scene.background, dtype=float)
    if b.ndim == 2:
        b = b[rows][:, :, None]
    t = np.arange(n_bins, dtype=float)
    pulse = irf.amplitude * np.exp(-(t[None, None, :] - d[:, :, None]) ** 2
                                   / (2.0 * irf.sigma2))
    return (r * np.exp(-scene.alpha * d))[:, :, None] * pulse + b


def synthesize_cube(scene: GroundTruthScene, irf: ImpulseModel, seed: int,
                    n_bins: int, bin_width_ps: float = 2.0,
                    refractive_index: float = 1.0,
                    row_chunk: int = 16) -> PhotonCube:
    """Draw a Poisson histogram cube from the forward model.

    Deterministic for a given seed.  Rates above MAX_RATE are rejected to
    keep the uint32 count storage safe.
    """
    peak = float(np.max(scene.reflectivity * np.exp(-scene.alpha * scene.depth)))
    max_rate = peak * irf.amplitude + float(np.max(scene.background))
    if max_rate > MAX_RATE:
        raise ValueError(f"maximum Poisson rate {max_rate:.3g} exceeds {MAX_RATE:.3g}")
    n_rows, n_cols = scene.shape
    rng = np.random.default_rng(seed)
    counts = np.empty((n_rows, n_cols, n_bins), dtype=np.uint32)
    for lo in range(0, n_rows, row_chunk):
        block = slice(lo, min(lo + row_chunk, n_rows))
        rates = forward_rate_block(scene, irf, n_bins, block)
        counts[block] = rng.poisson(rates).astype(np.uint32)
    return PhotonCube(counts, bin_width_ps, refractive_index)


def thin_cube(cube: PhotonCube, keep_prob: float, seed: int) -> PhotonCube:
    """Binomially thin every bin count with probability keep_prob.

    For Poisson counts this is distributionally identical to shortening the
    acquisition time by the same factor, which emulates re-histogramming
    timed events over a shorter dwell.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError("keep_prob must lie in [0, 1]")
    if keep_prob == 1.0:
        return PhotonCube(cube.counts.copy(), cube.bin_width_ps, cube.refractive_index)
    rng = np.random.default_rng([seed, 0x7111])
    thinned = rng.binomial(cube.counts.astype(np.int64), keep_prob).astype(np.uint32)
    return PhotonCube(thinned, cube.bin_width_ps, cube.refractive_index)


def check_finite(name: str, arr: np.ndarray, iteration: int | None = None):
    if not np.all(np.isfinite(arr)):
        where = f" at iteration {iteration}" if iteration is not None else ""
        raise SolverError(f"non-finite values in {name}{where}")
