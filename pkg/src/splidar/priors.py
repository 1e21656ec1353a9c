"""Markov random field priors for the depth and reflectivity images.

Depth smoothness is expressed through anisotropic total variation on the
4-neighbour pixel graph, every unordered neighbour pair counted once.

Reflectivity smoothness uses a bipartite gamma field: the reflectivity
pixels are coupled only through strictly positive auxiliary variables that
live on an interleaved lattice, by default of shape (Nr+1) x (Nc+1) so that
every pixel sees exactly four auxiliary sites.  Each auxiliary site (i, j)
is linked to the (up to four) in-bounds pixels (i-1..i, j-1..j); border
sites simply have fewer links.  The joint density is

    p(refl, aux) ∝ prod_aux aux^-(4z+1) * prod_pix refl^(4z-1)
                   * prod_edges exp(-z * refl / aux)

whose conditionals are conjugate: aux | refl is inverse-gamma and
refl | aux is gamma.  The helper averages below feed those conditionals and
the matching closed-form coordinate updates.
"""

from dataclasses import dataclass

import numpy as np

ETA_MAX = 20.0
ZETA_MAX = 20.0
ZETA_MIN = 0.25  # closed-form reflectivity update needs zeta > 1/4


@dataclass(frozen=True)
class TvPrior:
    """Total-variation depth prior with coupling strength eta."""

    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= ETA_MAX:
            raise ValueError(f"eta must lie in [0, {ETA_MAX}]")


@dataclass(frozen=True)
class GammaMrfPrior:
    """Bipartite gamma reflectivity prior with coupling strength zeta."""

    zeta: float

    def __post_init__(self):
        if not ZETA_MIN < self.zeta <= ZETA_MAX:
            raise ValueError(f"zeta must lie in ({ZETA_MIN}, {ZETA_MAX}]")


def total_variation(img: np.ndarray) -> float:
    """Sum of absolute 4-neighbour differences, each pair counted once."""
    img = np.asarray(img, dtype=float)
    return float(np.abs(np.diff(img, axis=0)).sum()
                 + np.abs(np.diff(img, axis=1)).sum())


def default_aux_shape(image_shape) -> tuple[int, int]:
    return (image_shape[0] + 1, image_shape[1] + 1)


def _edge_slices(aux_shape, image_shape):
    """Slice pairs (aux_view, image_view) covering the bipartite edge set.

    Works for auxiliary lattices one larger, equal to, or one smaller than
    the image: base alignment shifts so that a smaller lattice addresses
    interior sites only.
    """
    d0, d1 = aux_shape
    p0, p1 = image_shape
    b0 = 1 if d0 < p0 else 0
    b1 = 1 if d1 < p1 else 0
    for da in (0, 1):
        for dc in (0, 1):
            off0 = b0 - 1 + da
            off1 = b1 - 1 + dc
            i0, i1 = max(0, -off0), min(d0, p0 - off0)
            j0, j1 = max(0, -off1), min(d1, p1 - off1)
            if i1 <= i0 or j1 <= j0:
                continue
            yield ((slice(i0, i1), slice(j0, j1)),
                   (slice(i0 + off0, i1 + off0), slice(j0 + off1, j1 + off1)))


def neighbor_sum_at_aux(img: np.ndarray, aux_shape=None):
    """Per auxiliary site: (sum, count) of its in-bounds image neighbours."""
    img = np.asarray(img, dtype=float)
    if aux_shape is None:
        aux_shape = default_aux_shape(img.shape)
    acc = np.zeros(aux_shape, dtype=float)
    cnt = np.zeros(aux_shape, dtype=np.int64)
    for aux_sl, img_sl in _edge_slices(aux_shape, img.shape):
        acc[aux_sl] += img[img_sl]
        cnt[aux_sl] += 1
    return acc, cnt


def local_refl_mean(refl: np.ndarray, aux_shape=None) -> np.ndarray:
    """Mean reflectivity of the in-bounds pixels around each auxiliary site."""
    acc, cnt = neighbor_sum_at_aux(refl, aux_shape)
    if np.any(cnt == 0):
        raise ValueError("auxiliary lattice has sites with no image neighbours")
    return acc / cnt


def inv_aux_sum_at_pixel(aux: np.ndarray, image_shape=None):
    """Per pixel: (sum, count) of reciprocals of its in-bounds aux neighbours."""
    aux = np.asarray(aux, dtype=float)
    if image_shape is None:
        image_shape = (aux.shape[0] - 1, aux.shape[1] - 1)
    inv = 1.0 / aux
    acc = np.zeros(image_shape, dtype=float)
    cnt = np.zeros(image_shape, dtype=np.int64)
    for aux_sl, img_sl in _edge_slices(aux.shape, image_shape):
        acc[img_sl] += inv[aux_sl]
        cnt[img_sl] += 1
    return acc, cnt


def local_inv_aux_mean(aux: np.ndarray, image_shape=None) -> np.ndarray:
    """Mean reciprocal of the in-bounds aux sites around each pixel."""
    acc, cnt = inv_aux_sum_at_pixel(aux, image_shape)
    if np.any(cnt == 0):
        raise ValueError("image has pixels with no auxiliary neighbours")
    return acc / cnt


def edge_ratio_sum(refl: np.ndarray, aux: np.ndarray) -> float:
    """Sum of refl/aux over every edge of the bipartite lattice."""
    acc, _ = neighbor_sum_at_aux(refl, np.asarray(aux).shape)
    return float(np.sum(acc / aux))


def coupling_potential(refl: np.ndarray, aux: np.ndarray) -> float:
    """Sensitivity of the log prior density to the coupling strength:

        -4 * sum(log aux) + 4 * sum(log refl) - sum_edges refl / aux
    """
    refl = np.asarray(refl, dtype=float)
    aux = np.asarray(aux, dtype=float)
    return float(-4.0 * np.sum(np.log(aux)) + 4.0 * np.sum(np.log(refl))
                 - edge_ratio_sum(refl, aux))
