"""Coordinate-descent MAP restoration.

The joint negative log posterior of (depth t, reflectivity r, auxiliary w)
given the preliminary images is, up to additive constants,

    F = sum_obs [ -A*log r + alpha*A*t + A/(2*sigma2)*(t - t_pre)^2
                  + area*r*exp(-alpha*t) ]                    (likelihood)
        + eta * TV(t)                                         (depth prior)
        + (4z+1)*sum log w - (4z-1)*sum log r
        + z * sum_edges r/w                                   (refl prior)

with A = area * refl_pre per observed pixel.  Each outer iteration minimises
F exactly along one coordinate block: the depth by ADMM, then reflectivity
and the auxiliary image in closed form (their conditionals are gamma /
inverse gamma, so the minimisers are the modes).  F is therefore
non-increasing and the loop stops on a relative-cost test or an iteration
cap.
"""

from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, DepthSolver
from .errors import SolverError
from .model import ImpulseModel, SceneImages, check_finite
from .prelim import PrelimEstimates, initial_images
from .priors import (GammaMrfPrior, TvPrior, edge_ratio_sum,
                     local_inv_aux_mean, neighbor_sum_at_aux, total_variation)


@dataclass(frozen=True)
class CdaConfig:
    eta: float
    zeta: float
    delta: float = 1e-2       # relative-cost stopping threshold
    max_outer: int = 500
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self):
        TvPrior(self.eta)
        GammaMrfPrior(self.zeta)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")


@dataclass
class CdaTrace:
    costs: list
    iterations: int
    reason: str               # "relative_cost" | "fixed_point" | "max_outer"
    admm_converged: bool      # True iff every inner depth solve converged


def neg_log_posterior(t, r, w, prelim: PrelimEstimates, irf: ImpulseModel,
                      eta: float, zeta: float) -> float:
    """F(t, r, w) up to the constants dropped throughout."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(t < 0) or np.any(r <= 0) or np.any(w <= 0):
        raise ValueError("domain violation: need t >= 0, r > 0, w > 0")
    mask = prelim.mask
    a_obs = irf.area * prelim.refl[mask]
    t_obs = t[mask]
    lik = np.sum(
        -a_obs * np.log(r[mask])
        + irf.alpha * a_obs * t_obs
        + a_obs / (2.0 * irf.sigma2) * (t_obs - prelim.depth[mask]) ** 2
        + irf.area * r[mask] * np.exp(-irf.alpha * t_obs)
    )
    prior_t = eta * total_variation(t)
    prior_rw = ((4.0 * zeta + 1.0) * np.sum(np.log(w))
                - (4.0 * zeta - 1.0) * np.sum(np.log(r))
                + zeta * edge_ratio_sum(r, w))
    return float(lik + prior_t + prior_rw)


def refl_rate(prelim: PrelimEstimates, t, w, irf: ImpulseModel,
              zeta: float) -> np.ndarray:
    """Gamma rate of the reflectivity conditional:
    4*z*mean(1/w around pixel) + area*mask*exp(-alpha*t)."""
    t = np.asarray(t, dtype=float)
    k = prelim.mask.astype(float)
    return (4.0 * zeta * local_inv_aux_mean(np.asarray(w), prelim.shape)
            + irf.area * k * np.exp(-irf.alpha * t))


def refl_update(prelim: PrelimEstimates, t, w, irf: ImpulseModel,
                zeta: float) -> np.ndarray:
    """Exact minimiser along the reflectivity coordinate (gamma mode):

        r = (4*z + area*mask*refl_pre - 1) / rate
    """
    rate = refl_rate(prelim, t, w, irf, zeta)
    shape = 4.0 * zeta + irf.area * prelim.mask * prelim.refl
    return (shape - 1.0) / rate


def aux_update(r, zeta: float, aux_shape=None) -> np.ndarray:
    """Exact minimiser along the auxiliary coordinate (inverse-gamma mode):

        w = z * (sum of neighbouring r) / (4*z + 1)

    At sites with the full four neighbours this is 4*z*mean(r)/(4*z+1); at
    lattice borders the neighbour sum keeps the update the exact minimiser
    of the joint density.
    """
    acc, _ = neighbor_sum_at_aux(np.asarray(r), aux_shape)
    return zeta * acc / (4.0 * zeta + 1.0)


def run_cda(prelim: PrelimEstimates, irf: ImpulseModel, cfg: CdaConfig,
            init: SceneImages | None = None):
    """Alternate depth / reflectivity / auxiliary updates until the joint
    cost stabilises.

    init defaults to images derived from prelim itself; the standard
    pipeline passes the matched-filter initialisation explicitly.
    Returns (SceneImages, CdaTrace).
    """
    images = initial_images(prelim) if init is None else init.copy()
    t = images.depth
    r = images.refl
    w = images.aux if images.aux is not None else aux_update(r, cfg.zeta)

    solver = DepthSolver(prelim, irf, TvPrior(cfg.eta), cfg.admm)
    costs = [neg_log_posterior(t, r, w, prelim, irf, cfg.eta, cfg.zeta)]
    reason = "max_outer"
    admm_ok = True
    iterations = 0
    for n in range(1, cfg.max_outer + 1):
        iterations = n
        t_prev, r_prev, w_prev = t, r, w
        sol = solver.solve(r, t)
        admm_ok = admm_ok and sol.converged
        # an inner solve stopped at its iteration cap is inexact; never let
        # it undo progress along the depth coordinate
        if solver.cost(sol.depth, r) <= solver.cost(t, r):
            t = sol.depth
        r = refl_update(prelim, t, w, irf, cfg.zeta)
        w = aux_update(r, cfg.zeta)
        cost = neg_log_posterior(t, r, w, prelim, irf, cfg.eta, cfg.zeta)
        if not np.isfinite(cost):
            raise SolverError(f"non-finite cost at outer iteration {n}")
        check_finite("depth", t, n)
        costs.append(cost)
        if abs(cost - costs[-2]) <= cfg.delta * costs[-2]:
            reason = "relative_cost"
            break
        if (np.array_equal(t, t_prev) and np.array_equal(r, r_prev)
                and np.array_equal(w, w_prev)):
            reason = "fixed_point"
            break
    trace = CdaTrace(costs=costs, iterations=iterations, reason=reason,
                     admm_converged=admm_ok)
    return SceneImages(depth=t, refl=r, aux=w), trace
