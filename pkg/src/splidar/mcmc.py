"""Adaptive Metropolis-within-Gibbs restoration.

One sweep updates the depth image by per-pixel Gaussian random-walk
Metropolis moves (the two checkerboard colour classes are conditionally
independent under the 4-neighbour TV prior, so each class is updated as a
block), then draws the reflectivity and auxiliary images from their exact
gamma / inverse-gamma conditionals.

During burn-in two adaptations run and are then frozen so the useful part
of the chain is Markov:

* per-pixel proposal scales follow a Robbins-Monro recursion targeting a
  0.5 acceptance rate;
* the prior coupling strengths are tuned by projected stochastic-gradient
  steps whose gradients compare prior statistics of the current sample with
  those of auxiliary samples drawn from prior-targeting kernels.

Estimates are the arithmetic means of the post-burn-in samples.
"""

from dataclasses import dataclass, field

import numpy as np

from .cda import neg_log_posterior, refl_rate
from .errors import SolverError
from .model import ImpulseModel, SceneImages
from .prelim import PrelimEstimates, initial_images
from .priors import (coupling_potential, local_inv_aux_mean,
                     neighbor_sum_at_aux, total_variation)


@dataclass(frozen=True)
class McmcConfig:
    n_burn: int = 1000
    n_iter: int = 3000
    eta0: float = 1.0
    zeta0: float = 1.0
    eta_max: float = 20.0
    zeta_max: float = 20.0
    # floor keeps the gamma/inverse-gamma conditionals well defined when the
    # projected gradient step would otherwise hit zero
    zeta_min: float = 0.26
    target_accept: float = 0.5
    step0: float = 1.0
    step_decay: float = 0.6   # Robbins-Monro exponent for proposal scaling
    grad_decay: float = 0.75  # step-size exponent of the coupling updates
    seed: int = 0
    keep_samples: bool = False

    def __post_init__(self):
        if not 0 < self.n_burn < self.n_iter:
            raise ValueError("need 0 < n_burn < n_iter")
        if not (self.eta_max > 0 and self.zeta_max > self.zeta_min > 0):
            raise ValueError("invalid coupling bounds")
        if not 0 <= self.eta0 <= self.eta_max:
            raise ValueError("eta0 out of bounds")
        if not self.zeta_min <= self.zeta0 <= self.zeta_max:
            raise ValueError("zeta0 out of bounds")
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")


class Checkerboard:
    """Flat pixel indices of the two parity classes with 4-neighbour tables."""

    def __init__(self, shape):
        n_rows, n_cols = shape
        self.shape = shape
        ii, jj = np.meshgrid(np.arange(n_rows), np.arange(n_cols),
                             indexing="ij")
        flat = (ii * n_cols + jj).ravel()
        parity = ((ii + jj) % 2).ravel()
        self.color_idx = [flat[parity == c] for c in (0, 1)]
        self.neighbors = []
        self.valid = []
        for idx in self.color_idx:
            ci, cj = idx // n_cols, idx % n_cols
            nb = np.empty((4, idx.size), dtype=np.int64)
            ok = np.empty((4, idx.size), dtype=bool)
            for k, (di, dj) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
                ni, nj = ci + di, cj + dj
                ok[k] = (ni >= 0) & (ni < n_rows) & (nj >= 0) & (nj < n_cols)
                nb[k] = np.where(ok[k], ni * n_cols + nj, 0)
            self.neighbors.append(nb)
            self.valid.append(ok)


@dataclass
class ChainState:
    """Mutable sampler state; all random draws come from state.rng."""

    t: np.ndarray
    r: np.ndarray
    w: np.ndarray
    eta: float
    zeta: float
    step: np.ndarray           # per-pixel proposal standard deviations
    rng: np.random.Generator
    board: Checkerboard
    last_accept: np.ndarray    # 0/1 per pixel, most recent sweep
    accept_sum: np.ndarray = None  # post-burn-in acceptance counter
    sum_t: np.ndarray = None
    sum_r: np.ndarray = None
    sum_w: np.ndarray = None
    n_samples: int = 0

    @classmethod
    def start(cls, images: SceneImages, cfg: McmcConfig) -> "ChainState":
        shape = images.depth.shape
        return cls(
            t=images.depth.copy(), r=images.refl.copy(),
            w=images.aux.copy(), eta=cfg.eta0, zeta=cfg.zeta0,
            step=np.full(shape, cfg.step0, dtype=float),
            rng=np.random.default_rng(cfg.seed),
            board=Checkerboard(shape),
            last_accept=np.zeros(shape, dtype=float),
            accept_sum=np.zeros(shape, dtype=float),
            sum_t=np.zeros(shape, dtype=float),
            sum_r=np.zeros(shape, dtype=float),
            sum_w=np.zeros_like(images.aux, dtype=float),
        )


def _checkerboard_mh(t_flat, step_flat, board, rng, eta, half_q=None,
                     m0=None, ecoef=None, alpha=0.0, nonneg=True):
    """One full MH sweep over both colours; mutates t_flat, returns
    acceptance indicators aligned with the pixel grid (flat)."""
    accepted = np.zeros_like(t_flat)
    for color in (0, 1):
        idx = board.color_idx[color]
        nb = board.neighbors[color]
        ok = board.valid[color]
        cur = t_flat[idx]
        prop = cur + step_flat[idx] * rng.standard_normal(idx.size)
        delta = np.zeros(idx.size)
        if half_q is not None:
            dq = half_q[idx] * ((prop - m0[idx]) ** 2 - (cur - m0[idx]) ** 2)
            delta += dq
            if alpha != 0.0:
                delta += ecoef[idx] * (np.exp(-alpha * prop)
                                       - np.exp(-alpha * cur))
        if eta > 0.0:
            nbv = t_flat[nb]
            dtv = np.where(ok, np.abs(prop[None, :] - nbv)
                           - np.abs(cur[None, :] - nbv), 0.0).sum(axis=0)
            delta += eta * dtv
        accept = np.log(rng.random(idx.size)) < -delta
        if nonneg:
            accept &= prop >= 0.0
        t_flat[idx[accept]] = prop[accept]
        accepted[idx] = accept
    return accepted


def mh_depth_sweep(state: ChainState, prelim: PrelimEstimates,
                   irf: ImpulseModel, eta: float) -> None:
    """Metropolis sweep of the depth conditional (likelihood + TV prior +
    nonnegativity); proposals below zero are always rejected."""
    mask = prelim.mask
    half_q = np.where(mask, irf.area * prelim.refl, 0.0) / (2.0 * irf.sigma2)
    m0 = np.where(mask, prelim.depth - irf.alpha * irf.sigma2, 0.0)
    ecoef = np.where(mask, irf.area * state.r, 0.0)
    t_flat = state.t.ravel()
    acc = _checkerboard_mh(t_flat, state.step.ravel(), state.board, state.rng,
                           eta, half_q.ravel(), m0.ravel(), ecoef.ravel(),
                           irf.alpha, nonneg=True)
    state.last_accept = acc.reshape(state.t.shape)


def gibbs_reflectivity(state: ChainState, prelim: PrelimEstimates,
                       irf: ImpulseModel, zeta: float) -> None:
    """Exact gamma conditional draw of the reflectivity image."""
    shape = 4.0 * zeta + irf.area * prelim.mask * prelim.refl
    rate = refl_rate(prelim, state.t, state.w, irf, zeta)
    state.r = state.rng.gamma(shape, 1.0 / rate)


def gibbs_aux(state: ChainState, zeta: float) -> None:
    """Exact inverse-gamma conditional draw of the auxiliary image."""
    acc, _ = neighbor_sum_at_aux(state.r, state.w.shape)
    state.w = inverse_gamma(state.rng, 4.0 * zeta, zeta * acc)


def inverse_gamma(rng: np.random.Generator, shape, scale) -> np.ndarray:
    """Draw IG(shape, scale): the reciprocal of a Gamma(shape, 1/scale)."""
    return 1.0 / rng.gamma(shape, 1.0 / np.asarray(scale, dtype=float))


def prior_perturbations(state: ChainState, zeta: float, eta: float):
    """Auxiliary samples from kernels targeting the two priors alone:
    one TV-only MH sweep for depth, one conjugate pair for (refl, aux)."""
    t_prime = state.t.copy()
    _checkerboard_mh(t_prime.ravel(), state.step.ravel(), state.board,
                     state.rng, eta, nonneg=False)
    inv_mean = local_inv_aux_mean(state.w, state.r.shape)
    r_prime = state.rng.gamma(4.0 * zeta, 1.0 / (4.0 * zeta * inv_mean))
    acc, _ = neighbor_sum_at_aux(r_prime, state.w.shape)
    w_prime = inverse_gamma(state.rng, 4.0 * zeta, zeta * acc)
    return t_prime, r_prime, w_prime


def adapt_hyperparams(state: ChainState, cfg: McmcConfig, n: int,
                      t_prime, r_prime, w_prime) -> None:
    """Projected stochastic-gradient updates of the coupling strengths with
    step size n^(-grad_decay); values are clamped to their admissible boxes."""
    stepsize = float(n) ** (-cfg.grad_decay)
    grad_eta = total_variation(state.t) - total_variation(t_prime)
    state.eta = float(np.clip(state.eta + stepsize * grad_eta, 0.0, cfg.eta_max))
    grad_zeta = (coupling_potential(state.r, state.w)
                 - coupling_potential(r_prime, w_prime))
    state.zeta = float(np.clip(state.zeta + stepsize * grad_zeta,
                               cfg.zeta_min, cfg.zeta_max))


@dataclass
class McmcResult:
    depth: np.ndarray          # posterior-mean depth
    refl: np.ndarray           # posterior-mean reflectivity
    aux: np.ndarray
    eta: float                 # frozen coupling estimates
    zeta: float
    accept_rate: np.ndarray    # post-burn-in acceptance map
    costs: np.ndarray
    eta_trace: np.ndarray
    zeta_trace: np.ndarray
    n_samples: int
    samples_t: list = field(default_factory=list)
    samples_r: list = field(default_factory=list)


def run_mcmc(prelim: PrelimEstimates, irf: ImpulseModel, cfg: McmcConfig,
             init: SceneImages | None = None,
             dump_path=None) -> McmcResult:
    """Run the full sampler and average the post-burn-in samples.

    Deterministic for a fixed (config, seed); the optional dump file records
    one "iteration,eta,zeta,cost,accept_rate" line per sweep.
    """
    images = initial_images(prelim) if init is None else init.copy()
    if images.aux is None:
        raise ValueError("initial images must include the auxiliary lattice")
    state = ChainState.start(images, cfg)

    costs = np.empty(cfg.n_iter)
    eta_trace = np.empty(cfg.n_iter)
    zeta_trace = np.empty(cfg.n_iter)
    samples_t, samples_r = [], []
    dump = open(dump_path, "w", encoding="utf-8") if dump_path else None
    if dump:
        dump.write("iteration,eta,zeta,cost,accept_rate\n")
    try:
        for n in range(1, cfg.n_iter + 1):
            mh_depth_sweep(state, prelim, irf, state.eta)
            gibbs_reflectivity(state, prelim, irf, state.zeta)
            gibbs_aux(state, state.zeta)
            if n < cfg.n_burn:
                primes = prior_perturbations(state, state.zeta, state.eta)
                adapt_hyperparams(state, cfg, n, *primes)
                decay = float(n) ** (-cfg.step_decay)
                state.step *= np.exp(decay * (state.last_accept
                                              - cfg.target_accept))
            if n >= cfg.n_burn:
                state.sum_t += state.t
                state.sum_r += state.r
                state.sum_w += state.w
                state.accept_sum += state.last_accept
                state.n_samples += 1
                if cfg.keep_samples:
                    samples_t.append(state.t.copy())
                    samples_r.append(state.r.copy())
            cost = neg_log_posterior(state.t, state.r, state.w, prelim, irf,
                                     state.eta, state.zeta)
            if not np.isfinite(cost):
                raise SolverError(f"non-finite posterior cost at iteration {n}")
            costs[n - 1] = cost
            eta_trace[n - 1] = state.eta
            zeta_trace[n - 1] = state.zeta
            if dump:
                dump.write(f"{n},{state.eta!r},{state.zeta!r},{cost!r},"
                           f"{float(state.last_accept.mean())!r}\n")
    finally:
        if dump:
            dump.close()

    n_used = state.n_samples
    return McmcResult(
        depth=state.sum_t / n_used,
        refl=state.sum_r / n_used,
        aux=state.sum_w / n_used,
        eta=state.eta,
        zeta=state.zeta,
        accept_rate=state.accept_sum / n_used,
        costs=costs,
        eta_trace=eta_trace,
        zeta_trace=zeta_trace,
        n_samples=n_used,
        samples_t=samples_t,
        samples_r=samples_r,
    )
