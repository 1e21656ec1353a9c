"""Depth refinement by a three-way split ADMM.

Given preliminary estimates, a reflectivity image and the pulse model, the
depth image minimises the strictly convex cost

    C(t) = sum_{observed pixels} [ q/2 * (t - m0)^2 + e * exp(-alpha * t) ]
           + eta * TV(t) + indicator(t >= 0)

with per-pixel weights q = area * refl_prelim / sigma2, shifted targets
m0 = depth_prelim - alpha * sigma2 (the completed square of the attenuated
likelihood) and e = area * refl.  The cost is split into a per-pixel data
term (applied through the observed-pixel selector), an l1 term on the image
differences, and the nonnegativity indicator on the identity.  Each
iteration solves the shared normal system

    M x = (I + diag(mask) + D^T D) x = rhs

once (cached sparse factorisation) and applies the three proximal maps:
a safeguarded per-pixel Newton solve for the data term, soft thresholding
for the differences, projection for nonnegativity.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .model import ImpulseModel
from .prelim import PrelimEstimates
from .priors import TvPrior, total_variation


@dataclass(frozen=True)
class AdmmConfig:
    mu: float = 1.0            # augmented-Lagrangian weight
    max_iters: int = 500
    primal_tol: float = 1e-6   # l-inf bound on the split residuals
    newton_iters: int = 20     # inner iterations of the data prox

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.max_iters < 1 or self.newton_iters < 1:
            raise ValueError("iteration limits must be positive")
        if not self.primal_tol > 0:
            raise ValueError("primal_tol must be positive")


@dataclass
class DepthSolution:
    """Result of one depth solve; when converged is False the residual
    carries the last primal residual for diagnosis."""

    depth: np.ndarray
    iterations: int
    residual: float
    converged: bool
    costs: list = field(default_factory=list)


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    """Proximal map of threshold * |.|_1 : shrink toward zero."""
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def project_nonneg(v: np.ndarray) -> np.ndarray:
    """Proximal map of the nonnegative-orthant indicator."""
    return np.maximum(v, 0.0)


def diff_forward(img: np.ndarray) -> np.ndarray:
    """Stacked horizontal then vertical neighbour differences."""
    return np.concatenate([np.diff(img, axis=1).ravel(),
                           np.diff(img, axis=0).ravel()])


def diff_adjoint(vec: np.ndarray, shape) -> np.ndarray:
    n_rows, n_cols = shape
    nh = n_rows * (n_cols - 1)
    out = np.zeros(shape)
    dh = vec[:nh].reshape(n_rows, n_cols - 1)
    dv = vec[nh:].reshape(n_rows - 1, n_cols)
    out[:, 1:] += dh
    out[:, :-1] -= dh
    out[1:, :] += dv
    out[:-1, :] -= dv
    return out


def _difference_gram(shape) -> sp.csc_matrix:
    """D^T D for the stacked difference operator (graph Laplacian of the
    4-neighbour pixel grid)."""
    n_rows, n_cols = shape
    n = n_rows * n_cols
    idx = np.arange(n).reshape(shape)
    rows, cols = [], []
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        rows.append(a.ravel())
        cols.append(b.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = -np.ones(rows.size)
    adj = sp.coo_matrix((data, (rows, cols)), shape=(n, n))
    adj = adj + adj.T
    deg = -np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(deg) + adj).tocsc()


def data_term_value(m, q, m0, ecoef, alpha):
    """Per-pixel data term q/2*(m-m0)^2 + ecoef*exp(-alpha*m)."""
    return 0.5 * q * (m - m0) ** 2 + ecoef * np.exp(-alpha * m)


def data_term_grad(m, q, m0, ecoef, alpha):
    return q * (m - m0) - alpha * ecoef * np.exp(-alpha * m)


def prox_data(v, q, m0, ecoef, alpha, mu, max_newton: int = 20,
              grad_tol: float = 1e-10):
    """argmin_m mu/2*(m-v)^2 + q/2*(m-m0)^2 + ecoef*exp(-alpha*m).

    The objective gradient is increasing and convex in m, so Newton from the
    quadratic-only solution converges after at most one overshoot; a bracket
    collected along the way guards against pathological steps.
    """
    v = np.asarray(v, dtype=float)
    m = (mu * v + q * m0) / (mu + q)
    if alpha == 0.0:
        return m
    lo = np.full_like(m, -np.inf)
    hi = np.full_like(m, np.inf)
    for _ in range(max_newton):
        ex = ecoef * np.exp(-alpha * m)
        g = mu * (m - v) + q * (m - m0) - alpha * ex
        if np.all(np.abs(g) < grad_tol):
            break
        lo = np.where(g < 0, np.maximum(lo, m), lo)
        hi = np.where(g > 0, np.minimum(hi, m), hi)
        step = g / (mu + q + alpha * alpha * ex)
        m_new = m - step
        bracket = np.isfinite(lo) & np.isfinite(hi)
        outside = (m_new <= lo) | (m_new >= hi)
        m = np.where(bracket & outside, 0.5 * (lo + hi), m_new)
    else:
        # bisection cleanup for any pixel Newton left unconverged
        for _ in range(200):
            ex = ecoef * np.exp(-alpha * m)
            g = mu * (m - v) + q * (m - m0) - alpha * ex
            if np.all(np.abs(g) < grad_tol):
                break
            lo = np.where(g < 0, np.maximum(lo, m), lo)
            hi = np.where(g > 0, np.minimum(hi, m), hi)
            bracket = np.isfinite(lo) & np.isfinite(hi)
            mid = np.where(bracket, 0.5 * (lo + hi),
                           m - g / (mu + q + alpha * alpha * ex))
            if np.allclose(mid, m, rtol=0.0, atol=0.0):
                break
            m = mid
    return m


def depth_cost(t, prelim: PrelimEstimates, refl, irf: ImpulseModel,
               eta: float) -> float:
    """C(t); +inf outside the nonnegative orthant."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        return np.inf
    mask = prelim.mask
    q = irf.area * prelim.refl[mask] / irf.sigma2
    m0 = prelim.depth[mask] - irf.alpha * irf.sigma2
    ecoef = irf.area * np.asarray(refl)[mask]
    data = np.sum(data_term_value(t[mask], q, m0, ecoef, irf.alpha))
    return float(data + eta * total_variation(t))


class DepthSolver:
    """Holds the per-mask factorisation so repeated solves (over coordinate
    iterations) reuse it.  One instance serves one prelim/prior pair."""

    def __init__(self, prelim: PrelimEstimates, irf: ImpulseModel,
                 prior: TvPrior, cfg: AdmmConfig | None = None):
        self.prelim = prelim
        self.irf = irf
        self.prior = prior
        self.cfg = cfg or AdmmConfig()
        if np.any(prelim.refl[prelim.mask] <= 0):
            raise ValueError("preliminary reflectivity must be positive on "
                             "observed pixels")
        self.shape = prelim.shape
        n = prelim.mask.size
        self._mask_flat = prelim.mask.ravel()
        self._obs_idx = np.flatnonzero(self._mask_flat)
        self._q = irf.area * prelim.refl.ravel()[self._obs_idx] / irf.sigma2
        self._m0 = prelim.depth.ravel()[self._obs_idx] - irf.alpha * irf.sigma2
        gram = _difference_gram(self.shape)
        m_mat = sp.diags(1.0 + self._mask_flat.astype(float)) + gram
        self._m_mat = m_mat.tocsc()
        try:
            self._factor = spla.splu(self._m_mat)
        except RuntimeError as exc:
            raise SolverError(f"normal-matrix factorisation failed: {exc}") from exc

    def apply_normal_inverse(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M x = rhs to relative residual below 1e-10."""
        flat = np.asarray(rhs, dtype=float).ravel()
        x = self._factor.solve(flat)
        norm = np.linalg.norm(flat)
        if norm > 0:
            resid = np.linalg.norm(self._m_mat @ x - flat) / norm
            if not resid < 1e-10:
                raise SolverError(f"normal solve residual {resid:.3e} too large")
        if not np.all(np.isfinite(x)):
            raise SolverError("normal solve produced non-finite values")
        return x.reshape(np.shape(rhs))

    def cost(self, t, refl) -> float:
        return depth_cost(t, self.prelim, refl, self.irf, self.prior.eta)

    def solve(self, refl: np.ndarray, t0: np.ndarray) -> DepthSolution:
        refl = np.asarray(refl, dtype=float)
        if np.any(refl <= 0):
            raise ValueError("reflectivity must be strictly positive")
        t0 = np.asarray(t0, dtype=float)
        if not np.all(np.isfinite(t0)):
            raise ValueError("initial depth must be finite")
        cfg = self.cfg
        eta = self.prior.eta
        ecoef = self.irf.area * refl.ravel()[self._obs_idx]
        alpha = self.irf.alpha
        idx = self._obs_idx

        t = t0.ravel().astype(float).copy()
        u1 = t[idx].copy()
        u2 = diff_forward(t.reshape(self.shape))
        u3 = t.copy()
        d1 = np.zeros_like(u1)
        d2 = np.zeros_like(u2)
        d3 = np.zeros_like(u3)

        costs = []
        residual = np.inf
        iterations = 0
        converged = False
        for iterations in range(1, cfg.max_iters + 1):
            rhs = (u3 + d3).copy()
            rhs[idx] += u1 + d1
            rhs += diff_adjoint(u2 + d2, self.shape).ravel()
            t = self.apply_normal_inverse(rhs)
            timg = t.reshape(self.shape)

            h1 = t[idx]
            h2 = diff_forward(timg)
            u1_prev, u2_prev, u3_prev = u1, u2, u3
            u1 = prox_data(h1 - d1, self._q, self._m0, ecoef, alpha, cfg.mu,
                           cfg.newton_iters)
            u2 = soft_threshold(h2 - d2, eta / cfg.mu)
            u3 = project_nonneg(t - d3)

            r1 = h1 - u1
            r2 = h2 - u2
            r3 = t - u3
            d1 -= r1
            d2 -= r2
            d3 -= r3
            primal = max(
                float(np.max(np.abs(r1))) if r1.size else 0.0,
                float(np.max(np.abs(r2))) if r2.size else 0.0,
                float(np.max(np.abs(r3))),
            )
            # the primal residual alone can vanish transiently while the
            # duals still move; require the splits to have settled as well
            dual = cfg.mu * max(
                float(np.max(np.abs(u1 - u1_prev))) if u1.size else 0.0,
                float(np.max(np.abs(u2 - u2_prev))) if u2.size else 0.0,
                float(np.max(np.abs(u3 - u3_prev))),
            )
            residual = max(primal, dual)
            costs.append(self.cost(np.maximum(timg, 0.0), refl))
            if residual < cfg.primal_tol:
                converged = True
                break

        depth = np.maximum(t.reshape(self.shape), 0.0)
        return DepthSolution(depth=depth, iterations=iterations,
                             residual=residual, converged=converged,
                             costs=costs)


def solve_depth(prelim: PrelimEstimates, refl: np.ndarray, irf: ImpulseModel,
                prior: TvPrior, cfg: AdmmConfig | None = None,
                t0: np.ndarray | None = None) -> DepthSolution:
    """One-shot depth solve (builds and discards the factorisation)."""
    solver = DepthSolver(prelim, irf, prior, cfg)
    if t0 is None:
        finite = prelim.depth[np.isfinite(prelim.depth)]
        fill = float(np.median(finite)) if finite.size else 0.0
        t0 = np.where(np.isfinite(prelim.depth), prelim.depth, fill)
        t0 = np.maximum(t0, 0.0)
    return solver.solve(refl, t0)
