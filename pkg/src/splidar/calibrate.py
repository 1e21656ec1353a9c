"""Calibration of the Gaussian impulse-response model from measured samples.

The instrument response is measured as (bin, response) pairs; a Gaussian
amplitude * exp(-(x - center)^2 / (2*sigma2)) is fitted by linear least
squares in the log domain (the log of a Gaussian is a parabola) and then
polished by a nonlinear least-squares pass in the linear domain, which
rebalances the weighting of small samples introduced by the log transform.
"""

import numpy as np
from scipy.optimize import curve_fit

from .errors import FitError
from .model import ImpulseModel, pulse_area


def _gaussian(x, amplitude, center, sigma2):
    return amplitude * np.exp(-(x - center) ** 2 / (2.0 * sigma2))


def fit_impulse(samples, n_bins: int) -> ImpulseModel:
    """Fit (amplitude, sigma2) of the system pulse from response samples.

    Parameters
    ----------
    samples : array-like of (bin, response) pairs, responses strictly positive.
    n_bins :  acquisition window length used to compute the pulse area.

    Returns an ImpulseModel with alpha = 0; the medium attenuation is a
    property of the deployment, not of the instrument.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise FitError("need at least 3 (bin, response) samples")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(y <= 0) or not np.all(np.isfinite(pts)):
        raise FitError("responses must be finite and strictly positive")
    if np.unique(x).size < 3:
        raise FitError("degenerate samples: need at least 3 distinct bins")

    # log-domain parabola: log y = a x^2 + b x + c with a = -1/(2 sigma2)
    a, b, c = np.polyfit(x, np.log(y), 2)
    span = float(x.max() - x.min())
    if a >= 0 or -a * span * span < 1e-9:
        raise FitError("samples show no Gaussian curvature")
    sigma2 = -1.0 / (2.0 * a)
    center = -b / (2.0 * a)
    amplitude = float(np.exp(c - b * b / (4.0 * a)))

    # nonlinear polish in the linear domain
    try:
        popt, _ = curve_fit(_gaussian, x, y, p0=[amplitude, center, sigma2],
                            maxfev=2000)
    except RuntimeError as exc:
        raise FitError(f"nonlinear refinement failed: {exc}") from exc
    amplitude, center, sigma2 = (float(v) for v in popt)
    if amplitude <= 0 or sigma2 <= 0:
        raise FitError("refined fit left the valid parameter domain")

    area = pulse_area(amplitude, sigma2, n_bins)
    return ImpulseModel(amplitude=amplitude, sigma2=sigma2, alpha=0.0, area=area)
