"""Restoration quality criteria and report emission.

SRE    = 10*log10(|x|^2 / |x - xhat|^2)   (dB; +inf for a perfect match)
N-Bias = |mean(x - xhat)| / |mean(x)|
SBR    = refl * amplitude / background     (peak signal over background rate)
SNR    = refl * amplitude / sqrt(refl * amplitude + background)
AL     = attenuation * distance            (dimensionless)

Reports are written as comma-separated text with a fixed header, one row per
reflectivity level (grouped by the distinct values of the reference
reflectivity image) plus a whole-image row.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import PhotonCube


def sre(reference, estimate, mask=None) -> float:
    """Signal-to-reconstruction-error ratio in dB; inf when estimate == ref."""
    x = np.asarray(reference, dtype=float)
    xh = np.asarray(estimate, dtype=float)
    if mask is not None:
        x = x[np.asarray(mask, dtype=bool)]
        xh = xh[np.asarray(mask, dtype=bool)]
    ref_energy = float(np.sum(x * x))
    if ref_energy == 0.0:
        raise ValueError("reference image has zero energy")
    err_energy = float(np.sum((x - xh) ** 2))
    if err_energy == 0.0:
        return math.inf
    return 10.0 * math.log10(ref_energy / err_energy)


def nbias(reference, estimate, mask=None) -> float:
    """Normalised bias: |mean error| over |mean reference|."""
    x = np.asarray(reference, dtype=float)
    xh = np.asarray(estimate, dtype=float)
    if mask is not None:
        x = x[np.asarray(mask, dtype=bool)]
        xh = xh[np.asarray(mask, dtype=bool)]
    ref_mean = float(np.mean(x))
    if ref_mean == 0.0:
        raise ValueError("reference image has zero mean")
    return abs(float(np.mean(x - xh))) / abs(ref_mean)


def sbr(refl: float, amplitude: float, background: float) -> float:
    if background <= 0:
        raise ValueError("background must be positive for SBR")
    return refl * amplitude / background


def snr(refl: float, amplitude: float, background: float) -> float:
    signal = refl * amplitude
    if signal + background <= 0:
        raise ValueError("signal + background must be positive for SNR")
    return signal / math.sqrt(signal + background)


def attenuation_lengths(alpha_per_meter: float, distance_m: float) -> float:
    return alpha_per_meter * distance_m


def pct_nonempty(cube: PhotonCube) -> float:
    """Percentage of pixels that recorded at least one photon."""
    mask = cube.nonempty_mask()
    return 100.0 * float(mask.sum()) / mask.size


@dataclass
class LevelMetrics:
    level: float        # reference reflectivity of the group
    sbr: float
    n_pixels: int
    sre_depth: float
    sre_refl: float
    nbias_depth: float
    nbias_refl: float


@dataclass
class EvalReport:
    sre_depth: float
    sre_refl: float
    nbias_depth: float
    nbias_refl: float
    sbr: float
    snr: float
    al: float
    pct_nonempty: float


REPORT_HEADER = ("group,level,sbr,n_pixels,sre_depth_db,sre_refl_db,"
                 "nbias_depth,nbias_refl")


def per_level_metrics(truth_depth, truth_refl, est_depth, est_refl,
                      amplitude: float, background: float,
                      max_levels: int = 64) -> list[LevelMetrics]:
    """Metrics restricted to each distinct reference-reflectivity level.

    Returns an empty list when the reference has more distinct values than
    max_levels (continuous reference, no level structure to report).
    """
    truth_refl = np.asarray(truth_refl, dtype=float)
    levels = np.unique(truth_refl)
    if levels.size > max_levels:
        return []
    rows = []
    for level in levels:
        sel = truth_refl == level
        level_sbr = (sbr(float(level), amplitude, background)
                     if background > 0 else math.inf)
        rows.append(LevelMetrics(
            level=float(level),
            sbr=level_sbr,
            n_pixels=int(sel.sum()),
            sre_depth=sre(np.asarray(truth_depth)[sel], np.asarray(est_depth)[sel]),
            sre_refl=(sre(truth_refl[sel], np.asarray(est_refl)[sel])
                      if level != 0 else math.nan),
            nbias_depth=nbias(np.asarray(truth_depth)[sel],
                              np.asarray(est_depth)[sel]),
            nbias_refl=(nbias(truth_refl[sel], np.asarray(est_refl)[sel])
                        if level != 0 else math.nan),
        ))
    return rows


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"


def write_report_csv(path, global_row: EvalReport,
                     levels: list[LevelMetrics]) -> None:
    lines = [REPORT_HEADER]
    lines.append(",".join([
        "all", _fmt(math.nan), _fmt(global_row.sbr), "-1",
        _fmt(global_row.sre_depth), _fmt(global_row.sre_refl),
        _fmt(global_row.nbias_depth), _fmt(global_row.nbias_refl),
    ]))
    for k, row in enumerate(levels):
        lines.append(",".join([
            f"level{k}", _fmt(row.level), _fmt(row.sbr), str(row.n_pixels),
            _fmt(row.sre_depth), _fmt(row.sre_refl),
            _fmt(row.nbias_depth), _fmt(row.nbias_refl),
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


SERIES_HEADER = "sbr,tacq,sre_depth_db,sre_refl_db,nbias_depth,nbias_refl"


def write_series_csv(path, levels: list[LevelMetrics],
                     tacq: float | None = None) -> None:
    """Plot-ready series: one (SBR, SRE) point per level; the optional
    acquisition-time label supports assembling (t_acq, SRE) series across
    runs by concatenation."""
    lines = [SERIES_HEADER]
    for row in levels:
        lines.append(",".join([
            _fmt(row.sbr), _fmt(tacq if tacq is not None else math.nan),
            _fmt(row.sre_depth), _fmt(row.sre_refl),
            _fmt(row.nbias_depth), _fmt(row.nbias_refl),
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
