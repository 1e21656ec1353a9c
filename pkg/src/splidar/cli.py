"""Command-line front end.

Subcommands:
    synth     generate a synthetic cube plus ground-truth images
    restore   estimate depth/reflectivity from a cube (xcorr | cda | mcmc)
    eval      compare estimate images against reference images
    fit-irf   calibrate the Gaussian pulse model from response samples

Every subcommand accepts --config FILE with flat key=value lines (same keys
as the long option names, unknown keys rejected; exact flags override the
file) and --dump-config FILE to write back the fully resolved configuration.
Exit status is 0 on success; failures print a single "error: ..." line on
stderr and exit nonzero.
"""

import argparse
import itertools
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import figures, metrics, spcio
from .admm import AdmmConfig
from .calibrate import fit_impulse
from .cda import CdaConfig, run_cda
from .errors import ConfigError, SplidarError
from .mcmc import McmcConfig, run_mcmc
from .model import (ImpulseModel, bins_to_meters, synthesize_cube, thin_cube)
from .prelim import build_prelim, initial_images
from .scenes import flat_scene, staircase_scene


# ---------------------------------------------------------------- config ---

@dataclass(frozen=True)
class Param:
    name: str
    kind: str          # int | float | str | bool | floats | ints
    default: object
    help: str
    choices: tuple = ()


def _parse_value(kind: str, text: str):
    text = text.strip()
    if text == "none":
        return None
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "floats":
            return tuple(float(v) for v in text.split(",") if v != "")
        if kind == "ints":
            return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise ConfigError(f"invalid {kind} value {text!r}") from exc
    return text


def _format_value(kind: str, value) -> str:
    if value is None:
        return "none"
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("floats", "ints"):
        return ",".join(repr(v) if kind == "floats" else str(v) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def parse_config_text(text: str, params: list[Param]) -> dict:
    by_name = {p.name: p for p in params}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in by_name:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(by_name[key].kind, value)
    return out


def dump_config_text(cfg: dict, params: list[Param]) -> str:
    lines = [f"{p.name}={_format_value(p.kind, cfg[p.name])}" for p in params]
    return "\n".join(lines) + "\n"


def _resolve(args: argparse.Namespace, params: list[Param]) -> dict:
    cfg = {p.name: p.default for p in params}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg.update(parse_config_text(fh.read(), params))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for p in params:
        value = getattr(args, p.name, None)
        if value is not None:
            cfg[p.name] = tuple(value) if isinstance(value, list) else value
    for p in params:
        if p.choices and cfg[p.name] is not None and cfg[p.name] not in p.choices:
            raise ConfigError(f"{p.name} must be one of {p.choices}")
    if getattr(args, "dump_config", None):
        with open(args.dump_config, "w", encoding="utf-8") as fh:
            fh.write(dump_config_text(cfg, params))
    return cfg


def _require(cfg: dict, *names: str):
    for name in names:
        if cfg[name] is None:
            raise ConfigError(f"missing required parameter --{name.replace('_', '-')}")


# ------------------------------------------------------------ parameters ---

SYNTH_PARAMS = [
    Param("scene", "str", "v-b", "scene preset", ("v-b", "flat")),
    Param("rows", "int", 100, "image rows"),
    Param("cols", "int", 100, "image columns"),
    Param("bins", "int", 2000, "histogram bins"),
    Param("bin_width_ps", "float", 2.0, "bin width in picoseconds"),
    Param("refractive_index", "float", 1.0, "medium refractive index"),
    Param("amplitude", "float", 1000.0, "pulse peak amplitude (counts)"),
    Param("sigma2", "float", 100.0, "pulse variance (bins^2)"),
    Param("alpha", "float", 0.0, "attenuation per bin"),
    Param("bg", "float", 1.0, "background counts per bin"),
    Param("refl", "float", 0.5, "flat-scene reflectivity"),
    Param("depth_bin", "float", 1000.0, "flat-scene depth (bins)"),
    Param("seed", "int", 0, "random seed"),
    Param("out", "str", "cube.spc1", "output cube path"),
    Param("truth_depth", "str", "truth_depth.spi1", "output truth depth path"),
    Param("truth_refl", "str", "truth_refl.spi1", "output truth reflectivity path"),
]

RESTORE_PARAMS = [
    Param("cube", "str", None, "input cube path"),
    Param("method", "str", "cda", "estimator", ("xcorr", "cda", "mcmc")),
    Param("amplitude", "float", None, "pulse peak amplitude (counts)"),
    Param("sigma2", "float", None, "pulse variance (bins^2)"),
    Param("alpha", "float", None, "attenuation per bin (default: the --irf file's value, else 0)"),
    Param("bg", "float", 1.0, "background per bin, used only for SBR labels"),
    Param("irf", "str", None, "pulse parameters file from fit-irf"),
    Param("eta", "float", None, "TV coupling (cda)"),
    Param("zeta", "float", None, "reflectivity coupling (cda)"),
    Param("eta_grid", "floats", None, "comma list of TV couplings to scan"),
    Param("zeta_grid", "floats", None, "comma list of reflectivity couplings"),
    Param("truth_depth", "str", None, "reference depth image"),
    Param("truth_refl", "str", None, "reference reflectivity image"),
    Param("out_prefix", "str", "restored_", "output file prefix"),
    Param("mu", "float", 1.0, "ADMM augmented-Lagrangian weight"),
    Param("admm_iters", "int", 500, "ADMM iteration cap"),
    Param("admm_tol", "float", 1e-6, "ADMM primal tolerance"),
    Param("newton_iters", "int", 20, "inner Newton iterations"),
    Param("delta", "float", 1e-2, "relative-cost stop (cda)"),
    Param("max_outer", "int", 500, "outer iteration cap (cda)"),
    Param("n_burn", "int", 1000, "burn-in sweeps (mcmc)"),
    Param("n_iter", "int", 3000, "total sweeps (mcmc)"),
    Param("eta0", "float", 1.0, "initial TV coupling (mcmc)"),
    Param("zeta0", "float", 1.0, "initial reflectivity coupling (mcmc)"),
    Param("step0", "float", 1.0, "initial proposal scale (mcmc)"),
    Param("seed", "int", 0, "random seed"),
    Param("threads", "int", 1, "worker threads (results are thread-count independent)"),
    Param("centroid_window", "int", -1, "centroid half-window in bins; -1 auto, 0 full range"),
    Param("guided", "bool", True, "median-guided peak search"),
    Param("gate_halfwidth", "int", -1, "guided search half-width; -1 auto"),
    Param("kernel_halfwidth", "int", -1, "correlation kernel half-width; -1 auto"),
    Param("gate", "ints", None, "crop bins lo,hi before processing"),
    Param("acq_subsample", "float", 1.0, "binomial thinning probability"),
    Param("units", "str", "bins", "depth units of output images", ("bins", "meters")),
    Param("figures", "bool", True, "render PNG figures"),
]

EVAL_PARAMS = [
    Param("truth_depth", "str", None, "reference depth image"),
    Param("truth_refl", "str", None, "reference reflectivity image"),
    Param("est_depth", "str", None, "estimated depth image"),
    Param("est_refl", "str", None, "estimated reflectivity image"),
    Param("amplitude", "float", 1000.0, "pulse peak amplitude for SBR/SNR"),
    Param("bg", "float", 1.0, "background counts per bin for SBR/SNR"),
    Param("alpha_per_meter", "float", None, "attenuation (1/m) for the AL column"),
    Param("distance_m", "float", None, "stand-off distance (m) for the AL column"),
    Param("cube", "str", None, "optional cube for the non-empty percentage"),
    Param("tacq", "float", None, "acquisition-time label for the series file"),
    Param("out", "str", "report.csv", "report path"),
    Param("series_out", "str", None, "plot-ready series path"),
    Param("figure_prefix", "str", None, "PNG prefix (default: next to report)"),
    Param("figures", "bool", True, "render PNG figures"),
]

FIT_IRF_PARAMS = [
    Param("samples", "str", None, "CSV of bin,response calibration samples"),
    Param("bins", "int", 2000, "window length used for the pulse area"),
    Param("out", "str", "irf.txt", "output parameter file"),
]


# ------------------------------------------------------------- commands ---

def _write_trace_csv(path, costs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,cost\n")
        for k, cost in enumerate(costs):
            fh.write(f"{k},{cost!r}\n")


def cmd_synth(cfg: dict) -> int:
    irf = ImpulseModel.gaussian(cfg["amplitude"], cfg["sigma2"], cfg["bins"],
                                alpha=cfg["alpha"])
    if cfg["scene"] == "v-b":
        scene = staircase_scene(cfg["rows"], cfg["cols"], cfg["bins"],
                                cfg["bin_width_ps"], cfg["refractive_index"],
                                background=cfg["bg"], alpha=cfg["alpha"])
    else:
        scene = flat_scene(cfg["rows"], cfg["cols"], cfg["depth_bin"],
                           cfg["refl"], cfg["bg"], cfg["alpha"])
    cube = synthesize_cube(scene, irf, cfg["seed"], cfg["bins"],
                           cfg["bin_width_ps"], cfg["refractive_index"])
    spcio.write_cube(cfg["out"], cube)
    spcio.write_image(cfg["truth_depth"], scene.depth)
    spcio.write_image(cfg["truth_refl"], scene.reflectivity)
    print(f"wrote {cfg['out']} ({cube.n_rows}x{cube.n_cols}x{cube.n_bins}), "
          f"{cfg['truth_depth']}, {cfg['truth_refl']}")
    return 0


def _load_irf(cfg: dict, n_bins: int) -> ImpulseModel:
    amplitude, sigma2, alpha = cfg["amplitude"], cfg["sigma2"], cfg["alpha"]
    if cfg["irf"]:
        known = [Param("amplitude", "float", None, ""),
                 Param("sigma2", "float", None, ""),
                 Param("alpha", "float", 0.0, ""),
                 Param("area", "float", None, ""),
                 Param("bins", "int", None, "")]
        with open(cfg["irf"], "r", encoding="utf-8") as fh:
            loaded = parse_config_text(fh.read(), known)
        amplitude = amplitude if amplitude is not None else loaded.get("amplitude")
        sigma2 = sigma2 if sigma2 is not None else loaded.get("sigma2")
        if alpha is None:
            alpha = loaded.get("alpha")
    if amplitude is None or sigma2 is None:
        raise ConfigError("pulse model undefined: pass --amplitude/--sigma2 "
                          "or --irf")
    return ImpulseModel.gaussian(amplitude, sigma2, n_bins,
                                 alpha=alpha if alpha is not None else 0.0)


def _read_truth(cfg: dict, shape) -> tuple[np.ndarray, np.ndarray] | None:
    if not (cfg["truth_depth"] and cfg["truth_refl"]):
        return None
    depth = spcio.read_image(cfg["truth_depth"])
    refl = spcio.read_image(cfg["truth_refl"])
    if depth.shape != shape or refl.shape != shape:
        raise ConfigError("truth image dimensions do not match the cube")
    return depth, refl


def _report_outputs(cfg, prefix, est_depth, est_refl, truth, irf, cube,
                    costs=None):
    valid = np.isfinite(est_depth)
    truth_depth, truth_refl = truth
    global_row = metrics.EvalReport(
        sre_depth=metrics.sre(truth_depth, est_depth, valid),
        sre_refl=metrics.sre(truth_refl, est_refl, valid),
        nbias_depth=metrics.nbias(truth_depth, est_depth, valid),
        nbias_refl=metrics.nbias(truth_refl, est_refl, valid),
        sbr=(metrics.sbr(float(truth_refl.mean()), irf.amplitude, cfg["bg"])
             if cfg.get("bg") else math.nan),
        snr=(metrics.snr(float(truth_refl.mean()), irf.amplitude, cfg["bg"])
             if cfg.get("bg") else math.nan),
        al=math.nan,
        pct_nonempty=metrics.pct_nonempty(cube),
    )
    levels = metrics.per_level_metrics(truth_depth, truth_refl, est_depth,
                                       est_refl, irf.amplitude,
                                       cfg.get("bg") or 0.0)
    metrics.write_report_csv(f"{prefix}report.csv", global_row, levels)
    if levels:
        metrics.write_series_csv(f"{prefix}series.csv", levels)
    if cfg["figures"]:
        figures.plot_images(est_depth, est_refl, f"{prefix}images.png")
        if levels:
            figures.plot_level_curves(levels, f"{prefix}curves.png")
        if costs is not None and len(costs):
            figures.plot_cost_trace(costs, f"{prefix}trace.png")
    return global_row


def cmd_restore(cfg: dict) -> int:
    _require(cfg, "cube")
    cube = spcio.read_cube(cfg["cube"])
    bin_offset = 0
    if cfg["gate"] is not None:
        if len(cfg["gate"]) != 2:
            raise ConfigError("--gate needs exactly lo,hi")
        lo, hi = cfg["gate"]
        cube = cube.crop_bins(lo, hi)
        bin_offset = lo
    if cfg["acq_subsample"] < 1.0:
        cube = thin_cube(cube, cfg["acq_subsample"], cfg["seed"])
    irf = _load_irf(cfg, cube.n_bins)
    bundle = build_prelim(
        cube, irf, guided=cfg["guided"],
        centroid_window=None if cfg["centroid_window"] < 0 else cfg["centroid_window"],
        gate_halfwidth=None if cfg["gate_halfwidth"] < 0 else cfg["gate_halfwidth"],
        kernel_halfwidth=None if cfg["kernel_halfwidth"] < 0 else cfg["kernel_halfwidth"],
    )
    truth = _read_truth(cfg, (cube.n_rows, cube.n_cols))
    prefix = cfg["out_prefix"]
    admm_cfg = AdmmConfig(mu=cfg["mu"], max_iters=cfg["admm_iters"],
                          primal_tol=cfg["admm_tol"],
                          newton_iters=cfg["newton_iters"])
    costs = None

    if cfg["method"] != "cda" and (cfg["eta_grid"] or cfg["zeta_grid"]):
        raise ConfigError("hyperparameter grids apply to --method cda only")
    if cfg["method"] == "xcorr":
        est_depth = bundle.classical.depth.copy()
        est_refl = bundle.classical.refl.copy()
    elif cfg["method"] == "cda":
        init = initial_images(bundle.used, depth_init=bundle.centers)
        grids = cfg["eta_grid"] or (cfg["eta"],), cfg["zeta_grid"] or (cfg["zeta"],)
        if any(v is None for grid in grids for v in grid):
            raise ConfigError("cda needs --eta/--zeta or --eta-grid/--zeta-grid")
        combos = list(itertools.product(*grids))
        if len(combos) > 1 and truth is None:
            raise ConfigError("hyperparameter grid search needs truth images")
        best = None
        grid_rows = []
        for eta, zeta in combos:
            images, trace = run_cda(
                bundle.used, irf,
                CdaConfig(eta=eta, zeta=zeta, delta=cfg["delta"],
                          max_outer=cfg["max_outer"], admm=admm_cfg),
                init=init)
            if truth is None:
                score = -trace.costs[-1]
            else:
                score = (metrics.sre(truth[0], images.depth)
                         + metrics.sre(truth[1], images.refl))
            grid_rows.append((eta, zeta, score, trace.iterations))
            if best is None or score > best[0]:
                best = (score, images, trace, eta, zeta)
        _, images, trace, eta, zeta = best
        if len(combos) > 1:
            with open(f"{prefix}grid.csv", "w", encoding="utf-8") as fh:
                fh.write("eta,zeta,score,outer_iterations\n")
                for row in grid_rows:
                    fh.write(f"{row[0]!r},{row[1]!r},{row[2]!r},{row[3]}\n")
            print(f"grid best: eta={eta} zeta={zeta}")
        est_depth, est_refl = images.depth, images.refl
        costs = trace.costs
        _write_trace_csv(f"{prefix}trace.csv", costs)
    else:  # mcmc
        init = initial_images(bundle.used, depth_init=bundle.centers)
        mcfg = McmcConfig(n_burn=cfg["n_burn"], n_iter=cfg["n_iter"],
                          eta0=cfg["eta0"], zeta0=cfg["zeta0"],
                          step0=cfg["step0"], seed=cfg["seed"])
        result = run_mcmc(bundle.used, irf, mcfg, init=init,
                          dump_path=f"{prefix}trace.csv")
        est_depth, est_refl = result.depth, result.refl
        costs = result.costs
        print(f"mcmc couplings: eta={result.eta:.4g} zeta={result.zeta:.4g}; "
              f"mean acceptance {float(result.accept_rate.mean()):.3f}")

    out_depth = est_depth + bin_offset
    if cfg["units"] == "meters":
        out_depth = bins_to_meters(out_depth, cube.bin_width_ps,
                                   cube.refractive_index)
    spcio.write_image(f"{prefix}depth.spi1", out_depth)
    spcio.write_image(f"{prefix}refl.spi1", est_refl)
    written = [f"{prefix}depth.spi1", f"{prefix}refl.spi1"]
    if truth is not None:
        row = _report_outputs(cfg, prefix, est_depth + bin_offset, est_refl,
                              truth, irf, cube, costs)
        written.append(f"{prefix}report.csv")
        print(f"depth SRE {row.sre_depth:.2f} dB, refl SRE "
              f"{row.sre_refl:.2f} dB, depth N-Bias {row.nbias_depth:.4f}")
    print("wrote " + ", ".join(written))
    return 0


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "truth_depth", "truth_refl", "est_depth", "est_refl")
    truth_depth = spcio.read_image(cfg["truth_depth"])
    truth_refl = spcio.read_image(cfg["truth_refl"])
    est_depth = spcio.read_image(cfg["est_depth"])
    est_refl = spcio.read_image(cfg["est_refl"])
    if not (truth_depth.shape == truth_refl.shape == est_depth.shape
            == est_refl.shape):
        raise ConfigError("image dimensions do not match")
    valid = np.isfinite(est_depth)
    mean_refl = float(truth_refl.mean())
    al = math.nan
    if cfg["alpha_per_meter"] is not None and cfg["distance_m"] is not None:
        al = metrics.attenuation_lengths(cfg["alpha_per_meter"],
                                         cfg["distance_m"])
    pct = math.nan
    if cfg["cube"]:
        pct = metrics.pct_nonempty(spcio.read_cube(cfg["cube"]))
    global_row = metrics.EvalReport(
        sre_depth=metrics.sre(truth_depth, est_depth, valid),
        sre_refl=metrics.sre(truth_refl, est_refl, valid),
        nbias_depth=metrics.nbias(truth_depth, est_depth, valid),
        nbias_refl=metrics.nbias(truth_refl, est_refl, valid),
        sbr=metrics.sbr(mean_refl, cfg["amplitude"], cfg["bg"]),
        snr=metrics.snr(mean_refl, cfg["amplitude"], cfg["bg"]),
        al=al,
        pct_nonempty=pct,
    )
    levels = metrics.per_level_metrics(truth_depth, truth_refl, est_depth,
                                       est_refl, cfg["amplitude"], cfg["bg"])
    metrics.write_report_csv(cfg["out"], global_row, levels)
    written = [cfg["out"]]
    if cfg["series_out"] and levels:
        metrics.write_series_csv(cfg["series_out"], levels, cfg["tacq"])
        written.append(cfg["series_out"])
    if cfg["figures"] and levels:
        prefix = cfg["figure_prefix"] or cfg["out"].rsplit(".", 1)[0] + "_"
        written.append(figures.plot_level_curves(levels, f"{prefix}curves.png"))
    print(f"depth SRE {global_row.sre_depth} dB, refl SRE "
          f"{global_row.sre_refl} dB; wrote " + ", ".join(written))
    return 0


def cmd_fit_irf(cfg: dict) -> int:
    _require(cfg, "samples")
    samples = np.loadtxt(cfg["samples"], delimiter=",", comments="#", ndmin=2)
    irf = fit_impulse(samples, cfg["bins"])
    with open(cfg["out"], "w", encoding="utf-8") as fh:
        fh.write(f"amplitude={irf.amplitude!r}\n")
        fh.write(f"sigma2={irf.sigma2!r}\n")
        fh.write(f"alpha={irf.alpha!r}\n")
        fh.write(f"area={irf.area!r}\n")
        fh.write(f"bins={cfg['bins']}\n")
    print(f"wrote {cfg['out']}: amplitude={irf.amplitude:.6g} "
          f"sigma2={irf.sigma2:.6g} area={irf.area:.6g}")
    return 0


# ----------------------------------------------------------------- main ---

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_params(parser: argparse.ArgumentParser, params: list[Param]):
    parser.add_argument("--config", default=None,
                        help="key=value file with defaults for this command")
    parser.add_argument("--dump-config", default=None,
                        help="write the resolved configuration to this file")
    for p in params:
        flag = "--" + p.name.replace("_", "-")
        if p.kind == "bool":
            parser.add_argument(flag, default=None, help=p.help,
                                action=argparse.BooleanOptionalAction)
        elif p.kind == "ints" and p.name == "gate":
            parser.add_argument(flag, default=None, nargs=2, type=int,
                                metavar=("LO", "HI"), help=p.help)
        elif p.kind in ("floats", "ints"):
            parser.add_argument(
                flag, default=None, help=p.help,
                type=lambda s, kind=p.kind: _parse_value(kind, s))
        else:
            caster = {"int": int, "float": float, "str": str}[p.kind]
            parser.add_argument(flag, default=None, type=caster, help=p.help)


COMMANDS = {
    "synth": (SYNTH_PARAMS, cmd_synth),
    "restore": (RESTORE_PARAMS, cmd_restore),
    "eval": (EVAL_PARAMS, cmd_eval),
    "fit-irf": (FIT_IRF_PARAMS, cmd_fit_irf),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splidar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (params, _) in COMMANDS.items():
        _add_params(sub.add_parser(name, help=name), params)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        params, runner = COMMANDS[args.command]
        cfg = _resolve(args, params)
        return runner(cfg)
    except SplidarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
