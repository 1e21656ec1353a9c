"""Joint depth/reflectivity restoration for single-photon lidar cubes
acquired through attenuating media."""

from .admm import (AdmmConfig, DepthSolution, DepthSolver, depth_cost,
                   prox_data, project_nonneg, soft_threshold, solve_depth)
from .calibrate import fit_impulse
from .cda import (CdaConfig, CdaTrace, aux_update, neg_log_posterior,
                  refl_update, run_cda)
from .errors import (ConfigError, FitError, FormatError, SolverError,
                     SplidarError)
from .mcmc import (ChainState, Checkerboard, McmcConfig, McmcResult,
                   adapt_hyperparams, gibbs_aux, gibbs_reflectivity,
                   inverse_gamma, mh_depth_sweep, prior_perturbations,
                   run_mcmc)
from .metrics import (EvalReport, LevelMetrics, attenuation_lengths, nbias,
                      pct_nonempty, per_level_metrics, sbr, snr, sre,
                      write_report_csv, write_series_csv)
from .model import (GroundTruthScene, ImpulseModel, PhotonCube, SceneImages,
                    alpha_per_bin, alpha_per_meter, bins_to_meters,
                    forward_rate, meters_per_bin, meters_to_bins, pulse_area,
                    synthesize_cube, thin_cube)
from .prelim import (PrelimEstimates, RestorePrelim, build_prelim,
                     centroid_estimates, initial_images, median_guide,
                     windowed_centroid_estimates, xcorr_depth,
                     xcorr_estimates)
from .priors import (GammaMrfPrior, TvPrior, coupling_potential,
                     edge_ratio_sum, local_inv_aux_mean, local_refl_mean,
                     neighbor_sum_at_aux, total_variation)
from .scenes import default_impulse, flat_scene, staircase_scene
from .spcio import read_cube, read_image, write_cube, write_image

__version__ = "0.1.0"
