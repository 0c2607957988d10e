"""Mode-guided diffusion sampling for dataset distillation on analytic
Gaussian mixtures.

The pipeline discovers modes per class, steers each reverse-diffusion run
toward one mode, and switches the steering off for the late steps. The
noise predictor is the exact score of a diffused class-conditional
mixture, so every stage can be checked against closed-form answers.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .data import (make_overlap_model, make_planted_model, read_dataset, read_distilled,
                   read_model, read_modesets, read_table, read_trajectory, write_dataset,
                   write_distilled, write_model, write_modesets, write_table,
                   write_trajectory)
from .distill import (DistilledSet, ModeGuidedDistiller, assign_modes, baseline_distill,
                      distill, reference_data)
from .exceptions import (ConfigError, DiscoveryError, DivergenceError, MetricError,
                         ModeGuideError, ParseError, PlotError, SchemaError, ShapeError,
                         SingularityError, TrainingError, UnknownClassError)
from .metrics import (MetricsReport, SoftmaxRegression, diversity_scores, downstream_accuracy,
                      evaluate, fidelity_loglik, mode_coverage, representativeness_scores)
from .modes import (DBSCANModes, GaussianMixtureModes, KMeansModes, ModeSet, RandomModes,
                    dbscan_modes, discover_modes, gmm_em_fit, kmeans_fit, random_modes)
from .oracle import AnalyticEpsilon, GmmClassModel, Mixture
from .sampler import (GuidanceConfig, Trajectory, cfg_combine, ddim_step, ddpm_step,
                      mode_guidance_apply, predict_x0, reverse_process, sample_guided)
from .schedule import NoiseSchedule, build_linear_schedule, forward_noise, sigma_at
from .sweeps import SweepResult, sweep, sweep_lambda, sweep_tstop

__all__ = [
    "AnalyticEpsilon", "ConfigError", "DBSCANModes", "DiscoveryError", "DistilledSet",
    "DivergenceError", "GaussianMixtureModes", "GmmClassModel", "GuidanceConfig",
    "KMeansModes", "MetricError", "MetricsReport", "Mixture", "ModeGuideError",
    "ModeGuidedDistiller", "ModeSet", "NoiseSchedule", "ParseError", "PlotError",
    "RandomModes", "SchemaError", "ShapeError", "SingularityError", "SoftmaxRegression",
    "SweepResult", "Trajectory", "TrainingError", "UnknownClassError", "assign_modes",
    "baseline_distill", "build_linear_schedule", "cfg_combine", "dbscan_modes", "ddim_step",
    "ddpm_step", "discover_modes", "distill", "diversity_scores", "downstream_accuracy",
    "evaluate", "fidelity_loglik", "forward_noise", "gmm_em_fit", "kmeans_fit",
    "make_overlap_model", "make_planted_model", "mode_coverage", "mode_guidance_apply",
    "predict_x0", "random_modes", "read_dataset", "read_distilled", "read_model",
    "read_modesets", "read_table", "read_trajectory", "reference_data",
    "representativeness_scores", "reverse_process", "sample_guided", "sigma_at", "sweep",
    "sweep_lambda", "sweep_tstop", "write_dataset", "write_distilled", "write_model",
    "write_modesets", "write_table", "write_trajectory",
]
