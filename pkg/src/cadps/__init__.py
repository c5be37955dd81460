"""Covariance-aware diffusion posterior sampling on analytic Gaussian mixtures.

Library layout:
    schedule     discrete VP noise schedule
    linalg       CG solver, Gaussian log-densities, small eigendecompositions
    gmm          mixture prior, smoothed score, exact moments and posterior
    measurement  random linear-Gaussian measurement models
    guidance     DPS / PiGDM / covariance-aware likelihood corrections
    sampler      ancestral reverse diffusion, guided and unconditional
    metrics      sliced-Wasserstein distance, CI aggregation
    harness      experiment grid, CSV/JSONL emission
"""

from .schedule import NoiseSchedule, build_linear_vp_schedule, snr_sigma_sq
from .linalg import CgReport, conjugate_gradient_solve, gaussian_log_pdf, spd_eigendecomposition
from .gmm import (
    ConditionalMoments,
    GaussianMixture,
    build_toy_prior,
    conditional_moments,
    exact_posterior,
    sample_mixture,
    smoothed_log_pdf,
    smoothed_score,
)
from .measurement import (
    MeasurementModel,
    generate_measurement_matrix,
    generate_observation,
    residual,
)
from .guidance import (
    GuidanceMethod,
    GuidanceState,
    cadps_covariance_diag,
    fd_score_hessian,
    fd_score_hvp,
    finite_difference_hessian_diag,
    guidance_gradient_cadps,
    guidance_gradient_dps,
    guidance_gradient_pigdm,
    tweedie_mean,
)
from .sampler import (
    ChainConfig,
    reverse_step_unconditional,
    run_guided_chain,
    run_guided_chains,
    run_unconditional_chains,
)
from .metrics import SwConfig, aggregate_ci, sliced_wasserstein
from .harness import (
    ExperimentGrid,
    ExperimentRecord,
    emit_results,
    emit_scatter,
    run_cell,
    run_grid,
)

__version__ = "0.1.0"
