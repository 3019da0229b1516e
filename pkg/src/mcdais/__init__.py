"""Annealed importance sampling with learned backward kernels (Monte Carlo Diffusion).

Langevin and Hamiltonian samplers share one shape: build an ``AnnealedPath``,
wrap it in ``UlaConfig`` or ``UhaConfig``, then call ``run_ula`` / ``run_uha``
with ``score=None`` for plain AIS or a score function for MCD.  ``train`` fits
the score network; ``log_z_estimate`` turns weights into an evidence estimate.
"""

__version__ = "0.1.0"

from .core import DiagGaussian, UsageError, gaussian_logpdf, log_mean_exp, make_rng, sample_gaussian
from .hamiltonian import PhaseTrajectory, UhaConfig, leapfrog, momentum_refresh, reversal_mean_f, run_uha
from .langevin import Trajectory, UlaConfig, ais_telescoping_log_weight, run_ula, ula_forward_step
from .oracle import OracleResult, OracleSpec, oracle_closed_form, oracle_figure_data, oracle_simulate
from .scorenet import (
    AdamState,
    ScoreNetParams,
    adam_init,
    adam_step,
    init_params,
    load_checkpoint,
    save_checkpoint,
    scorenet_backward,
    scorenet_forward,
    warm_start_uha,
    warm_start_ula,
)
from .targets import (
    TARGET_NAMES,
    AnnealedPath,
    TargetDensity,
    annealed_grad,
    annealed_logpdf,
    default_initial,
    linear_schedule,
    make_target,
)
from .trainer import (
    TrainReport,
    TrajectoryBuffer,
    TrainingDiverged,
    elbo_estimate,
    log_z_estimate,
    negative_backward_loglik_loss,
    score_matching_loss,
    train,
)
