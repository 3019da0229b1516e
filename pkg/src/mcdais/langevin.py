"""Unadjusted Langevin annealing with AIS or learned (MCD) backward kernels.

All chains of a run advance together as rows of an ``(n, d)`` array.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import UsageError, gaussian_logpdf, sample_gaussian


def _step_array(value, K, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(K, float(arr))
    if arr.shape != (K,):
        raise UsageError(f"{name} must be a scalar or have one entry per step ({K})")
    if not np.all(arr > 0):
        raise UsageError(f"{name} must be > 0")
    return arr


@dataclass(frozen=True)
class UlaConfig:
    path: object
    delta: object = 0.1

    def __post_init__(self):
        object.__setattr__(self, "delta", _step_array(self.delta, self.path.K, "delta"))

    @property
    def K(self):
        return self.path.K


@dataclass
class Trajectory:
    states: np.ndarray  # (K+1, n, d)
    log_w: np.ndarray  # (n,)
    per_step_log_ratio: np.ndarray  # (K, n)
    boundary: np.ndarray  # (n,)  -log pi0(x_0) + log gamma(x_K)
    divergent: np.ndarray  # (n,) bool

    @property
    def n(self):
        return self.log_w.shape[0]


def _iso_logpdf(x, mean, var):
    z = x - mean
    d = x.shape[-1]
    return -0.5 * d * (kernels.LOG_2PI + np.log(var)) - 0.5 * np.sum(z * z, axis=-1) / var


def forward_mean(cfg, k, x_prev):
    return x_prev + cfg.delta[k - 1] * cfg.path.grad(k, x_prev)


def backward_mean(cfg, k, x, score=None):
    """Mean of B_{k-1}(. | x_k).

    AIS reuses the forward kernel: ``x + delta * g``.  MCD uses
    ``x - delta * g + 2 delta s``, written as ``x + delta * (2 s - g)`` so a
    score equal to ``g`` reproduces the AIS mean bit for bit.
    """
    g = cfg.path.grad(k, x)
    if score is None:
        return x + cfg.delta[k - 1] * g
    s = score(k, x)
    return x + cfg.delta[k - 1] * (2.0 * s - g)


def ula_forward_step(cfg, k, x_prev, rng=None, noise=None):
    """x_k = x_prev + delta grad log gamma_k(x_prev) + sqrt(2 delta) eps.

    ``noise`` overrides the standard-normal draw (pass zeros for a drift-only step).
    """
    if not 1 <= k <= cfg.K:
        raise UsageError(f"step index {k} outside 1..{cfg.K}")
    x_prev = np.asarray(x_prev, dtype=np.float64)
    if noise is None:
        noise = rng.standard_normal(x_prev.shape)
    return forward_mean(cfg, k, x_prev) + np.sqrt(2.0 * cfg.delta[k - 1]) * noise


def run_ula(cfg, rng, n_particles=1, score=None):
    """Run ``n_particles`` chains; ``score=None`` gives AIS, a callable ``score(k, x)`` gives MCD.

    The random draws depend only on ``rng``, never on ``score``, so AIS and MCD
    runs from equal streams share every state.
    """
    path = cfg.path
    K, n = cfg.K, int(n_particles)
    states = np.empty((K + 1, n, path.dim))
    per_step = np.empty((K, n))
    with np.errstate(over="ignore", invalid="ignore"):
        x = sample_gaussian(rng, path.pi0, n)
        states[0] = x
        log_w = -gaussian_logpdf(x, path.pi0)
        boundary = log_w.copy()
        for k in range(1, K + 1):
            var = 2.0 * cfg.delta[k - 1]
            mu_f = forward_mean(cfg, k, x)
            x_new = mu_f + np.sqrt(var) * rng.standard_normal(x.shape)
            mu_b = backward_mean(cfg, k, x_new, score)
            per_step[k - 1] = _iso_logpdf(x, mu_b, var) - _iso_logpdf(x_new, mu_f, var)
            log_w = log_w + per_step[k - 1]
            x = x_new
            states[k] = x
        final = path.target.log_gamma(x)
        log_w = log_w + final
        boundary = boundary + final
    divergent = ~np.all(np.isfinite(states), axis=(0, 2)) | ~np.isfinite(log_w)
    log_w = np.where(divergent, -np.inf, log_w)
    return Trajectory(states, log_w, per_step, boundary, divergent)


def ais_telescoping_log_weight(path, states):
    """sum_k log gamma_k(x_{k-1}) - log gamma_{k-1}(x_{k-1}).

    Only an evidence estimator when every forward kernel leaves its pi_k
    exactly invariant; for unadjusted kernels use ``run_ula``'s weight.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.shape[0] != path.K + 1:
        raise UsageError(f"expected {path.K + 1} states, got {states.shape[0]}")
    total = 0.0
    for k in range(1, path.K + 1):
        x = states[k - 1]
        total = total + (path.logpdf(k, x) - path.logpdf(k - 1, x))
    return total
