"""Unadjusted Hamiltonian annealing: partial momentum refreshment + leapfrog.

Per transition k:  p~_k ~ N(h p_{k-1}, (1 - h^2) M),  (x_k, p_k) = Phi_k(x_{k-1}, p~_k).
The momentum is not flipped after the leapfrog step.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core import DiagGaussian, UsageError, gaussian_logpdf, sample_gaussian
from .langevin import _step_array


@dataclass(frozen=True)
class UhaConfig:
    path: object
    eps: object = 0.1
    damping: float = 0.9
    mass_diag: object = None
    n_leapfrog: int = 1

    def __post_init__(self):
        h = float(self.damping)
        if not 0.0 < h < 1.0:
            raise UsageError("damping h must lie in (0, 1)")
        object.__setattr__(self, "damping", h)
        object.__setattr__(self, "eps", _step_array(self.eps, self.path.K, "eps"))
        m = np.ones(self.path.dim) if self.mass_diag is None else np.asarray(self.mass_diag, np.float64)
        if m.ndim == 0:
            m = np.full(self.path.dim, float(m))
        if m.shape != (self.path.dim,) or not np.all(m > 0):
            raise UsageError("mass_diag must be positive with one entry per dimension")
        object.__setattr__(self, "mass_diag", m)
        if int(self.n_leapfrog) < 1:
            raise UsageError("n_leapfrog must be >= 1")

    @property
    def K(self):
        return self.path.K

    @property
    def zeta_delta(self):
        """zeta * delta with h = exp(-zeta * delta)."""
        return -math.log(self.damping)

    @property
    def momentum_dist(self):
        return DiagGaussian(np.zeros(self.path.dim), self.mass_diag)

    @property
    def refresh_dist(self):
        """Zero-mean part of the refresh kernel, N(0, (1 - h^2) M)."""
        h = self.damping
        return DiagGaussian(np.zeros(self.path.dim), (1.0 - h * h) * self.mass_diag)


@dataclass
class PhaseTrajectory:
    x: np.ndarray  # (K+1, n, d)
    p: np.ndarray  # (K+1, n, d)
    p_tilde: np.ndarray  # (K, n, d); row k-1 holds p~_k
    log_w: np.ndarray
    per_step_log_ratio: np.ndarray  # (K, n)
    boundary: np.ndarray
    leapfrog_energy_deltas: np.ndarray  # (K, n)
    divergent: np.ndarray

    @property
    def n(self):
        return self.log_w.shape[0]


def leapfrog(path, k, x, p, eps, mass_diag, n_steps=1):
    """Velocity-Verlet on the potential -log gamma_k."""
    for _ in range(n_steps):
        p = p + 0.5 * eps * path.grad(k, x)
        x = x + eps * p / mass_diag
        p = p + 0.5 * eps * path.grad(k, x)
    return x, p


def flip(x, p):
    return x, -p


def momentum_refresh(p_prev, h, mass_diag, rng, noise=None):
    if noise is None:
        noise = rng.standard_normal(np.shape(p_prev))
    return h * p_prev + math.sqrt(1.0 - h * h) * np.sqrt(mass_diag) * noise


def reversal_mean_f(score, k, x, p_tilde, cfg):
    """p~ + 2 zeta delta (M s(k, x, p~) + p~).

    Evaluated as ``p~ + 2 zeta delta * M (s + p~ / M)`` so the warm-start score
    ``s = -p~ / M`` cancels to exactly zero.
    """
    m = cfg.mass_diag
    s = score(k, x, p_tilde)
    return p_tilde + 2.0 * cfg.zeta_delta * (m * (s + p_tilde / m))


def hamiltonian(path, k, x, p, momentum_dist):
    return -path.logpdf(k, x) - gaussian_logpdf(p, momentum_dist)


def run_uha(cfg, rng, n_particles=1, score=None):
    """Run ``n_particles`` chains; ``score=None`` is AIS, ``score(k, x, p)`` is MCD."""
    path = cfg.path
    K, n, d = cfg.K, int(n_particles), path.dim
    h = cfg.damping
    mom, refresh = cfg.momentum_dist, cfg.refresh_dist
    xs = np.empty((K + 1, n, d))
    ps = np.empty((K + 1, n, d))
    pts = np.empty((K, n, d))
    per_step = np.empty((K, n))
    dH = np.empty((K, n))
    with np.errstate(over="ignore", invalid="ignore"):
        x = sample_gaussian(rng, path.pi0, n)
        p = sample_gaussian(rng, mom, n)
        xs[0], ps[0] = x, p
        log_w = -gaussian_logpdf(x, path.pi0) - gaussian_logpdf(p, mom)
        boundary = log_w.copy()
        for k in range(1, K + 1):
            pt = momentum_refresh(p, h, cfg.mass_diag, rng)
            mu_p = pt if score is None else reversal_mean_f(score, k, x, pt, cfg)
            per_step[k - 1] = gaussian_logpdf(p - h * mu_p, refresh) - gaussian_logpdf(pt - h * p, refresh)
            log_w = log_w + per_step[k - 1]
            h_before = hamiltonian(path, k, x, pt, mom)
            x, p = leapfrog(path, k, x, pt, cfg.eps[k - 1], cfg.mass_diag, cfg.n_leapfrog)
            dH[k - 1] = hamiltonian(path, k, x, p, mom) - h_before
            xs[k], ps[k], pts[k - 1] = x, p, pt
        final = path.target.log_gamma(x) + gaussian_logpdf(p, mom)
        log_w = log_w + final
        boundary = boundary + final
    divergent = (
        ~np.all(np.isfinite(xs), axis=(0, 2)) | ~np.all(np.isfinite(ps), axis=(0, 2)) | ~np.isfinite(log_w)
    )
    log_w = np.where(divergent, -np.inf, log_w)
    return PhaseTrajectory(xs, ps, pts, log_w, per_step, boundary, dH, divergent)
