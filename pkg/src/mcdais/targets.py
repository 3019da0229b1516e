"""Unnormalized targets, initial distributions and the geometric annealing path."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import math

import numpy as np
from scipy.special import gammaln

from . import kernels
from .core import DiagGaussian, UsageError, gaussian_grad_logpdf, gaussian_logpdf

TARGET_NAMES = ("gauss_shifted", "gauss_narrow", "mixture", "laplace", "student_t")

STUDENT_DOF = 3.0
MIXTURE_COMPONENTS = 8


@dataclass(frozen=True)
class TargetDensity:
    name: str
    dim: int
    log_gamma: Callable
    grad_log_gamma: Callable
    true_log_z: Optional[float] = None
    params: dict = field(default_factory=dict)


def _rows(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def gaussian_target(g, log_z_offset=0.0, name="gaussian"):
    """``exp(offset) * N(x; g.mean, g.var)``, so ``log Z = offset``."""
    c = float(log_z_offset)

    def log_gamma(x):
        return gaussian_logpdf(x, g) + c

    def grad(x):
        return gaussian_grad_logpdf(x, g)

    return TargetDensity(name, g.dim, log_gamma, grad, c, {"mean": g.mean, "var": g.var})


def mixture_target(means, log_z_offset=0.0):
    means = np.ascontiguousarray(np.asarray(means, dtype=np.float64))
    c = float(log_z_offset)

    def log_gamma(x):
        rows, single = _rows(x)
        lp, _ = kernels.mixture_logpdf_grad(np.ascontiguousarray(rows), means)
        lp = lp + c
        return float(lp[0]) if single else lp

    def grad(x):
        rows, single = _rows(x)
        _, g = kernels.mixture_logpdf_grad(np.ascontiguousarray(rows), means)
        return g[0] if single else g

    return TargetDensity("mixture", means.shape[1], log_gamma, grad, c, {"means": means})


def _product_target(name, dim, logpdf_1d, grad_1d, log_z_offset):
    c = float(log_z_offset)

    def log_gamma(x):
        x = np.asarray(x, dtype=np.float64)
        return np.sum(logpdf_1d(x), axis=-1) + c

    def grad(x):
        return grad_1d(np.asarray(x, dtype=np.float64))

    return TargetDensity(name, dim, log_gamma, grad, c)


_T_CONST = gammaln((STUDENT_DOF + 1) / 2) - gammaln(STUDENT_DOF / 2) - 0.5 * math.log(STUDENT_DOF * math.pi)


def make_target(name, dim, rng=None, log_z_offset=0.0):
    """One of the five benchmark targets, normalized so ``log Z = log_z_offset``.

    ``rng`` is only consumed by ``mixture`` (component means ~ N(3, I)).
    Laplace and Student-t are products of independent 1-d marginals.
    """
    dim = int(dim)
    if dim < 1:
        raise UsageError("dimension must be >= 1")
    if name == "gauss_shifted":
        return gaussian_target(DiagGaussian.isotropic(dim, 10.0, 1.0), log_z_offset, name)
    if name == "gauss_narrow":
        return gaussian_target(DiagGaussian.isotropic(dim, 0.0, 0.1), log_z_offset, name)
    if name == "mixture":
        if rng is None:
            raise UsageError("mixture target needs an rng for its component means")
        means = 3.0 + rng.standard_normal((MIXTURE_COMPONENTS, dim))
        return mixture_target(means, log_z_offset)
    if name == "laplace":
        return _product_target(
            name, dim, lambda x: -np.abs(x) - math.log(2.0), lambda x: -np.sign(x), log_z_offset
        )
    if name == "student_t":
        nu = STUDENT_DOF
        return _product_target(
            name,
            dim,
            lambda x: _T_CONST - 0.5 * (nu + 1) * np.log1p(x * x / nu),
            lambda x: -(nu + 1) * x / (nu + x * x),
            log_z_offset,
        )
    raise UsageError(f"unknown target {name!r}; expected one of {', '.join(TARGET_NAMES)}")


def default_initial(name, dim):
    """N(0, 9 I) for the mixture and the narrow Gaussian, N(0, I) otherwise."""
    var = 9.0 if name in ("mixture", "gauss_narrow") else 1.0
    return DiagGaussian.isotropic(dim, 0.0, var)


def linear_schedule(K):
    K = int(K)
    if K < 1:
        raise UsageError("number of annealing steps must be >= 1")
    return np.arange(K + 1, dtype=np.float64) / K


@dataclass(frozen=True)
class AnnealedPath:
    """gamma_k = pi0^(1 - beta_k) * gamma^beta_k."""

    pi0: DiagGaussian
    target: TargetDensity
    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 2:
            raise UsageError("schedule needs at least two entries")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) < 0):
            raise UsageError("schedule must start at 0, end at 1 and be nondecreasing")
        if self.pi0.dim != self.target.dim:
            raise UsageError("initial distribution and target dimensions differ")
        object.__setattr__(self, "betas", b)

    @property
    def K(self):
        return self.betas.size - 1

    @property
    def dim(self):
        return self.pi0.dim

    def _beta(self, k):
        if not 0 <= k <= self.K:
            raise UsageError(f"step index {k} outside 0..{self.K}")
        return self.betas[k]

    # lp + beta (lg - lp) keeps gamma_k == pi0 exactly when gamma == pi0;
    # the endpoints are returned untouched.
    def logpdf(self, k, x):
        b = self._beta(k)
        lp = gaussian_logpdf(x, self.pi0)
        if b == 0.0:
            return lp
        lg = self.target.log_gamma(x)
        if b == 1.0:
            return lg
        return lp + b * (lg - lp)

    def grad(self, k, x):
        b = self._beta(k)
        gp = gaussian_grad_logpdf(x, self.pi0)
        if b == 0.0:
            return gp
        gg = self.target.grad_log_gamma(x)
        if b == 1.0:
            return gg
        return gp + b * (gg - gp)


def annealed_logpdf(path, k, x):
    return path.logpdf(k, x)


def annealed_grad(path, k, x):
    return path.grad(k, x)
