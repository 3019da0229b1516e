"""Random streams, diagonal Gaussians and a stable log-mean-exp.

Vectors are float64 arrays.  Functions that act on a single point also accept
a stack of points of shape ``(n, d)`` and then return one value per row.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels


class UsageError(ValueError):
    """Invalid arguments to a library or CLI call."""


def make_rng(seed, stream=0):
    """Philox generator keyed by ``(seed, stream)``.

    Equal pairs give identical draw sequences; different ``stream`` values
    (an int or a tuple of ints) give statistically independent sequences.
    """
    key = tuple(int(s) for s in stream) if isinstance(stream, (tuple, list)) else (int(stream),)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DiagGaussian:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        if var.shape == (1,) and mean.shape != (1,):
            var = np.full_like(mean, var[0])
        if mean.shape != var.shape or mean.ndim != 1:
            raise UsageError(f"mean shape {mean.shape} does not match variance shape {var.shape}")
        if not np.all(var > 0):
            raise UsageError("variance entries must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self):
        return self.mean.shape[0]

    @classmethod
    def isotropic(cls, dim, mean=0.0, var=1.0):
        return cls(np.full(dim, float(mean)), np.full(dim, float(var)))


def _as_rows(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.ndim != 2 or rows.shape[1] != dim:
        raise UsageError(f"expected points of dimension {dim}, got shape {x.shape}")
    return rows, single


def gaussian_logpdf(x, g):
    rows, single = _as_rows(x, g.dim)
    out = kernels.diag_gauss_logpdf(np.ascontiguousarray(rows), g.mean, g.var)
    return float(out[0]) if single else out


def gaussian_grad_logpdf(x, g):
    return -(np.asarray(x, dtype=np.float64) - g.mean) / g.var


def sample_gaussian(rng, g, n=None):
    """Draw ``mean + sqrt(var) * eps``; uses exactly ``d`` normals per point."""
    shape = (g.dim,) if n is None else (n, g.dim)
    return g.mean + np.sqrt(g.var) * rng.standard_normal(shape)


def log_mean_exp(values):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise UsageError("log_mean_exp of an empty array")
    m = np.max(v)
    if not np.isfinite(m):
        # all -inf gives -inf; any +inf or nan propagates
        return float(m) if m == -np.inf or np.isnan(m) else float("inf")
    return float(m + np.log(np.mean(np.exp(v - m))))
