"""Hot inner loops, each in a numba and a numpy flavour.

The public names at the bottom point at one flavour, picked once at import
from ``_accel.USE_NUMBA``.  Both flavours stay importable (``*_nb`` and
``*_np``) so the benchmark and the tests can compare them directly.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

LOG_2PI = math.log(2.0 * math.pi)


# --- diagonal Gaussian log-density, one value per row -----------------------

def diag_gauss_logpdf_np(x, mean, var):
    z = x - mean
    return -0.5 * (np.sum(np.log(var)) + x.shape[1] * LOG_2PI) - 0.5 * np.sum(z * z / var, axis=1)


@njit
def diag_gauss_logpdf_nb(x, mean, var):
    n, d = x.shape
    const = 0.0
    for j in range(d):
        const += math.log(var[j])
    const = -0.5 * (const + d * LOG_2PI)
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            z = x[i, j] - mean[j]
            acc += z * z / var[j]
        out[i] = const - 0.5 * acc
    return out


# --- equal-weight, unit-variance Gaussian mixture ---------------------------

def mixture_logpdf_grad_np(x, means):
    # (n, m) squared distances
    diff = x[:, None, :] - means[None, :, :]
    logc = -0.5 * np.sum(diff * diff, axis=2)
    mx = np.max(logc, axis=1, keepdims=True)
    e = np.exp(logc - mx)
    s = np.sum(e, axis=1, keepdims=True)
    d = x.shape[1]
    logp = (mx + np.log(s))[:, 0] - math.log(means.shape[0]) - 0.5 * d * LOG_2PI
    resp = e / s
    grad = -np.einsum("nm,nmd->nd", resp, diff)
    return logp, grad


@njit
def mixture_logpdf_grad_nb(x, means):
    n, d = x.shape
    m = means.shape[0]
    logp = np.empty(n)
    grad = np.empty((n, d))
    logc = np.empty(m)
    norm = -math.log(m) - 0.5 * d * LOG_2PI
    for i in range(n):
        mx = -np.inf
        for c in range(m):
            acc = 0.0
            for j in range(d):
                z = x[i, j] - means[c, j]
                acc += z * z
            logc[c] = -0.5 * acc
            if logc[c] > mx:
                mx = logc[c]
        s = 0.0
        for c in range(m):
            logc[c] = math.exp(logc[c] - mx)
            s += logc[c]
        logp[i] = mx + math.log(s) + norm
        for j in range(d):
            grad[i, j] = 0.0
        for c in range(m):
            r = logc[c] / s
            for j in range(d):
                grad[i, j] -= r * (x[i, j] - means[c, j])
    return logp, grad


# --- cross term of the AIS log-weight variance in the Gaussian chain --------

def ais_cross_sum_np(xi_sq_prev, sigma_sq, alpha):
    """sum_{l>k} alpha^{2(l-k)} xi_{k-1}^4 / (sigma_k^2 sigma_l^2), k,l in 1..K."""
    K = sigma_sq.shape[0]
    base = xi_sq_prev * xi_sq_prev / sigma_sq
    total = 0.0
    a2 = alpha * alpha
    pw = 1.0
    for lag in range(1, K):
        pw *= a2
        if pw == 0.0:
            break
        total += pw * float(np.sum(base[: K - lag] / sigma_sq[lag:]))
    return total


@njit
def ais_cross_sum_nb(xi_sq_prev, sigma_sq, alpha):
    K = sigma_sq.shape[0]
    total = 0.0
    a2 = alpha * alpha
    for k in range(K):
        base = xi_sq_prev[k] * xi_sq_prev[k] / sigma_sq[k]
        pw = 1.0
        for l in range(k + 1, K):
            pw *= a2
            total += pw * base / sigma_sq[l]
    return total


if USE_NUMBA:
    diag_gauss_logpdf = diag_gauss_logpdf_nb
    mixture_logpdf_grad = mixture_logpdf_grad_nb
    ais_cross_sum = ais_cross_sum_nb
else:
    diag_gauss_logpdf = diag_gauss_logpdf_np
    mixture_logpdf_grad = mixture_logpdf_grad_np
    ais_cross_sum = ais_cross_sum_np

BACKEND = "numba" if USE_NUMBA else "numpy"
