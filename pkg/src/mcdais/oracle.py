"""Exact log-weight statistics for a 1-d linear-Gaussian annealing chain.

The chain anneals from N(0, s0) to the unnormalized exp(-x^2 / (2 s)) through
variances s_k = s0^(1 - k/K) s^(k/K), moving with the exact pi_k-invariant
kernel ``x_k = a x_{k-1} + sqrt(1 - a^2) sigma_k eps``.  Under that proposal
every x_k is N(0, xi_k^2), which gives closed forms for the mean and variance
of the AIS weight and of the marginal weight gamma(x_K) / q_K(x_K).
"""

from dataclasses import asdict, dataclass
import csv
import math

import numpy as np

from . import kernels
from .core import DiagGaussian, UsageError
from .targets import AnnealedPath, gaussian_target

ESTIMATORS = ("ais", "mar")


@dataclass(frozen=True)
class OracleSpec:
    sigma0_sq: float
    sigma_sq: float
    K: int
    alpha: float

    def __post_init__(self):
        s0, s, a = float(self.sigma0_sq), float(self.sigma_sq), float(self.alpha)
        if not 0.0 < s < s0:
            raise UsageError("need 0 < sigma_sq < sigma0_sq")
        if int(self.K) < 1:
            raise UsageError("K must be >= 1")
        if not 0.0 <= a < 1.0:
            raise UsageError("alpha must lie in [0, 1)")
        object.__setattr__(self, "sigma0_sq", s0)
        object.__setattr__(self, "sigma_sq", s)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "alpha", a)

    @property
    def variances(self):
        """sigma_0^2 .. sigma_K^2."""
        t = np.arange(self.K + 1) / self.K
        return self.sigma0_sq ** (1.0 - t) * self.sigma_sq**t

    @property
    def beta_K(self):
        return (self.sigma_sq / self.sigma0_sq) ** (1.0 / self.K)

    @property
    def log_z(self):
        # gamma_K is left unnormalized, so this is not zero
        return 0.5 * math.log(2.0 * math.pi * self.sigma_sq)

    def xi_sq(self):
        sig = self.variances
        a2 = self.alpha * self.alpha
        xi = np.empty(self.K + 1)
        xi[0] = self.sigma0_sq
        for k in range(1, self.K + 1):
            xi[k] = a2 * xi[k - 1] + (1.0 - a2) * sig[k]
        return xi

    def annealed_path(self):
        """The same chain as a geometric path, for the generic AIS machinery.

        pi0^(1-b) gamma^b has precision (1-b)/s0 + b/s, so matching 1/sigma_k^2
        fixes b_k; the target carries +log Z so that gamma = exp(-x^2/(2 s)).
        """
        prec = 1.0 / self.variances
        betas = (prec - prec[0]) / (prec[-1] - prec[0])
        betas[0], betas[-1] = 0.0, 1.0
        target = gaussian_target(DiagGaussian([0.0], [self.sigma_sq]), self.log_z, "oracle")
        return AnnealedPath(DiagGaussian([0.0], [self.sigma0_sq]), target, betas)


@dataclass(frozen=True)
class OracleResult:
    xi_sq: np.ndarray
    mean_ais: float
    var_ais: float
    mean_mar: float
    var_mar: float


def oracle_closed_form(spec):
    sig = spec.variances
    xi = spec.xi_sq()
    bm1 = spec.beta_K - 1.0
    xk, sk = xi[-1], sig[-1]
    c = 1.0 / xk - 1.0 / sk
    mean_mar = 0.5 * math.log(2.0 * math.pi * xk) + 0.5 * c * xk
    var_mar = 0.5 * c * c * xk * xk
    prev, cur = xi[:-1], sig[1:]
    mean_ais = 0.5 * math.log(2.0 * math.pi * spec.sigma0_sq) + 0.5 * bm1 * float(np.sum(prev / cur))
    diag = float(np.sum(prev * prev / (2.0 * cur * cur)))
    cross = kernels.ais_cross_sum(np.ascontiguousarray(prev), np.ascontiguousarray(cur), spec.alpha)
    var_ais = bm1 * bm1 * (diag + cross)
    return OracleResult(xi, float(mean_ais), float(var_ais), float(mean_mar), float(var_mar))


def _mean_var_se(v):
    n = v.size
    m = float(np.mean(v))
    c = v - m
    s2 = float(np.mean(c * c))
    mu4 = float(np.mean(c**4))
    var = s2 * n / (n - 1)
    return {
        "mean": m,
        "mean_se": math.sqrt(var / n),
        "var": var,
        "var_se": math.sqrt(max(mu4 - s2 * s2, 0.0) / n),
    }


def simulate_log_weights(spec, n_chains, rng):
    """Per-chain ``(log_w_ais, log_w_mar, x_K)`` from the exact-kernel chain."""
    n = int(n_chains)
    sig = spec.variances
    a = spec.alpha
    bm1 = spec.beta_K - 1.0
    x = math.sqrt(spec.sigma0_sq) * rng.standard_normal(n)
    acc = np.zeros(n)
    for k in range(1, spec.K + 1):
        acc += x * x / sig[k]
        x = a * x + math.sqrt((1.0 - a * a) * sig[k]) * rng.standard_normal(n)
    lw_ais = 0.5 * math.log(2.0 * math.pi * spec.sigma0_sq) + 0.5 * bm1 * acc
    xk = spec.xi_sq()[-1]
    x2 = x * x
    lw_mar = -x2 / (2.0 * spec.sigma_sq) + 0.5 * math.log(2.0 * math.pi * xk) + x2 / (2.0 * xk)
    return lw_ais, lw_mar, x


def oracle_simulate(spec, n_chains, rng):
    """Empirical mean/variance (with standard errors) of both log-weights.

    Keys: ``{ais,mar}_{mean,mean_se,var,var_se}``.
    """
    if int(n_chains) < 2:
        raise UsageError("need at least two chains")
    lw_ais, lw_mar, _ = simulate_log_weights(spec, n_chains, rng)
    out = {}
    for name, v in (("ais", lw_ais), ("mar", lw_mar)):
        for key, val in _mean_var_se(v).items():
            out[f"{name}_{key}"] = val
    return out


FIGURE_COLUMNS = ("K", "alpha", "estimator", "mean", "variance", "bias", "rmse")


def oracle_figure_data(sigma0_sq, sigma_sq, K_grid, alpha_grid):
    """Rows of (K, alpha, estimator, mean, variance, bias, rmse), two per grid point.

    rmse = sqrt(bias^2 + variance) with bias measured against the chain's log Z.
    """
    rows = []
    for K in K_grid:
        for alpha in alpha_grid:
            spec = OracleSpec(sigma0_sq, sigma_sq, K, alpha)
            res = oracle_closed_form(spec)
            for est in ESTIMATORS:
                mean = getattr(res, f"mean_{est}")
                var = getattr(res, f"var_{est}")
                bias = mean - spec.log_z
                rows.append(
                    {
                        "K": spec.K,
                        "alpha": spec.alpha,
                        "estimator": est,
                        "mean": mean,
                        "variance": var,
                        "bias": bias,
                        "rmse": math.sqrt(bias * bias + var),
                    }
                )
    return rows


def write_figure_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIGURE_COLUMNS)
        for r in rows:
            w.writerow([("%.17g" % r[c]) if isinstance(r[c], float) else r[c] for c in FIGURE_COLUMNS])


def result_dict(spec, res, sim=None):
    """JSON-ready view of a closed-form result plus optional simulation stats."""
    out = {
        "spec": asdict(spec),
        "log_z": spec.log_z,
        "beta_K": spec.beta_K,
        "closed_form": {
            "mean_ais": res.mean_ais,
            "var_ais": res.var_ais,
            "mean_mar": res.mean_mar,
            "var_mar": res.var_mar,
            "xi_sq": res.xi_sq.tolist(),
        },
    }
    if sim is not None:
        out["simulated"] = dict(sim)
    return out
