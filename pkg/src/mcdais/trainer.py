"""Fitting the score model by maximizing the ELBO over backward kernels.

The forward sampler never reads the network, so a batch of trajectories is a
fixed dataset for the loss; no gradient flows through the chain.
"""

from dataclasses import dataclass, field
import csv
import hashlib
import json
import logging
import math
import time

import numpy as np

from .core import UsageError, log_mean_exp, make_rng
from .hamiltonian import UhaConfig, run_uha
from .langevin import UlaConfig, run_ula
from .scorenet import (
    adam_init,
    adam_step,
    forward_and_vjp,
    init_params,
    warm_start_uha,
    warm_start_ula,
)

log = logging.getLogger(__name__)

# rng stream ids, kept apart so training, evaluation and init never share draws
STREAM_INIT = 0
STREAM_TRAIN = 1
STREAM_EVAL = 2
STREAM_TARGET = 3  # mixture component means


class TrainingDiverged(RuntimeError):
    pass


def is_hamiltonian(cfg):
    return isinstance(cfg, UhaConfig)


def run_sampler(cfg, rng, n, score=None):
    if is_hamiltonian(cfg):
        return run_uha(cfg, rng, n, score)
    if isinstance(cfg, UlaConfig):
        return run_ula(cfg, rng, n, score)
    raise UsageError(f"unsupported sampler config {type(cfg).__name__}")


def make_score(cfg, params):
    if params is None:
        return None
    if is_hamiltonian(cfg):
        return warm_start_uha(params, cfg.mass_diag)
    return warm_start_ula(params, cfg.path)


def new_params(cfg, rng, hidden=64, t_dim=16, n_blocks=2):
    return init_params(
        cfg.path.dim, cfg.K, rng, hidden=hidden, t_dim=t_dim, n_blocks=n_blocks,
        with_momentum=is_hamiltonian(cfg),
    )


def config_hash(cfg):
    h = hashlib.sha256()
    h.update(type(cfg).__name__.encode())
    path = cfg.path
    h.update(path.target.name.encode())
    for arr in (path.pi0.mean, path.pi0.var, path.betas):
        h.update(np.ascontiguousarray(arr).tobytes())
    for key in ("delta", "eps", "mass_diag"):
        if hasattr(cfg, key):
            h.update(np.ascontiguousarray(getattr(cfg, key)).tobytes())
    if is_hamiltonian(cfg):
        h.update(repr((cfg.damping, cfg.n_leapfrog)).encode())
    return h.hexdigest()[:16]


@dataclass
class TrajectoryBuffer:
    traj: object
    seed: object = None
    config_hash: str = ""

    @property
    def valid(self):
        return ~self.traj.divergent


def _unwrap(buffer):
    return buffer.traj if isinstance(buffer, TrajectoryBuffer) else buffer


def elbo_estimate(buffer):
    """Sample mean and standard error of log w over non-divergent chains."""
    traj = _unwrap(buffer)
    lw = traj.log_w[~traj.divergent]
    if lw.size == 0:
        raise TrainingDiverged("every chain in the buffer diverged")
    se = float(np.std(lw, ddof=1) / math.sqrt(lw.size)) if lw.size > 1 else 0.0
    return float(np.mean(lw)), se


def _valid_steps(traj):
    keep = ~traj.divergent
    if not np.any(keep):
        raise TrainingDiverged("every chain in the buffer diverged")
    return keep, int(keep.sum())


def _stack_ula(cfg, traj, keep):
    """Rows (k, x_{k-1}, x_k) for k = 1..K, flattened to (K * n, d)."""
    states = traj.states[:, keep]
    K, n, d = cfg.K, states.shape[1], states.shape[2]
    ks = np.repeat(np.arange(1, K + 1), n)
    prev = states[:-1].reshape(K * n, d)
    cur = states[1:].reshape(K * n, d)
    delta = np.repeat(cfg.delta, n)[:, None]
    grad_cur = np.concatenate([cfg.path.grad(k, states[k]) for k in range(1, K + 1)])
    return ks, prev, cur, delta, grad_cur


def negative_backward_loglik_loss(params, cfg, buffer):
    """Mean over chains of -sum_k log B^theta_{k-1}; returns ``(loss, grads)``.

    Langevin: B_{k-1}(x_{k-1} | x_k) = N(x_k - delta g_k(x_k) + 2 delta s(k, x_k), 2 delta I).
    Hamiltonian: the momentum factor N(p_{k-1}; h f(k, x_{k-1}, p~_k), (1 - h^2) M).
    """
    traj = _unwrap(buffer)
    keep, n = _valid_steps(traj)
    if is_hamiltonian(cfg):
        return _uha_nll(params, cfg, traj, keep, n)
    ks, prev, cur, delta, g = _stack_ula(cfg, traj, keep)
    d = prev.shape[1]
    const = 0.5 * d * np.sum(np.log(4.0 * math.pi * cfg.delta))

    def cot(raw):
        s = raw + g
        r = prev - (cur + delta * (2.0 * s - g))
        value = np.sum(r * r / (4.0 * delta)) / n + const
        return value, -r / n

    return forward_and_vjp(params, ks, cur, None, cot)


def _uha_nll(params, cfg, traj, keep, n):
    K, d = cfg.K, cfg.path.dim
    h, zd, m = cfg.damping, cfg.zeta_delta, cfg.mass_diag
    ks = np.repeat(np.arange(1, K + 1), n)
    x_prev = traj.x[:-1, keep].reshape(K * n, d)
    p_prev = traj.p[:-1, keep].reshape(K * n, d)
    pt = traj.p_tilde[:, keep].reshape(K * n, d)
    var = (1.0 - h * h) * m
    const = 0.5 * K * np.sum(np.log(2.0 * math.pi * var))

    def cot(raw):
        s = raw - pt / m
        f = pt + 2.0 * zd * (m * (s + pt / m))
        r = p_prev - h * f
        value = 0.5 * np.sum(r * r / var) / n + const
        return value, -(2.0 * zd * h / (1.0 - h * h)) * r / n

    return forward_and_vjp(params, ks, x_prev, pt, cot)


def score_matching_loss(params, cfg, buffer):
    """Mean over chains of sum_k delta_k || s(k, x_k) - grad_{x_k} log F_k(x_k | x_{k-1}) ||^2.

    Langevin buffers only.
    """
    if is_hamiltonian(cfg):
        raise UsageError("the score-matching loss is defined for Langevin buffers only")
    traj = _unwrap(buffer)
    keep, n = _valid_steps(traj)
    ks, prev, cur, delta, g_cur = _stack_ula(cfg, traj, keep)
    K = cfg.K
    states = traj.states[:, keep]
    g_prev = np.concatenate([cfg.path.grad(k, states[k - 1]) for k in range(1, K + 1)])
    target = -(cur - prev - delta * g_prev) / (2.0 * delta)

    def cot(raw):
        r = raw + g_cur - target
        return np.sum(delta * r * r) / n, 2.0 * delta * r / n

    return forward_and_vjp(params, ks, cur, None, cot)


LOSSES = {"nll": negative_backward_loglik_loss, "score_matching": score_matching_loss}


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    elbo: list = field(default_factory=list)  # (iteration, mean, se)
    divergent: list = field(default_factory=list)
    log_z: float = float("nan")
    log_z_se: float = float("nan")
    wall_clock: float = 0.0

    def write_csv(self, path):
        elbo = {it: (m, s) for it, m, s in self.elbo}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "elbo", "elbo_se"])
            for i, loss in enumerate(self.losses, start=1):
                m, s = elbo.get(i, (float("nan"), float("nan")))
                w.writerow([i, "%.17g" % loss, "%.17g" % m, "%.17g" % s])

    def summary(self):
        return {
            "iterations": len(self.losses),
            "final_loss": self.losses[-1] if self.losses else None,
            "elbo": [list(e) for e in self.elbo],
            "log_z": self.log_z,
            "log_z_se": self.log_z_se,
            "wall_clock": self.wall_clock,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def training_batch(cfg, seed, iteration, batch):
    """Trajectories for one iteration; depends only on (seed, iteration)."""
    rng = make_rng(seed, (STREAM_TRAIN, iteration))
    return TrajectoryBuffer(run_sampler(cfg, rng, batch), (seed, iteration), config_hash(cfg))


def log_z_estimate(cfg, params, n_particles, seed, chunk=4096):
    """log-mean-exp of the weights over ``n_particles`` chains, plus the ELBO.

    Diverged chains enter with weight zero.  Returns
    ``(log_z, log_z_se, elbo_mean, elbo_se, n_divergent)`` where the standard
    error of log Z is the delta-method one.
    """
    score = make_score(cfg, params)
    rng = make_rng(seed, STREAM_EVAL)
    parts, div = [], 0
    for start in range(0, n_particles, chunk):
        t = run_sampler(cfg, rng, min(chunk, n_particles - start), score)
        parts.append(t.log_w)
        div += int(t.divergent.sum())
    lw = np.concatenate(parts)
    lz = log_mean_exp(lw)
    finite = lw[np.isfinite(lw)]
    if finite.size == 0:
        return lz, float("nan"), float("nan"), float("nan"), div
    w = np.exp(lw - np.max(finite))
    wm = w.mean()
    lz_se = float(np.std(w, ddof=1) / math.sqrt(w.size) / wm) if w.size > 1 and wm > 0 else float("nan")
    em = float(finite.mean())
    es = float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else 0.0
    return lz, lz_se, em, es, div


def train(
    cfg,
    iterations,
    batch=128,
    lr=1e-3,
    seed=0,
    loss="nll",
    params=None,
    adam=None,
    start_iteration=0,
    eval_every=0,
    eval_particles=1024,
    fixed_buffer=False,
    max_divergent_fraction=0.5,
    net_kwargs=None,
    callback=None,
):
    """Fit the score model with Adam; returns ``(params, adam, report)``.

    Each iteration draws a fresh batch from the forward sampler unless
    ``fixed_buffer`` reuses the first one.  ``start_iteration`` with a saved
    ``params``/``adam`` pair resumes a run exactly.
    """
    if loss not in LOSSES:
        raise UsageError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}")
    loss_fn = LOSSES[loss]
    if params is None:
        params = new_params(cfg, make_rng(seed, STREAM_INIT), **(net_kwargs or {}))
    if adam is None:
        adam = adam_init(params, lr=lr)
    report = TrainReport()
    t0 = time.perf_counter()
    buf = training_batch(cfg, seed, 0, batch) if fixed_buffer else None
    for it in range(start_iteration, start_iteration + int(iterations)):
        if not fixed_buffer:
            buf = training_batch(cfg, seed, it, batch)
        frac = float(buf.traj.divergent.mean())
        report.divergent.append(frac)
        if frac > max_divergent_fraction:
            raise TrainingDiverged(f"iteration {it}: {frac:.0%} of the batch diverged")
        value, grads = loss_fn(params, cfg, buf)
        params, adam = adam_step(adam, params, grads)
        report.losses.append(float(value))
        done = it + 1 - start_iteration
        if eval_every and done % eval_every == 0:
            t = run_sampler(cfg, make_rng(seed, STREAM_EVAL), eval_particles, make_score(cfg, params))
            m, s = elbo_estimate(t)
            report.elbo.append((done, m, s))
            log.info("iter %d loss %.4f elbo %.4f +- %.4f", done, value, m, s)
        if callback is not None:
            callback(it, params, adam, value)
    report.wall_clock = time.perf_counter() - t0
    return params, adam, report
