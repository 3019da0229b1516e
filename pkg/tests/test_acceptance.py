"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; conftest prints them after the run.
Run alone with ``pytest tests/test_acceptance.py -v``.  Criteria 7 and 8
train score networks and take a few minutes on one core.
"""

import math

import numpy as np
import pytest

from mcdais import (
    AnnealedPath,
    DiagGaussian,
    OracleSpec,
    UhaConfig,
    UlaConfig,
    gaussian_logpdf,
    init_params,
    leapfrog,
    linear_schedule,
    make_rng,
    make_target,
    default_initial,
    negative_backward_loglik_loss,
    oracle_closed_form,
    oracle_simulate,
    run_uha,
    run_ula,
    score_matching_loss,
    scorenet_backward,
    scorenet_forward,
    warm_start_uha,
    warm_start_ula,
)
from mcdais.cli import RunConfig, run_experiment
from mcdais.hamiltonian import flip
from mcdais.targets import gaussian_target
from mcdais.trainer import TrajectoryBuffer, run_sampler

RESULTS = []


def record(n, title, ok, detail):
    line = f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def perturbed(params, rng, scale=0.3):
    return params.replace_arrays({k: v + scale * rng.standard_normal(v.shape) for k, v in params.arrays.items()})


def rel_fd_error(f, grads, arrays, h=1e-6):
    """max over groups of ||central difference - analytic|| / ||analytic||."""
    worst = 0.0
    for name, arr in arrays.items():
        fd = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            hi = f()
            arr[idx] = old - h
            lo = f()
            arr[idx] = old
            fd[idx] = (hi - lo) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - grads[name]) / np.linalg.norm(grads[name]))
    return worst


def test_criterion_1_oracle_agreement():
    worst, checks = 0.0, 0
    for K in (8, 64):
        for j, alpha in enumerate((0.0, 0.5, 0.9)):
            spec = OracleSpec(4.0, 1.0, K, alpha)
            cf = oracle_closed_form(spec)
            sim = oracle_simulate(spec, 10**5, make_rng(2024, (K, j)))
            for est in ("ais", "mar"):
                for stat in ("mean", "var"):
                    # deterministic weights (alpha = 0 marginal) have zero SE
                    se = max(sim[f"{est}_{stat}_se"], 1e-12)
                    z = abs(sim[f"{est}_{stat}"] - getattr(cf, f"{stat}_{est}")) / se
                    worst = max(worst, z)
                    checks += 1
    record(1, "oracle closed form vs 1e5-chain simulation", worst <= 3.0,
           f"{checks} statistics, largest deviation {worst:.2f} SE (limit 3)")


def test_criterion_2_unbiasedness():
    g = DiagGaussian([0.0], [1.0])
    path = AnnealedPath(g, gaussian_target(DiagGaussian([1.0], [1.0])), linear_schedule(32))
    ula = UlaConfig(path, 0.003)
    uha = UhaConfig(path, 0.3, 0.995)
    wrong = 0.5
    runs = {
        "ula-ais": run_ula(ula, make_rng(7, 1), 10**6),
        "ula-mcd(s=0.5)": run_ula(ula, make_rng(7, 2), 10**6, score=lambda k, x: np.full_like(x, wrong)),
        "uha-ais": run_uha(uha, make_rng(7, 3), 10**6),
        "uha-mcd(s=0.5)": run_uha(uha, make_rng(7, 4), 10**6, score=lambda k, x, p: np.full_like(x, wrong)),
    }
    parts, ok = [], True
    for name, t in runs.items():
        w = np.exp(t.log_w)
        z = (w.mean() - 1.0) / (w.std(ddof=1) / math.sqrt(w.size))
        ok &= abs(z) <= 3.0
        parts.append(f"{name} E[w]={w.mean():.4f} ({z:+.2f} SE)")
    # the wrong score must really change the weights: its ELBO drops well below the AIS one
    for fam in ("ula", "uha"):
        a, b = runs[f"{fam}-ais"].log_w, runs[f"{fam}-mcd(s=0.5)"].log_w
        gap = (a.mean() - b.mean()) / (math.hypot(a.std(), b.std()) / math.sqrt(a.size))
        ok &= gap > 5
        parts.append(f"{fam} ELBO gap {a.mean() - b.mean():.3f} nats")
    record(2, "E[w] = Z with 1e6 particles, K=32", ok, "; ".join(parts))


def test_criterion_3_warm_start_degeneracy():
    target = make_target("mixture", 5, make_rng(0, 3))
    path = AnnealedPath(default_initial("mixture", 5), target, linear_schedule(16))
    ula = UlaConfig(path, 0.05)
    a = run_ula(ula, make_rng(11), 512)
    b = run_ula(ula, make_rng(11), 512, score=warm_start_ula(init_params(5, 16, make_rng(1)), path))
    mass = np.linspace(0.5, 2.0, 5)
    uha = UhaConfig(path, 0.4, 0.8, mass)
    c = run_uha(uha, make_rng(12), 512)
    net = init_params(5, 16, make_rng(2), with_momentum=True)
    d = run_uha(uha, make_rng(12), 512, score=warm_start_uha(net, mass))
    ok_ula = np.array_equal(a.log_w, b.log_w) and np.array_equal(a.states, b.states)
    ok_uha = np.array_equal(c.log_w, d.log_w) and np.array_equal(c.x, d.x) and np.array_equal(c.p, d.p)
    record(3, "fresh MCD == AIS bit for bit", ok_ula and ok_uha,
           f"ULA equal={ok_ula}, UHA equal={ok_uha} (512 chains each)")


def test_criterion_4_integrator_properties():
    rng = make_rng(4)
    path = AnnealedPath(default_initial("mixture", 3), make_target("mixture", 3, make_rng(0, 3)), linear_schedule(8))
    m = np.array([0.7, 1.0, 1.8])
    eps, k = 0.25, 5
    rev, det = 0.0, 0.0
    for _ in range(100):
        x, p = rng.normal(2.0, 2.0, (1, 3)), rng.standard_normal((1, 3)) * np.sqrt(m)
        x1, p1 = flip(*leapfrog(path, k, x, p, eps, m))
        x2, p2 = flip(*leapfrog(path, k, x1, p1, eps, m))
        rev = max(rev, float(np.abs(x2 - x).max()), float(np.abs(p2 - p).max()))
        z = np.concatenate([x, p], axis=1)[0]
        J = np.empty((6, 6))
        for i in range(6):
            e = np.zeros(6)
            e[i] = 1e-6
            hi = np.concatenate(leapfrog(path, k, (z + e)[None, :3], (z + e)[None, 3:], eps, m), axis=1)[0]
            lo = np.concatenate(leapfrog(path, k, (z - e)[None, :3], (z - e)[None, 3:], eps, m), axis=1)[0]
            J[:, i] = (hi - lo) / 2e-6
        det = max(det, abs(np.linalg.det(J) - 1.0))
    h = 0.7
    db = 0.0
    var, mom = DiagGaussian(np.zeros(3), (1 - h * h) * m), DiagGaussian(np.zeros(3), m)
    for _ in range(100):
        a, b = rng.standard_normal((2, 3)) * 2
        lhs = gaussian_logpdf(a - h * b, var) - gaussian_logpdf(b - h * a, var)
        db = max(db, abs(lhs - (gaussian_logpdf(a, mom) - gaussian_logpdf(b, mom))))
    flat = DiagGaussian([0.5, -1.0, 2.0], [1.0, 0.3, 2.5])
    const = UhaConfig(AnnealedPath(flat, gaussian_target(flat), linear_schedule(20)), 0.3, 0.8, m)
    t = run_uha(const, make_rng(5), 1000)
    energy = float(np.abs(t.log_w + t.leapfrog_energy_deltas.sum(axis=0)).max())
    ok = rev < 1e-9 and det < 1e-6 and db < 1e-12 and energy < 1e-10
    record(4, "leapfrog and refresh identities", ok,
           f"reversibility {rev:.1e} (<1e-9), |det J - 1| {det:.1e} (<1e-6), "
           f"detailed balance {db:.1e} (<1e-12), energy identity {energy:.1e} (<1e-10)")


def test_criterion_5_gradients():
    rng = make_rng(5)
    net = perturbed(init_params(2, 4, rng, hidden=8, t_dim=4, n_blocks=1), rng)
    k, x, cot = rng.integers(0, 5, 6), rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    e_net = rel_fd_error(lambda: np.sum(cot * scorenet_forward(net, k, x)),
                         scorenet_backward(net, k, x, None, cot), net.arrays)
    target = make_target("mixture", 2, make_rng(0, 3))
    path = AnnealedPath(default_initial("mixture", 2), target, linear_schedule(4))
    ula = UlaConfig(path, 0.1)
    buf = TrajectoryBuffer(run_sampler(ula, make_rng(6), 5))
    e_nll = rel_fd_error(lambda: negative_backward_loglik_loss(net, ula, buf)[0],
                         negative_backward_loglik_loss(net, ula, buf)[1], net.arrays)
    e_sm = rel_fd_error(lambda: score_matching_loss(net, ula, buf)[0], score_matching_loss(net, ula, buf)[1], net.arrays)
    uha = UhaConfig(path, 0.3, 0.8, [1.0, 2.0])
    hnet = perturbed(init_params(2, 4, rng, hidden=8, t_dim=4, n_blocks=1, with_momentum=True), rng)
    hbuf = TrajectoryBuffer(run_sampler(uha, make_rng(7), 5))
    e_uha = rel_fd_error(lambda: negative_backward_loglik_loss(hnet, uha, hbuf)[0],
                         negative_backward_loglik_loss(hnet, uha, hbuf)[1], hnet.arrays)
    worst = max(e_net, e_nll, e_sm, e_uha)
    record(5, "analytic vs central-difference gradients", worst < 1e-5,
           f"network {e_net:.1e}, ULA NLL {e_nll:.1e}, score matching {e_sm:.1e}, UHA NLL {e_uha:.1e} (<1e-5)")


def test_criterion_6_loss_equivalence():
    target = make_target("laplace", 2)
    path = AnnealedPath(default_initial("laplace", 2), target, linear_schedule(16))
    cfg = UlaConfig(path, 1e-3)
    rng = make_rng(6)
    net = perturbed(init_params(2, 16, rng, hidden=16, t_dim=4, n_blocks=1), rng, 0.1)
    buf = TrajectoryBuffer(run_sampler(cfg, make_rng(16), 256))
    _, g1 = negative_backward_loglik_loss(net, cfg, buf)
    _, g2 = score_matching_loss(net, cfg, buf)
    v1 = np.concatenate([g1[n].ravel() for n in net.arrays])
    v2 = np.concatenate([g2[n].ravel() for n in net.arrays])
    cos = float(v1 @ v2 / (np.linalg.norm(v1) * np.linalg.norm(v2)))
    record(6, "score-matching vs NLL gradient direction at delta=1e-3", cos > 0.99, f"cosine {cos:.6f} (>0.99)")


@pytest.mark.slow
def test_criterion_7_shifted_gaussian():
    base = dict(target="gauss_shifted", dim=20, K=64, step_size=0.3, n_particles=16384, seed=0)
    ais = run_experiment(RunConfig(method="ula-ais", **base))
    mcd = run_experiment(RunConfig(method="ula-mcd", train_iters=1000, batch=128, lr=1e-3, **base))
    ok = ais.ok and mcd.ok and ais.log_z <= -20 and mcd.log_z >= -1.0 and mcd.log_z - ais.log_z >= 20
    record(7, "N(10,I) d=20 K=64: untrained ULA vs trained ULA-MCD", ok,
           f"ULA {ais.log_z:.3f} +- {ais.log_z_se:.3f} (<= -20), "
           f"ULA-MCD after 1000 iterations {mcd.log_z:.4f} +- {mcd.log_z_se:.4f} (>= -1.0), "
           f"gain {mcd.log_z - ais.log_z:.1f} nats")


@pytest.mark.slow
def test_criterion_8_mixture():
    base = dict(method="uha-mcd", target="mixture", dim=20, K=64, step_size=0.8, damping=0.8, n_particles=16384,
                train_iters=500, batch=128, lr=1e-3, target_seed=0)
    ests = []
    for seed in (0, 1, 2):
        r = run_experiment(RunConfig(seed=seed, **base))
        assert r.ok, r.error
        ests.append(r.log_z)
    mean = float(np.mean(ests))
    se = float(np.std(ests, ddof=1) / math.sqrt(len(ests)))
    ok = all(abs(e) <= 0.5 for e in ests)
    record(8, "mixture d=20 K=64 trained UHA-MCD, 3 seeds", ok,
           "estimates " + ", ".join(f"{e:+.4f}" for e in ests) + f" (each within +-0.5); mean {mean:+.4f} +- {se:.4f}")


if __name__ == "__main__":
    import sys

    import pytest

    sys.exit(pytest.main([__file__, "-v"]))
