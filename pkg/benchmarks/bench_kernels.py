"""Numba vs numpy timings for the hot kernels, plus a few end-to-end calls.

    python benchmarks/bench_kernels.py            # kernel table
    python benchmarks/bench_kernels.py --e2e      # also time sampler runs in both modes

End-to-end numbers for the numpy flavour come from a subprocess started with
MCDAIS_NUMBA=0, since the dispatch is fixed at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from mcdais import kernels
from mcdais._accel import HAVE_NUMBA


def best_of(fn, repeat=5):
    fn()  # warm-up, includes JIT compilation
    n = 1
    while timeit.timeit(fn, number=n) < 0.05:
        n *= 2
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def kernel_cases(rng):
    x = rng.normal(3, 3, (4096, 20))
    mean, var = rng.normal(size=20), rng.uniform(0.5, 2, 20)
    means = rng.normal(3, 1, (8, 20))
    K = 4096
    xi, sig = rng.uniform(0.5, 4, K), rng.uniform(0.5, 4, K)
    return [
        ("diag_gauss_logpdf 4096x20", lambda f: f(x, mean, var), "diag_gauss_logpdf"),
        ("mixture_logpdf_grad 4096x20, 8 comps", lambda f: f(x, means), "mixture_logpdf_grad"),
        ("ais_cross_sum K=4096, alpha=0.99", lambda f: f(xi, sig, 0.99), "ais_cross_sum"),
    ]


E2E = r"""
import json, timeit
from mcdais import *
from mcdais.trainer import training_batch, new_params, negative_backward_loglik_loss
path = AnnealedPath(default_initial("mixture", 20), make_target("mixture", 20, make_rng(0, 3)), linear_schedule(64))
ula, uha = UlaConfig(path, 0.05), UhaConfig(path, 0.8, 0.8)
run_ula(ula, make_rng(0), 8); run_uha(uha, make_rng(0), 8)
buf = training_batch(ula, 0, 0, 128)
net = new_params(ula, make_rng(1))
out = {
    "run_ula 1024 chains K=64": min(timeit.repeat(lambda: run_ula(ula, make_rng(0), 1024), number=1, repeat=3)),
    "run_uha 1024 chains K=64": min(timeit.repeat(lambda: run_uha(uha, make_rng(0), 1024), number=1, repeat=3)),
    "nll loss+grad batch 128": min(timeit.repeat(lambda: negative_backward_loglik_loss(net, ula, buf), number=1, repeat=3)),
}
print(json.dumps(out))
"""


def e2e(numba_on):
    env = dict(os.environ, MCDAIS_NUMBA="1" if numba_on else "0")
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--e2e", action="store_true", help="also time whole sampler runs in both modes")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for label, call, name in kernel_cases(rng):
        t_np = best_of(lambda: call(getattr(kernels, name + "_np")))
        if HAVE_NUMBA:
            t_nb = best_of(lambda: call(getattr(kernels, name + "_nb")))
            print(f"{label:40s} {t_np * 1e3:10.3f}ms {t_nb * 1e3:10.3f}ms {t_np / t_nb:7.1f}x")
        else:
            print(f"{label:40s} {t_np * 1e3:10.3f}ms {'n/a':>12s}")
    if args.e2e:
        a, b = e2e(False), e2e(True) if HAVE_NUMBA else {}
        print()
        print(f"{'end to end':40s} {'numpy':>12s} {'numba':>12s}")
        for key in a:
            nb = f"{b[key] * 1e3:10.1f}ms" if key in b else f"{'n/a':>12s}"
            print(f"{key:40s} {a[key] * 1e3:10.1f}ms {nb}")


if __name__ == "__main__":
    main()
