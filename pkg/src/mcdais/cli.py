"""Command-line experiment runner.

    mcdais run --config exp.json [--method ula-mcd] [--steps 64] ...
    mcdais suite --config grid.json --seeds 0,1,2
    mcdais oracle --sigma0-sq 4 --sigma-sq 1 --steps 8 --alpha 0.5 --simulate 100000

Configs are JSON.  Command-line flags override the matching config key.
Result files never contain timings, so reruns are byte-identical; wall-clock
goes to stderr.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .core import UsageError, make_rng
from .hamiltonian import UhaConfig
from .langevin import UlaConfig
from .oracle import OracleSpec, oracle_closed_form, oracle_figure_data, oracle_simulate, result_dict, write_figure_csv
from .scorenet import save_checkpoint
from .targets import TARGET_NAMES, AnnealedPath, default_initial, linear_schedule, make_target
from .trainer import LOSSES, STREAM_TARGET, TrainingDiverged, log_z_estimate, train

log = logging.getLogger("mcdais")

METHODS = ("ula-ais", "ula-mcd", "uha-ais", "uha-mcd", "oracle")
FORMATS = ("json", "csv")

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 2, 3


class ConfigError(UsageError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    method: str = "ula-ais"
    target: str = "gauss_shifted"
    dim: int = 20
    K: int = 64
    step_size: object = None  # float or per-step list
    damping: float = 0.9
    mass: object = 1.0  # float or per-dimension list
    n_leapfrog: int = 1
    n_particles: int = 16384
    train_iters: object = None
    batch: int = 128
    lr: float = 1e-3
    loss: str = "nll"
    hidden: int = 64
    t_dim: int = 16
    n_blocks: int = 2
    eval_every: int = 0
    seed: int = 0
    target_seed: int = 0
    sigma0_sq: object = None
    sigma_sq: object = None
    alpha: object = None
    simulate: int = 0
    checkpoint: object = None
    train_log: object = None
    out: object = None
    format: str = "json"

    def __post_init__(self):
        self.validate()

    @property
    def is_mcd(self):
        return self.method.endswith("-mcd")

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.method in METHODS, "method", f"expected one of {', '.join(METHODS)}")
        need(self.format in FORMATS, "format", "expected json or csv")
        for name in ("seed", "target_seed"):
            need(_is_int(getattr(self, name)) and getattr(self, name) >= 0, name, "must be a nonnegative integer")
        if self.method == "oracle":
            for name in ("sigma0_sq", "sigma_sq", "alpha"):
                need(_is_num(getattr(self, name)), name, "required for the oracle method")
            need(_is_int(self.K) and self.K >= 1, "K", "must be an integer >= 1")
            need(_is_int(self.simulate) and self.simulate >= 0, "simulate", "must be a nonnegative integer")
            try:
                OracleSpec(self.sigma0_sq, self.sigma_sq, self.K, self.alpha)
            except UsageError as e:
                raise ConfigError("sigma_sq", str(e)) from None
            return
        need(self.target in TARGET_NAMES, "target", f"expected one of {', '.join(TARGET_NAMES)}")
        for name in ("dim", "K", "n_particles", "batch", "hidden", "t_dim", "n_blocks", "n_leapfrog"):
            need(_is_int(getattr(self, name)) and getattr(self, name) >= 1, name, "must be an integer >= 1")
        need(self.step_size is not None, "step_size", "required for sampler methods")
        need(_positive(self.step_size, self.K), "step_size", f"must be > 0, scalar or {self.K} entries")
        need(_positive(self.mass, self.dim), "mass", f"must be > 0, scalar or {self.dim} entries")
        need(_is_num(self.damping) and 0.0 < self.damping < 1.0, "damping", "must lie in (0, 1)")
        need(_is_int(self.eval_every) and self.eval_every >= 0, "eval_every", "must be >= 0")
        if self.is_mcd:
            need(self.train_iters is not None, "train_iters", "required for MCD methods")
            need(_is_int(self.train_iters) and self.train_iters >= 0, "train_iters", "must be >= 0")
            need(_is_num(self.lr) and self.lr > 0, "lr", "must be > 0")
            need(self.loss in LOSSES, "loss", f"expected one of {', '.join(sorted(LOSSES))}")
            need(not (self.loss == "score_matching" and self.method == "uha-mcd"), "loss",
                 "score_matching applies to ula-mcd only")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown config key")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON: {e}") from None
        return cls.from_dict(data)


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _positive(v, n):
    if _is_num(v):
        return v > 0
    return isinstance(v, list) and len(v) == n and all(_is_num(x) and x > 0 for x in v)


@dataclass
class RunResult:
    status: str
    config: dict
    build: str
    log_z: float = float("nan")
    log_z_se: float = float("nan")
    elbo_mean: float = float("nan")
    elbo_se: float = float("nan")
    n_divergent: int = 0
    wall_clock: float = 0.0
    train: object = None
    oracle: object = None
    target_params: dict = field(default_factory=dict)
    error: object = None

    def to_dict(self, timing=False):
        d = asdict(self)
        if not timing:
            d.pop("wall_clock")
            if d["train"]:
                d["train"].pop("wall_clock", None)
        return d

    @property
    def ok(self):
        return self.status == "ok"


def build_stamp():
    """Package version plus a digest of its sources."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def build_sampler(config):
    target = make_target(config.target, config.dim, make_rng(config.target_seed, STREAM_TARGET))
    path = AnnealedPath(default_initial(config.target, config.dim), target, linear_schedule(config.K))
    step = np.asarray(config.step_size, dtype=np.float64)
    if config.method.startswith("uha"):
        cfg = UhaConfig(path, step, config.damping, np.asarray(config.mass, np.float64), config.n_leapfrog)
    else:
        cfg = UlaConfig(path, step)
    return cfg, target


def run_experiment(config):
    """Run one configured experiment and return a RunResult (never raises on divergence)."""
    t0 = time.perf_counter()
    echo, stamp = config.to_dict(), build_stamp()
    if config.method == "oracle":
        spec = OracleSpec(config.sigma0_sq, config.sigma_sq, config.K, config.alpha)
        sim = oracle_simulate(spec, config.simulate, make_rng(config.seed)) if config.simulate else None
        return RunResult(
            "ok", echo, stamp, log_z=spec.log_z, oracle=result_dict(spec, oracle_closed_form(spec), sim),
            wall_clock=time.perf_counter() - t0,
        )
    cfg, target = build_sampler(config)
    tparams = {k: np.asarray(v).tolist() for k, v in target.params.items() if k == "means"}
    params, report = None, None
    if config.is_mcd:
        try:
            params, adam, report = train(
                cfg, config.train_iters, batch=config.batch, lr=config.lr, seed=config.seed, loss=config.loss,
                eval_every=config.eval_every,
                net_kwargs={"hidden": config.hidden, "t_dim": config.t_dim, "n_blocks": config.n_blocks},
            )
        except TrainingDiverged as e:
            return RunResult("diverged", echo, stamp, target_params=tparams, error=str(e),
                             wall_clock=time.perf_counter() - t0)
        if config.train_log:
            report.write_csv(config.train_log)
        if config.checkpoint:
            save_checkpoint(config.checkpoint, params, adam, {"config": echo})
    lz, lz_se, em, es, div = log_z_estimate(cfg, params, config.n_particles, config.seed)
    summary = None
    if report is not None:
        report.log_z, report.log_z_se = lz, lz_se
        summary = report.summary()
    status = "ok" if div < config.n_particles else "all_divergent"
    return RunResult(
        status, echo, stamp, lz, lz_se, em, es, div, time.perf_counter() - t0, summary,
        target_params=tparams, error=None if status == "ok" else "every chain diverged",
    )


# --- suites -----------------------------------------------------------------


def expand_grid(base, grid, seeds):
    """Cross product of ``grid`` values over ``base``, repeated per seed.

    Returns ``(cell_key, seed, RunConfig)`` triples; cells are keyed by the
    tuple of grid values in sorted-key order.
    """
    keys = sorted(grid)
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError(f"grid.{key}", "must be a nonempty list")
    jobs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        for seed in seeds:
            data = dict(base, **dict(zip(keys, values)), seed=int(seed))
            jobs.append((tuple(values), int(seed), RunConfig.from_dict(data)))
    return keys, jobs


def _run_cell(config):
    try:
        return run_experiment(config)
    except Exception as e:  # recorded per cell; the suite keeps going
        return RunResult("error", config.to_dict(), build_stamp(), error=f"{type(e).__name__}: {e}")


def _mean_se(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(np.mean(v)), se


def run_suite(base, grid, seeds, workers=1):
    """Run every grid cell for every seed; returns ``(cells, runs)``.

    ``cells`` holds mean and SE over seeds of the log-Z estimate and the ELBO.
    An MCD cell whose AIS twin (same other settings) is in the grid also gets
    ``ais_log_z`` for a side-by-side comparison.
    """
    keys, jobs = expand_grid(base, grid, seeds)
    configs = [j[2] for j in jobs]
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, configs))
    else:
        results = [_run_cell(c) for c in configs]
    runs, by_cell = [], {}
    for (cell, seed, _), res in zip(jobs, results):
        runs.append({**dict(zip(keys, cell)), "seed": seed, "status": res.status, "log_z": res.log_z,
                     "log_z_se": res.log_z_se, "elbo": res.elbo_mean, "n_divergent": res.n_divergent,
                     "error": res.error})
        by_cell.setdefault(cell, []).append(res)
    cells = []
    for cell, results_ in by_cell.items():
        good = [r for r in results_ if r.ok]
        lz, lz_se = _mean_se([r.log_z for r in good])
        el, el_se = _mean_se([r.elbo_mean for r in good])
        cells.append({**dict(zip(keys, cell)), "n_ok": len(good), "n_failed": len(results_) - len(good),
                      "log_z": lz, "log_z_se": lz_se, "elbo": el, "elbo_se": el_se})
    if "method" in keys:
        index = {tuple((k, c[k]) for k in keys): c for c in cells}
        for c in cells:
            if c["method"].endswith("-mcd"):
                twin = tuple((k, c["method"].replace("-mcd", "-ais") if k == "method" else c[k]) for k in keys)
                if twin in index:
                    c["ais_log_z"] = index[twin]["log_z"]
    return cells, runs


# --- output -----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return "" if v is None else v


def write_csv_rows(rows, fh):
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])


def _dump(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _finite(obj):
    # JSON has no NaN or inf; those become null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _json(obj):
    obj = json.loads(json.dumps(obj, default=_json_default))
    return json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def result_csv(res):
    row = {k: v for k, v in res.to_dict().items() if not isinstance(v, (dict, list)) or v is None}
    row.pop("config", None)
    buf = io.StringIO()
    write_csv_rows([row], buf)
    return buf.getvalue()


# --- argument parsing -------------------------------------------------------

# flag -> config key
RUN_FLAGS = {
    "--method": ("method", str),
    "--target": ("target", str),
    "--dim": ("dim", int),
    "--steps": ("K", int),
    "--step-size": ("step_size", float),
    "--damping": ("damping", float),
    "--mass": ("mass", float),
    "--leapfrog": ("n_leapfrog", int),
    "--particles": ("n_particles", int),
    "--train-iters": ("train_iters", int),
    "--batch": ("batch", int),
    "--lr": ("lr", float),
    "--loss": ("loss", str),
    "--hidden": ("hidden", int),
    "--t-dim": ("t_dim", int),
    "--blocks": ("n_blocks", int),
    "--eval-every": ("eval_every", int),
    "--seed": ("seed", int),
    "--target-seed": ("target_seed", int),
    "--sigma0-sq": ("sigma0_sq", float),
    "--sigma-sq": ("sigma_sq", float),
    "--alpha": ("alpha", float),
    "--simulate": ("simulate", int),
    "--checkpoint": ("checkpoint", str),
    "--train-log": ("train_log", str),
    "--out": ("out", str),
    "--format": ("format", str),
}


def _int_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="mcdais", description="AIS and Monte Carlo Diffusion evidence estimates.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="JSON config file")
    for flag, (key, typ) in RUN_FLAGS.items():
        run.add_argument(flag, dest=key, type=typ, default=None)
    run.add_argument("--dump-config", action="store_true", help="print the merged config and exit")

    suite = sub.add_parser("suite", help="run a grid of experiments over several seeds")
    suite.add_argument("--config", required=True, help='JSON file with "base" and "grid" objects')
    suite.add_argument("--seeds", type=_int_list, default=[0])
    suite.add_argument("--workers", type=int, default=1)
    suite.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.csv")

    orc = sub.add_parser("oracle", help="closed-form log-weight statistics of the Gaussian chain")
    orc.add_argument("--sigma0-sq", type=float, required=True)
    orc.add_argument("--sigma-sq", type=float, required=True)
    orc.add_argument("--steps", type=int, required=True)
    orc.add_argument("--alpha", type=float, required=True)
    orc.add_argument("--simulate", type=int, default=0, help="also simulate this many chains")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--k-grid", type=_int_list, help="with --alpha-grid: write the K x alpha RMSE table as CSV")
    orc.add_argument("--alpha-grid", type=_float_list)
    orc.add_argument("--out")
    return ap


def load_run_config(args):
    data = {}
    if args.config:
        data = _read_json(args.config)
    for key, _ in RUN_FLAGS.values():
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    return RunConfig.from_dict(data)


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON in {path}: {e}") from None


def _cmd_run(args):
    config = load_run_config(args)
    if args.dump_config:
        _dump(config.to_json(), config.out)
        return EXIT_OK
    res = run_experiment(config)
    log.info("wall clock %.2fs", res.wall_clock)
    text = _json(res.to_dict()) if config.format == "json" else result_csv(res)
    _dump(text, config.out)
    if not res.ok:
        _error(res.status, res.error)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_suite(args):
    spec = _read_json(args.config)
    if not isinstance(spec, dict) or "grid" not in spec:
        raise ConfigError("grid", "suite config needs a grid object")
    base = spec.get("base", {})
    t0 = time.perf_counter()
    cells, runs = run_suite(base, spec["grid"], args.seeds, max(1, args.workers))
    log.info("suite wall clock %.2fs", time.perf_counter() - t0)
    summary = {"base": base, "grid": spec["grid"], "seeds": args.seeds, "build": build_stamp(),
               "cells": cells, "runs": runs}
    buf = io.StringIO()
    write_csv_rows(cells, buf)
    if args.out:
        Path(args.out + ".json").write_text(_json(summary))
        Path(args.out + ".csv").write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK if all(c["n_failed"] == 0 for c in cells) else EXIT_FAILED


def _cmd_oracle(args):
    try:
        spec = OracleSpec(args.sigma0_sq, args.sigma_sq, args.steps, args.alpha)
    except UsageError as e:
        raise ConfigError("sigma_sq", str(e)) from None
    if (args.k_grid is None) != (args.alpha_grid is None):
        raise ConfigError("k_grid", "--k-grid and --alpha-grid go together")
    if args.k_grid is not None:
        rows = oracle_figure_data(spec.sigma0_sq, spec.sigma_sq, args.k_grid, args.alpha_grid)
        if args.out:
            write_figure_csv(rows, args.out)
        else:
            write_csv_rows(rows, sys.stdout)
        return EXIT_OK
    sim = oracle_simulate(spec, args.simulate, make_rng(args.seed)) if args.simulate else None
    _dump(_json(result_dict(spec, oracle_closed_form(spec), sim)), args.out)
    return EXIT_OK


def _error(kind, message, field_name=None):
    err = {"error": kind, "message": message}
    if field_name:
        err["field"] = field_name
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    commands = {"run": _cmd_run, "suite": _cmd_suite, "oracle": _cmd_oracle}
    try:
        return commands[args.command](args)
    except ConfigError as e:
        _error("config", str(e), e.field)
    except UsageError as e:
        _error("usage", str(e))
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
