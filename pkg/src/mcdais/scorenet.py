"""Residual MLP score model with hand-written reverse mode, plus Adam.

Layout (``d_in = d`` for Langevin, ``2 d`` when momentum is concatenated)::

    h = [x, p] W_in + b_in
    e = E[k]                                     learned table, one row per step
    repeat n_blocks:
        u = swish(layernorm(h) * g + beta)
        a = swish(u W1 + b1 + e Wt + bt)         d_h -> 2 d_h
        h = h + a W2 + b2                        2 d_h -> d_h
    out = h W_out + b_out                        zero at init

Every function takes a batch: ``k`` is an int or an ``(n,)`` int array, ``x``
and ``p`` are ``(n, d)``.
"""

from dataclasses import dataclass, field
import io
import json
import struct

import numpy as np

from .core import UsageError

LN_EPS = 1e-12
CKPT_MAGIC = b"MCDAIS-CKPT\n"
CKPT_VERSION = 1


@dataclass
class ScoreNetParams:
    dim: int
    n_steps: int
    hidden: int = 64
    t_dim: int = 16
    n_blocks: int = 2
    with_momentum: bool = False
    arrays: dict = field(default_factory=dict)

    @property
    def in_dim(self):
        return 2 * self.dim if self.with_momentum else self.dim

    def meta(self):
        return {
            "dim": self.dim,
            "n_steps": self.n_steps,
            "hidden": self.hidden,
            "t_dim": self.t_dim,
            "n_blocks": self.n_blocks,
            "with_momentum": self.with_momentum,
        }

    def n_params(self):
        return int(sum(a.size for a in self.arrays.values()))

    def replace_arrays(self, arrays):
        return ScoreNetParams(**self.meta(), arrays=arrays)

    def copy(self):
        return self.replace_arrays({k: v.copy() for k, v in self.arrays.items()})


def param_shapes(dim, n_steps, hidden, t_dim, n_blocks, with_momentum):
    d_in = 2 * dim if with_momentum else dim
    shapes = {"W_in": (d_in, hidden), "b_in": (hidden,), "embed": (n_steps + 1, t_dim)}
    for b in range(n_blocks):
        shapes[f"ln_g{b}"] = (hidden,)
        shapes[f"ln_b{b}"] = (hidden,)
        shapes[f"W1_{b}"] = (hidden, 2 * hidden)
        shapes[f"b1_{b}"] = (2 * hidden,)
        shapes[f"Wt_{b}"] = (t_dim, 2 * hidden)
        shapes[f"bt_{b}"] = (2 * hidden,)
        shapes[f"W2_{b}"] = (2 * hidden, hidden)
        shapes[f"b2_{b}"] = (hidden,)
    shapes["W_out"] = (hidden, dim)
    shapes["b_out"] = (dim,)
    return shapes


def init_params(dim, n_steps, rng, hidden=64, t_dim=16, n_blocks=2, with_momentum=False):
    shapes = param_shapes(dim, n_steps, hidden, t_dim, n_blocks, with_momentum)
    arrays = {}
    for name, shape in shapes.items():
        if name.startswith(("b", "ln_b")) or name in ("W_out", "b_out"):
            arrays[name] = np.zeros(shape)
        elif name.startswith("ln_g"):
            arrays[name] = np.ones(shape)
        elif name == "embed":
            arrays[name] = rng.standard_normal(shape)
        else:
            arrays[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
    return ScoreNetParams(dim, n_steps, hidden, t_dim, n_blocks, with_momentum, arrays)


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def swish(z):
    return z * _sigmoid(z)


def layer_norm(h, eps=LN_EPS):
    mu = h.mean(axis=1, keepdims=True)
    c = h - mu
    inv = 1.0 / np.sqrt((c * c).mean(axis=1, keepdims=True) + eps)
    return c * inv, inv


def _inputs(params, k, x, p):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise UsageError(f"x must have shape (n, {params.dim}), got {x.shape}")
    if params.with_momentum:
        if p is None:
            raise UsageError("this network expects a momentum input")
        p = np.asarray(p, dtype=np.float64)
        if p.shape != x.shape:
            raise UsageError("momentum shape must match position shape")
        inp = np.concatenate([x, p], axis=1)
    else:
        if p is not None:
            raise UsageError("this network takes no momentum input")
        inp = x
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), (x.shape[0],))
    if k.size and (k.min() < 0 or k.max() > params.n_steps):
        raise UsageError(f"step index outside 0..{params.n_steps}")
    return inp, k


def _forward(params, k, x, p):
    A = params.arrays
    inp, k = _inputs(params, k, x, p)
    steps, inverse = np.unique(k, return_inverse=True)
    e = A["embed"][steps]
    h = inp @ A["W_in"] + A["b_in"]
    tape = []
    for b in range(params.n_blocks):
        xhat, inv = layer_norm(h)
        y = xhat * A[f"ln_g{b}"] + A[f"ln_b{b}"]
        sy = _sigmoid(y)
        u = y * sy
        # project each distinct step's embedding once, then gather per row
        t_proj = e @ A[f"Wt_{b}"] + (A[f"bt_{b}"] + A[f"b1_{b}"])
        a = u @ A[f"W1_{b}"]
        a += t_proj[inverse]
        sa = _sigmoid(a)
        v = a * sa
        h = h + v @ A[f"W2_{b}"] + A[f"b2_{b}"]
        tape.append((xhat, inv, y, sy, u, a, sa, v))
    out = h @ A["W_out"] + A["b_out"]
    return out, (inp, (steps, inverse), e, h, tape)


def scorenet_forward(params, k, x, p=None):
    """Raw network output s~(k, x[, p]) of shape ``(n, d)``."""
    return _forward(params, k, x, p)[0]


def scorenet_backward(params, k, x, p, cotangent):
    """Gradient of ``sum_i <cotangent_i, s~(k_i, x_i[, p_i])>`` w.r.t. every array."""
    out, (inp, k, e, h, tape) = _forward(params, k, x, p)
    cot = np.asarray(cotangent, dtype=np.float64)
    if cot.shape != out.shape:
        raise UsageError(f"cotangent shape {cot.shape} does not match output {out.shape}")
    return _backward(params, cot, inp, k, e, h, tape)


def forward_and_vjp(params, k, x, p, cotangent_fn):
    """Forward pass, then backward with ``cotangent_fn(out) -> (value, cotangent)``.

    Saves a second forward pass inside the training losses.
    """
    out, (inp, k, e, h, tape) = _forward(params, k, x, p)
    value, cot = cotangent_fn(out)
    return value, _backward(params, cot, inp, k, e, h, tape)


def _sum_by_step(rows, inverse, n_steps):
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=n_steps)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return np.add.reduceat(rows[order], starts, axis=0)


def _backward(params, cot, inp, k, e, h, tape):
    A = params.arrays
    steps, inverse = k
    g = {}
    g["W_out"] = h.T @ cot
    g["b_out"] = cot.sum(axis=0)
    dh = cot @ A["W_out"].T
    de = np.zeros_like(e)
    for b in reversed(range(params.n_blocks)):
        xhat, inv, y, sy, u, a, sa, v = tape[b]
        g[f"W2_{b}"] = v.T @ dh
        g[f"b2_{b}"] = dh.sum(axis=0)
        da = dh @ A[f"W2_{b}"].T
        da *= sa * (1.0 + a * (1.0 - sa))
        g[f"W1_{b}"] = u.T @ da
        da_step = _sum_by_step(da, inverse, steps.size)
        g[f"b1_{b}"] = da_step.sum(axis=0)
        g[f"Wt_{b}"] = e.T @ da_step
        g[f"bt_{b}"] = g[f"b1_{b}"].copy()
        de += da_step @ A[f"Wt_{b}"].T
        dy = da @ A[f"W1_{b}"].T
        dy *= sy * (1.0 + y * (1.0 - sy))
        g[f"ln_g{b}"] = (dy * xhat).sum(axis=0)
        g[f"ln_b{b}"] = dy.sum(axis=0)
        dxhat = dy * A[f"ln_g{b}"]
        dh = dh + inv * (
            dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
    g["W_in"] = inp.T @ dh
    g["b_in"] = dh.sum(axis=0)
    dE = np.zeros_like(A["embed"])
    dE[steps] = de
    g["embed"] = dE
    return {name: g[name] for name in A}


def warm_start_ula(params, path):
    """s(k, x) = s~(k, x) + grad log gamma_k(x)."""

    def score(k, x):
        return scorenet_forward(params, k, x) + path.grad(k, x)

    return score


def warm_start_uha(params, mass_diag):
    """s(k, x, p) = s~(k, x, p) - M^{-1} p."""
    m = np.asarray(mass_diag, dtype=np.float64)

    def score(k, x, p):
        return scorenet_forward(params, k, x, p) - p / m

    return score


# --- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    arrays = params.arrays if isinstance(params, ScoreNetParams) else params
    zeros = {k: np.zeros_like(v) for k, v in arrays.items()}
    return AdamState({k: z.copy() for k, z in zeros.items()}, zeros, 0, lr, beta1, beta2, eps)


def adam_step(state, params, grads):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    is_net = isinstance(params, ScoreNetParams)
    arrays = params.arrays if is_net else params
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    new, m_new, v_new = {}, {}, {}
    for name, theta in arrays.items():
        gr = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * gr
        v = b2 * state.v[name] + (1.0 - b2) * gr * gr
        new[name] = theta - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        m_new[name], v_new[name] = m, v
    st = AdamState(m_new, v_new, t, state.lr, b1, b2, state.eps)
    return (params.replace_arrays(new) if is_net else new), st


# --- checkpoint file --------------------------------------------------------
#
#   magic line | uint64 LE header length | JSON header | float64 LE payload
#
# The header lists every array as [group, name, shape] in payload order.


def _pack(groups, meta, extra):
    manifest, chunks = [], []
    for group, arrays in groups:
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            manifest.append([group, name, list(arr.shape)])
            chunks.append(arr.tobytes())
    header = json.dumps(
        {"version": CKPT_VERSION, "meta": meta, "extra": extra, "manifest": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    return CKPT_MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def save_checkpoint(path, params, adam=None, extra=None):
    groups = [("params", params.arrays)]
    extra = dict(extra or {})
    if adam is not None:
        groups += [("adam_m", adam.m), ("adam_v", adam.v)]
        extra["adam"] = {
            "step": adam.step,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
        }
    blob = _pack(groups, params.meta(), extra)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob


def load_checkpoint(path):
    """Returns ``(params, adam_or_None, extra)``."""
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    if buf.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
        raise UsageError(f"{path}: not a score-network checkpoint")
    (n,) = struct.unpack("<Q", buf.read(8))
    header = json.loads(buf.read(n))
    if header["version"] != CKPT_VERSION:
        raise UsageError(f"{path}: unsupported checkpoint version {header['version']}")
    groups = {}
    for group, name, shape in header["manifest"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        groups.setdefault(group, {})[name] = arr
    params = ScoreNetParams(**header["meta"], arrays=groups["params"])
    extra = header["extra"]
    adam = None
    if "adam" in extra:
        a = extra.pop("adam")
        adam = AdamState(groups["adam_m"], groups["adam_v"], a["step"], a["lr"], a["beta1"], a["beta2"], a["eps"])
    return params, adam, extra
