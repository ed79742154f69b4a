"""Seeded 64-bit finite-difference suites at three scopes.

``op``     every differentiable primitive, three shapes per seed, per-coordinate error.
``block``  CM-MSA layer, cross-modal fusion, FFN, MMTB and the auxiliary U-Net;
           whole-gradient error on a random coordinate sample.
``model``  the full network under a random linear readout of all its outputs:
           a 1% coordinate subset is probed with random directional derivatives,
           and a sample of it coordinate by coordinate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .attention import CMMSA, cross_modal_fuse
from .autograd import (
    Tape,
    Tensor,
    backward,
    conv2d,
    grad_check,
    numeric_grad,
    ops,
    tensor_relative_error,
    transposed_conv2d,
)
from .modalities.bundle import CHANNELS, NAMES
from .network import FFN, MMTB, AuxUNet, ModelConfig, ModalFormer

THRESHOLDS = {"op": 1e-4, "block": 1e-4, "model": 1e-3}
SCOPES = tuple(THRESHOLDS)


@dataclass
class CheckResult:
    scope: str
    target: str
    error: float
    threshold: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.error < self.threshold)

    def line(self) -> str:
        flag = "ok" if self.passed else "FAIL"
        return f"{self.scope:5s} {self.target:34s} max_rel_err={self.error:.3e} (< {self.threshold:g}) {flag}"


def _t(rng, *shape, grad=True, lo=None):
    a = rng.standard_normal(shape)
    if lo is not None:  # keep away from the kink / pole at zero
        a = np.sign(a) * (lo + np.abs(a))
    return Tensor(a, requires_grad=grad, dtype=np.float64)


def _readout(rng, out: Tensor) -> Tensor:
    return Tensor(rng.standard_normal(out.shape), dtype=np.float64)


def _linear(out_fn: Callable[[], Tensor], rng) -> Callable[[], Tensor]:
    w = _readout(rng, out_fn())
    return lambda: ops.sum(ops.mul(out_fn(), w))


def well_conditioned(module, rng) -> None:
    """Unit-gain conv weights, jittered scalars, fusion gates near 1.

    At the trunc-normal(0.02) init every branch is nearly linear and the
    modality path nearly constant, which leaves its gradients at the
    roundoff floor of any finite difference.
    """
    for name, p in module.named_parameters():
        if p.ndim == 4:
            p.data = rng.standard_normal(p.shape) / np.sqrt(np.prod(p.shape[:3]))
        elif "theta" in name:
            p.data = np.asarray(3.0 + 0.5 * rng.standard_normal())
        else:
            p.data = p.data + 0.3 * rng.standard_normal(p.shape)


# -- op scope ------------------------------------------------------------------------

OP_SHAPES = ((3, 4), (2, 3, 5), (4, 4, 3))
CONV_SHAPES = ((4, 4, 2, 3, 3, 1), (5, 6, 3, 2, 3, 2), (6, 6, 2, 2, 1, 2))  # h, w, cin, cout, k, stride


def _unary(op) -> Callable:
    def make(rng, shape):
        x = _t(rng, *shape, lo=0.2)
        return _linear(lambda: op(x), rng), [x]
    return make


def _binary(op, positive_b=False) -> Callable:
    def make(rng, shape):
        a = _t(rng, *shape)
        b = _t(rng, *shape, lo=0.5) if positive_b else _t(rng, *shape)
        return _linear(lambda: op(a, b), rng), [a, b]
    return make


def _matmul(rng, shape):
    a = _t(rng, *shape[:-2], shape[-2], 3)
    b = _t(rng, *shape[:-2], 3, shape[-1])
    return _linear(lambda: ops.matmul(a, b), rng), [a, b]


def _structural(rng, shape):
    x = _t(rng, *shape)

    def f():
        t = ops.transpose(x)
        r = ops.reshape(t, (-1,))
        parts = ops.split(x, [1, shape[-1] - 1], axis=-1)
        c = ops.concat([parts[1], parts[0]], axis=-1)
        return ops.concat([r, ops.reshape(ops.getitem(c, (slice(None, None, -1),)), (-1,))], axis=0)

    return _linear(f, rng), [x]


def _reductions(rng, shape):
    x = _t(rng, *shape)
    s = _t(rng)

    def f():
        a = ops.sum(x, axis=0)
        b = ops.mean(x, axis=-1, keepdims=True)
        return ops.sum_tensors([ops.sum(a), ops.sum(b), ops.mul(s, ops.mean(x))])

    return f, [x, s]


def _softmax(rng, shape):
    x = _t(rng, *shape)
    return _linear(lambda: ops.softmax(x, axis=len(shape) % 2 - 2), rng), [x]


def _layer_norm(rng, shape):
    x = _t(rng, *shape)
    g, b = _t(rng, shape[-1]), _t(rng, shape[-1])
    return _linear(lambda: ops.layer_norm(x, g, b), rng), [x, g, b]


def _scalar_ops(rng, shape):
    x = _t(rng, *shape)
    return _linear(lambda: ops.scale(ops.neg(ops.add(x, 0.5)), 1.7), rng), [x]


def _conv(rng, i):
    h, w, ci, co, k, s = CONV_SHAPES[i]
    x, wt, b = _t(rng, h, w, ci), _t(rng, k, k, ci, co), _t(rng, co)
    return _linear(lambda: conv2d(x, wt, b, stride=s), rng), [x, wt, b]


def _deconv(rng, i):
    h, w, ci, co = CONV_SHAPES[i][:4]
    x, wt, b = _t(rng, h // 2, w // 2, ci), _t(rng, 3, 3, co, ci), _t(rng, co)
    return _linear(lambda: transposed_conv2d(x, wt, b), rng), [x, wt, b]


OP_TARGETS: dict[str, Callable] = {
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "div": _binary(ops.div, positive_b=True),
    "neg/scale/scalar-add": _scalar_ops,
    "power": _unary(lambda t: ops.power(ops.abs(t), 1.5)),
    "abs": _unary(ops.abs),
    "clamp_min": _unary(lambda t: ops.clamp_min(t, 0.0)),
    "sigmoid": _unary(ops.sigmoid),
    "gelu": _unary(ops.gelu),
    "matmul": _matmul,
    "reshape/transpose/split/concat/getitem": _structural,
    "sum/mean/sum_tensors": _reductions,
    "softmax": _softmax,
    "layer_norm": _layer_norm,
    "pad_reflect": lambda rng, shape: _pad(rng, shape),
}


def _pad(rng, shape):
    x = _t(rng, 4, 5, shape[-1])
    return _linear(lambda: ops.pad_reflect(x, 2, 3), rng), [x]


def op_checks(seed: int) -> Iterator[tuple[str, Callable, list, dict]]:
    for name, make in OP_TARGETS.items():
        for i, shape in enumerate(OP_SHAPES):
            rng = np.random.default_rng([seed, i])
            f, inputs = make(rng, shape)
            yield f"{name} {shape}", f, inputs, {}
    for i in range(3):
        rng = np.random.default_rng([seed, 10 + i])
        f, inputs = _conv(rng, i)
        yield f"conv2d {CONV_SHAPES[i]}", f, inputs, {}
        f, inputs = _deconv(rng, i)
        yield f"transposed_conv2d {CONV_SHAPES[i][:4]}", f, inputs, {}


# -- block scope ---------------------------------------------------------------------

BLOCK_SHAPES = ((4, 4, 8, 1), (4, 2, 8, 2), (2, 4, 8, 4))  # h, w, c, heads
BLOCK_KW = {"eps": 1e-3, "order": 4, "per": "global", "fraction": 0.15}


def block_checks(seed: int) -> Iterator[tuple[str, Callable, list, dict]]:
    for i, (h, w, c, k) in enumerate(BLOCK_SHAPES):
        rng = np.random.default_rng([seed, 100 + i])
        x = _t(rng, h, w, c)
        mods = [_t(rng, h, w, c) for _ in range(len(NAMES))]
        layer = CMMSA(c, k, rng, n_modalities=len(NAMES)).astype(np.float64)
        well_conditioned(layer, rng)
        yield f"cm_msa k={k} {h}x{w}x{c}", _linear(lambda layer=layer, x=x, mods=mods: layer(x, mods), rng), [
            x, *mods, *layer.parameters()], BLOCK_KW

        d = c // k
        maps = [Tensor(np.asarray(ops.softmax(_t(rng, k, d, d), axis=-2).data), requires_grad=True, dtype=np.float64)
                for _ in range(len(NAMES))]
        theta = Tensor(rng.uniform(0.3, 0.95, len(NAMES)), requires_grad=True, dtype=np.float64)
        yield f"cross_modal_fuse k={k} d={d}", _linear(lambda maps=maps, theta=theta: cross_modal_fuse(
            maps, [theta[j] for j in range(len(NAMES))]), rng), [*maps, theta], BLOCK_KW

        ffn = FFN(c, rng).astype(np.float64)
        well_conditioned(ffn, rng)
        yield f"ffn {h}x{w}x{c}", _linear(lambda ffn=ffn, x=x: ffn(x), rng), [x, *ffn.parameters()], BLOCK_KW

        blk = MMTB(c, k, rng, n_modalities=len(NAMES)).astype(np.float64)
        well_conditioned(blk, rng)
        yield f"mmtb k={k} {h}x{w}x{c}", _linear(lambda blk=blk, x=x, mods=mods: blk(x, mods), rng), [
            x, *mods, *blk.parameters()], BLOCK_KW

    for i, (h, w) in enumerate(((8, 8), (16, 8), (8, 16))):
        rng = np.random.default_rng([seed, 200 + i])
        net = AuxUNet(2, 4, rng).astype(np.float64)
        well_conditioned(net, rng)
        z = _t(rng, h, w, 2)

        def out(net=net, z=z):
            y, taps = net(z)
            return ops.concat([ops.reshape(t, (-1,)) for t in (y, *taps.enc, *taps.dec)], axis=0)

        yield f"aux_unet {h}x{w}", _linear(out, rng), [z, *net.parameters()], BLOCK_KW


# -- model scope ---------------------------------------------------------------------

MODEL_SHAPES = ((8, 8), (16, 8), (8, 16))
MODEL_CHANNELS = 4
MODEL_FRACTION = 0.01
MODEL_DIRECTIONS = 16
MODEL_COORDS = 256


def _model_problem(seed: int, i: int):
    h, w = MODEL_SHAPES[i]
    rng = np.random.default_rng([seed, 300 + i])
    model = ModalFormer(ModelConfig(base_channels=MODEL_CHANNELS, seed=seed)).astype(np.float64)
    x = Tensor(rng.random((h, w, 3)), dtype=np.float64)
    maps = {n: Tensor(rng.random((h, w, CHANNELS[n])), dtype=np.float64) for n in NAMES}
    i_hat, m_hat = model(x, maps)
    wi = _readout(rng, i_hat)
    wm = {n: _readout(rng, m_hat[n]) for n in NAMES}

    def f():
        out, mh = model(x, maps)
        return ops.sum_tensors([ops.sum(ops.mul(out, wi)), *(ops.sum(ops.mul(mh[n], wm[n])) for n in NAMES)])

    return model, f, rng


def model_check(seed: int, i: int, eps: float = 1e-5) -> float:
    """Directional and coordinate-wise error on a 1% subset of the model's parameters."""
    model, f, rng = _model_problem(seed, i)
    params = model.parameters()
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    subset = np.sort(rng.choice(total, size=max(1, int(round(MODEL_FRACTION * total))), replace=False))
    owner = np.searchsorted(offsets, subset, side="right") - 1

    with Tape() as tape:
        loss = f()
    grads = backward(tape, loss, params)
    g_flat = np.concatenate([grads[p].reshape(-1) for p in params])

    worst = 0.0
    for _ in range(MODEL_DIRECTIONS):
        d = rng.choice([-1.0, 1.0], size=subset.size)
        analytic = float(g_flat[subset] @ d)
        originals = [p.data.copy() for p in params]
        vals = []
        for sign in (1.0, -1.0):
            for p in params:
                p.data = np.array(p.data, order="C")
            for k, idx in enumerate(subset):
                p = params[owner[k]]
                p.data.reshape(-1)[idx - offsets[owner[k]]] += sign * eps * d[k]
            vals.append(float(f().data))
            for p, o in zip(params, originals):
                p.data = o.copy()
        numeric = (vals[0] - vals[1]) / (2 * eps)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12))

    sample = np.sort(rng.choice(subset, size=min(MODEL_COORDS, subset.size), replace=False))
    analytic, numeric = [], []
    for idx in sample:
        k = int(np.searchsorted(offsets, idx, side="right") - 1)
        analytic.append(g_flat[idx])
        numeric.append(numeric_grad(f, params[k], eps, np.array([idx - offsets[k]]))[0])
    worst = max(worst, tensor_relative_error(np.array(analytic), np.array(numeric)))
    return worst


# -- driver --------------------------------------------------------------------------

def run_scope(scope: str, seed: int = 0, progress: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    if scope not in THRESHOLDS:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    thr = THRESHOLDS[scope]
    results = []

    def record(name, fn):
        t0 = time.perf_counter()
        err = fn()
        r = CheckResult(scope, name, err, thr, time.perf_counter() - t0)
        results.append(r)
        if progress is not None:
            progress(r)

    if scope == "model":
        for i, (h, w) in enumerate(MODEL_SHAPES):
            record(f"model C={MODEL_CHANNELS} {h}x{w}", lambda i=i: model_check(seed, i))
        return results
    checks = op_checks(seed) if scope == "op" else block_checks(seed)
    for name, f, inputs, kw in checks:
        kw = dict(kw)
        record(name, lambda f=f, inputs=inputs, kw=kw: grad_check(
            f, inputs, rng=np.random.default_rng(seed), **kw))
    return results
