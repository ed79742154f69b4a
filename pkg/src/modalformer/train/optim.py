"""Adam, cosine learning-rate annealing and global-norm clipping."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..autograd import NonFiniteError, Tensor


def cosine_lr(t: int, total_iters: int, lr_init: float = 3e-4, lr_final: float = 1e-6) -> float:
    if not 0 <= t <= total_iters:
        raise ValueError(f"step {t} outside [0, {total_iters}]")
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * t / total_iters))


class Adam:
    """Adam with bias correction; parameters are updated in place, keyed by name."""

    def __init__(self, named_params: Mapping[str, Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.t = 0

    def step(self, grads: Mapping[str, np.ndarray], lr: float) -> None:
        for n, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteError(f"gradient of {n}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for n, p in self.params.items():
            g = grads[n]
            m, v = self.m[n], self.v[n]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p.data = p.data - (lr / c1) * m / denom

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{n}": a for n, a in self.m.items()}
        out.update({f"v/{n}": a for n, a in self.v.items()})
        return out

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], t: int) -> None:
        for n in self.params:
            self.m[n] = np.array(arrays[f"m/{n}"], dtype=self.params[n].dtype)
            self.v[n] = np.array(arrays[f"v/{n}"], dtype=self.params[n].dtype)
        self.t = t


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: Adam, lr: float) -> Adam:
    if set(params) != set(state.params):
        raise KeyError("parameter set differs from the optimizer state")
    state.step(grads, lr)
    return state


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their joint L2 norm is at most ``max_norm``; returns the norm before."""
    norm = global_norm(grads)
    if norm > max_norm:
        s = max_norm / norm
        for n in grads:
            grads[n] = grads[n] * grads[n].dtype.type(s)
    return norm
