"""Parameter containers and the small layers the networks are built from."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..autograd import Tensor, conv2d, ops, transposed_conv2d

INIT_STD = 0.02


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) truncated to +/- 2 std by resampling."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(np.float32)


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True, name=name)


class Module:
    """Walks its attributes to enumerate parameters in a stable order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        named = dict(self.named_parameters())
        missing = set(named) - set(state)
        extra = set(state) - set(named)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
        for n, p in named.items():
            if state[n].shape != p.shape:
                raise ValueError(f"parameter {n}: checkpoint shape {state[n].shape} != model shape {p.shape}")
            p.data = np.array(state[n], dtype=p.dtype)


def _walk(value, name: str) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            value.name = name
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}")


class Conv(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1, bias: bool = True):
        self.weight = parameter(trunc_normal(rng, (k, k, cin, cout)))
        self.bias = parameter(np.zeros(cout)) if bias else None
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride)


class Deconv(Module):
    """3x3 stride-2 transposed conv, cin -> cout, doubling H and W."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, k: int = 3):
        self.weight = parameter(trunc_normal(rng, (k, k, cout, cin)))
        self.bias = parameter(np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return transposed_conv2d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, c: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(c))
        self.bias = parameter(np.zeros(c))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


def scalar(value: float = 0.0) -> Tensor:
    return parameter(np.asarray(value))


def tokens(x: Tensor) -> Tensor:
    """H x W x C -> HW x C."""
    return ops.reshape(x, (-1, x.shape[-1]))


def mean_of(features: list[Tensor]) -> Optional[Tensor]:
    if not features:
        return None
    return ops.scale(ops.sum_tensors(features), 1.0 / len(features))
