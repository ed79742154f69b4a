"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def tensor_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||) over one tensor's checked coordinates."""
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom


# central-difference stencils: offsets (in units of eps) and weights
STENCILS = {
    2: ((1, -1), (0.5, -0.5)),
    4: ((2, 1, -1, -2), (-1 / 12, 8 / 12, -8 / 12, 1 / 12)),
}


def numeric_grad(
    f: Callable[[], Tensor], t: Tensor, eps: float, coords: Optional[np.ndarray] = None, order: int = 2
) -> np.ndarray:
    """Central differences for the flat ``coords`` of ``t`` (all if None).

    ``order=2`` is (f(x+eps) - f(x-eps)) / 2eps; ``order=4`` is the five-point
    stencil, whose O(eps^4) truncation error allows a larger eps and so less
    roundoff on small gradient entries.
    """
    offsets, weights = STENCILS[order]
    if not t.data.flags.c_contiguous or not t.data.flags.writeable:
        t.data = np.array(t.data, order="C")
    flat = t.data.reshape(-1)
    coords = np.arange(flat.size) if coords is None else coords
    out = np.empty(len(coords), dtype=np.float64)
    for n, i in enumerate(coords):
        orig = flat[i]
        acc = 0.0
        for o, w in zip(offsets, weights):
            flat[i] = orig + o * eps
            acc += w * float(f().data)
        flat[i] = orig
        out[n] = acc / eps
    return out


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    fraction: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    order: int = 2,
    per: str = "element",
) -> float:
    """Max relative error between backprop and central differences.

    ``per="element"`` takes the max over single coordinates. ``per="tensor"``
    measures each input's gradient as a vector and takes the max over inputs.
    ``per="global"`` measures all checked coordinates as one vector. Deep
    blocks have gradient entries many orders below the rest, and those sit at
    the roundoff floor of any finite difference.

    ``f`` closes over ``inputs`` (float64 tensors with ``requires_grad``) and
    returns a scalar. With ``fraction < 1`` a random subset of coordinates of
    each input is checked (at least one per input).
    """
    if per not in ("element", "tensor", "global"):
        raise ValueError(f"per must be 'element', 'tensor' or 'global', got {per!r}")
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("grad_check requires float64 inputs")
    if not inputs:
        return 0.0
    with Tape() as tape:
        loss = f()
    grads = backward(tape, loss, inputs)
    worst = 0.0
    all_a, all_n = [], []
    for t in inputs:
        coords = None
        if fraction < 1.0:
            rng = rng or np.random.default_rng(0)
            k = max(1, int(round(fraction * t.size)))
            coords = np.sort(rng.choice(t.size, size=k, replace=False))
        analytic = grads[t].reshape(-1)
        if coords is not None:
            analytic = analytic[coords]
        numeric = numeric_grad(f, t, eps, coords, order)
        if per == "element":
            worst = max(worst, float(relative_error(analytic, numeric).max()))
        elif per == "tensor":
            worst = max(worst, tensor_relative_error(analytic, numeric))
        else:
            all_a.append(analytic)
            all_n.append(numeric)
    if per == "global":
        worst = tensor_relative_error(np.concatenate(all_a), np.concatenate(all_n))
    return worst
