"""Cross-modal multi-head self-attention over the channel dimension.

Tokens X (HW x C) are projected to Q, K, V and split into k heads of
d = C/k channels. Each attention map is d x d:

    A_RGB = softmax(K^T Q / tau)             (softmax over the key axis)
    A_j   = softmax(K_j^T Q_j / tau_j)       j over the active modalities
    A_CM  = softmax(prod_j theta_j A_j)      matrix product, ascending j
    out   = proj(V A_RGB A_CM)

All maps are column-stochastic. tau, tau_j and theta_j are sigmoids of
unconstrained scalars so they stay in (0, 1). Besides ``cm_msa`` the layer
supports the injection variants compared in the ablation (``add``,
``concat``, ``q_replace``, ``v_pointwise_mul``) and ``msa``, plain channel
attention that ignores the modalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autograd import ShapeError, Tensor, ops
from .network.layers import Conv, Module, mean_of, scalar, tokens

INJECTION_MODES = ("add", "concat", "q_replace", "v_pointwise_mul", "cm_msa")
BASELINE_MODE = "msa"
MODES = INJECTION_MODES + (BASELINE_MODE,)
SOFTMAX_AXIS = -2  # the K-derived axis: maps are column-stochastic


@dataclass
class AttentionMaps:
    a_rgb: Tensor
    a_mod: list[Tensor] = field(default_factory=list)
    a_cm: Optional[Tensor] = None


class CMMSA(Module):
    """Parameters of one attention layer (see module docstring)."""

    def __init__(self, channels: int, heads: int, rng: np.random.Generator, mode: str = "cm_msa", n_modalities: int = 9):
        if mode not in MODES:
            raise ValueError(f"unknown attention mode {mode!r}; expected one of {MODES}")
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        c = channels
        self.channels, self.heads, self.mode = channels, heads, mode
        self.n_modalities = n_modalities if mode != BASELINE_MODE else 0
        self.w_qkv = Conv(c, 3 * c, 1, rng, bias=False)
        self.tau_raw = scalar(0.0)
        if mode == "cm_msa":
            self.w_qk = [Conv(c, 2 * c, 1, rng, bias=False) for _ in range(n_modalities)]
            self.tau_mod_raw = [scalar(0.0) for _ in range(n_modalities)]
            self.theta_raw = [scalar(0.0) for _ in range(n_modalities)]
        elif mode == "concat":
            self.w_fuse = Conv(2 * c, c, 1, rng)
        elif mode == "v_pointwise_mul":
            self.w_gate = Conv(c, c, 1, rng)
        self.w_out = Conv(c, c, 1, rng)

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    def tau(self) -> Tensor:
        return ops.sigmoid(self.tau_raw)

    def taus(self) -> list[Tensor]:
        return [ops.sigmoid(t) for t in self.tau_mod_raw]

    def thetas(self) -> list[Tensor]:
        return [ops.sigmoid(t) for t in self.theta_raw]

    def __call__(self, f_in: Tensor, f_mod: Optional[Sequence[Tensor]] = None) -> Tensor:
        if self.mode == "cm_msa":
            return cm_msa_forward(f_in, f_mod, self)
        return inject_alternative(f_in, f_mod, self, self.mode)


# -- head plumbing -----------------------------------------------------------------

def split_heads(x: Tensor, heads: int) -> Tensor:
    """HW x C -> heads x HW x d."""
    hw, c = x.shape
    return ops.transpose(ops.reshape(x, (hw, heads, c // heads)), (1, 0, 2))


def merge_heads(x: Tensor, h: int, w: int) -> Tensor:
    """heads x HW x d -> H x W x C."""
    k, hw, d = x.shape
    return ops.reshape(ops.transpose(x, (1, 0, 2)), (h, w, k * d))


def channel_attention(q: Tensor, k: Tensor, tau: Tensor) -> Tensor:
    """softmax(K^T Q / tau) per head; q, k are heads x HW x d."""
    scores = ops.matmul(ops.transpose(k, (0, 2, 1)), q)
    return ops.softmax(ops.div(scores, tau), axis=SOFTMAX_AXIS)


def _qkv(f: Tensor, params: CMMSA) -> tuple[Tensor, Tensor, Tensor]:
    return tuple(ops.split(tokens(params.w_qkv(f)), 3, axis=-1))


def _check_features(f_in: Tensor, f_mod: Sequence[Tensor], expected: int) -> None:
    if len(f_mod) != expected:
        raise ValueError(f"expected {expected} modality feature maps, got {len(f_mod)}")
    for j, f in enumerate(f_mod):
        if f.shape != f_in.shape:
            raise ShapeError(f"modality {j} features {f.shape} do not match RGB stream {f_in.shape}")


# -- attention ops -----------------------------------------------------------------

def rgb_attention(f_in: Tensor, params: CMMSA, q_source: Optional[Tensor] = None,
                  v_scale: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """Transposed self-attention on the RGB stream: (F_RGB^MSA, A_RGB).

    ``q_source`` replaces the features Q is projected from (Q-replace mode),
    ``v_scale`` multiplies V elementwise (V point-wise mode).
    """
    h, w, c = f_in.shape
    if c % params.heads:
        raise ValueError(f"channels {c} not divisible by heads {params.heads}")
    q, k, v = _qkv(f_in, params)
    if q_source is not None:
        q = _qkv(q_source, params)[0]
    if v_scale is not None:
        v = ops.mul(v, tokens(v_scale))
    heads = params.heads
    a_rgb = channel_attention(split_heads(q, heads), split_heads(k, heads), params.tau())
    out = ops.matmul(split_heads(v, heads), a_rgb)
    return merge_heads(out, h, w), a_rgb


def modality_attention(f_mj: Tensor, j: int, params: CMMSA) -> Tensor:
    """A_j from the j-th modality features (Q_j/K_j only, no V_j)."""
    qk = tokens(params.w_qk[j](f_mj))
    q, k = ops.split(qk, 2, axis=-1)
    return channel_attention(split_heads(q, params.heads), split_heads(k, params.heads), ops.sigmoid(params.tau_mod_raw[j]))


def cross_modal_fuse(a_mod: Sequence[Tensor], theta: Sequence[Tensor]) -> Tensor:
    """softmax of the ascending-order matrix product of theta_j * A_j."""
    if not a_mod or len(a_mod) != len(theta):
        raise ValueError(f"need one theta per map, got {len(a_mod)} maps and {len(theta)} thetas")
    shape = a_mod[0].shape
    for j, a in enumerate(a_mod):
        if a.shape != shape:
            raise ShapeError(f"attention map {j} has shape {a.shape}, expected {shape}")
    prod = ops.mul(a_mod[0], theta[0])
    for a, t in zip(a_mod[1:], theta[1:]):
        prod = ops.matmul(prod, ops.mul(a, t))
    return ops.softmax(prod, axis=SOFTMAX_AXIS)


def cm_msa_maps(f_in: Tensor, f_mod: Sequence[Tensor], params: CMMSA) -> tuple[Tensor, AttentionMaps]:
    """Head-form F_RGB^MSA and all attention maps of a cm_msa layer."""
    _check_features(f_in, f_mod, params.n_modalities)
    f_msa, a_rgb = rgb_attention(f_in, params)
    a_mod = [modality_attention(f, j, params) for j, f in enumerate(f_mod)]
    a_cm = cross_modal_fuse(a_mod, params.thetas())
    return f_msa, AttentionMaps(a_rgb, a_mod, a_cm)


def cm_msa_forward(f_in: Tensor, f_mod: Sequence[Tensor], params: CMMSA) -> Tensor:
    h, w, _ = f_in.shape
    f_msa, maps = cm_msa_maps(f_in, f_mod or [], params)
    fused = ops.matmul(split_heads(tokens(f_msa), params.heads), maps.a_cm)
    return params.w_out(merge_heads(fused, h, w))


def inject_alternative(f_in: Tensor, f_mod: Optional[Sequence[Tensor]], params: CMMSA, mode: str) -> Tensor:
    """Plain channel MSA with modality features injected per ``mode``.

    Modality features are averaged over j before injection.
    """
    if mode not in INJECTION_MODES[:-1] + (BASELINE_MODE,):
        raise ValueError(f"unknown injection mode {mode!r}")
    f_mod = list(f_mod or [])
    if mode != BASELINE_MODE:
        _check_features(f_in, f_mod, params.n_modalities)
    m = mean_of(f_mod)
    x, q_source, v_scale = f_in, None, None
    if mode == "add" and m is not None:
        x = ops.add(f_in, m)
    elif mode == "concat" and m is not None:
        x = params.w_fuse(ops.concat([f_in, m], axis=-1))
    elif mode == "q_replace" and m is not None:
        q_source = m
    elif mode == "v_pointwise_mul" and m is not None:
        v_scale = ops.sigmoid(params.w_gate(m))
    out, _ = rgb_attention(x, params, q_source=q_source, v_scale=v_scale)
    return params.w_out(out)


# -- analytic cost of attention-map construction ----------------------------------------

def transposed_attention_flops(hw: int, c: int, heads: int, n_modalities: int = 9) -> int:
    """Matmul FLOPs to build and apply A_RGB plus build each A_j: (4 + 2n) HW C^2 / k."""
    d = c // heads
    return (4 + 2 * n_modalities) * hw * d * d * heads


def vanilla_attention_flops(hw: int, c: int) -> int:
    """Spatial attention: Q K^T (HW x HW) then A V, 4 HW^2 C."""
    return 4 * hw * hw * c


def fuse_flops(c: int, heads: int, n_modalities: int = 9) -> int:
    """The (n - 1) chained d x d products of the fusion; independent of HW."""
    d = c // heads
    return 2 * (n_modalities - 1) * heads * d ** 3


def vanilla_attention(f_in: Tensor, params: CMMSA) -> Tensor:
    """Spatial (HW x HW) multi-head attention, benchmark reference only."""
    h, w, c = f_in.shape
    q, k, v = _qkv(f_in, params)
    heads = params.heads
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scores = ops.matmul(qh, ops.transpose(kh, (0, 2, 1)))
    a = ops.softmax(ops.scale(scores, 1.0 / np.sqrt(c // heads)), axis=-1)
    return merge_heads(ops.matmul(a, vh), h, w)
