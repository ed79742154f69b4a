"""Cost of building attention maps: counted FLOPs, wall time and log-log fits.

Timed regions run with BLAS pinned to one thread. Each timing is the minimum
over ``repeats`` runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import (
    CMMSA,
    fuse_flops,
    modality_attention,
    rgb_attention,
    transposed_attention_flops,
    vanilla_attention,
    vanilla_attention_flops,
)
from .autograd import FlopCounter, Tensor, no_record

BENCH_MODES = ("cm_msa", "vanilla")
VANILLA_HW_LIMIT = 4096  # an HW x HW float32 score matrix per head is 64 MiB here


class BenchError(ValueError):
    pass


@dataclass
class BenchRow:
    mode: str
    h: int
    w: int
    c: int
    heads: int
    flops: int
    expected_flops: int
    fuse_flops: int
    seconds: float

    @property
    def hw(self) -> int:
        return self.h * self.w


@dataclass
class BenchReport:
    mode: str
    rows: list[BenchRow] = field(default_factory=list)
    flops_vs_hw: float = math.nan
    flops_vs_c: float = math.nan
    time_vs_hw: float = math.nan

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rows": [{**asdict(r), "hw": r.hw} for r in self.rows],
            "exponents": {"flops_vs_hw": self.flops_vs_hw, "flops_vs_c": self.flops_vs_c, "time_vs_hw": self.time_vs_hw},
        }

    def table(self) -> str:
        out = [f"{'mode':8s} {'HxW':>9s} {'HW':>7s} {'C':>4s} {'k':>2s} {'map FLOPs':>13s} {'fuse FLOPs':>10s} {'ms':>9s}"]
        for r in self.rows:
            out.append(f"{r.mode:8s} {f'{r.h}x{r.w}':>9s} {r.hw:7d} {r.c:4d} {r.heads:2d} {r.flops:13d} "
                       f"{r.fuse_flops:10d} {1e3 * r.seconds:9.3f}")
        out.append(f"exponents: FLOPs~HW^{self.flops_vs_hw:.4f}  FLOPs~C^{self.flops_vs_c:.4f}  time~HW^{self.time_vs_hw:.4f}")
        return "\n".join(out)


def fit_exponent(x, y) -> float:
    """Slope of the least-squares line through (log x, log y)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(np.unique(x)) < 2:
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def parse_size(s: str) -> tuple[int, int]:
    """'64' is 64x64; '64x32' is H=64, W=32."""
    parts = s.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise BenchError(f"bad size {s!r}; use S or HxW") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < 1:
        raise BenchError(f"bad size {s!r}; use S or HxW")
    return dims[0], dims[1]


def _build_maps(f_in: Tensor, f_mod: list[Tensor], layer: CMMSA) -> None:
    rgb_attention(f_in, layer)
    for j, f in enumerate(f_mod):
        modality_attention(f, j, layer)


def measure(mode: str, h: int, w: int, c: int, heads: int, repeats: int = 3, seed: int = 0,
            vanilla_limit: int = VANILLA_HW_LIMIT, n_modalities: int = 9) -> BenchRow:
    if mode not in BENCH_MODES:
        raise BenchError(f"mode must be one of {BENCH_MODES}, got {mode!r}")
    if c % heads:
        raise BenchError(f"C={c} is not divisible by heads={heads}")
    if mode == "vanilla" and h * w > vanilla_limit:
        raise BenchError(f"vanilla attention at HW={h * w} exceeds the limit {vanilla_limit} "
                         f"(HW^2 score matrix); raise --vanilla-limit to force")
    rng = np.random.default_rng(seed)
    layer = CMMSA(c, heads, rng, mode="cm_msa" if mode == "cm_msa" else "msa", n_modalities=n_modalities)
    f_in = Tensor(rng.random((h, w, c), dtype=np.float32))
    f_mod = [Tensor(rng.random((h, w, c), dtype=np.float32)) for _ in range(n_modalities)]
    if mode == "cm_msa":
        run = lambda: _build_maps(f_in, f_mod, layer)  # noqa: E731
        expected = transposed_attention_flops(h * w, c, heads, n_modalities)
        fused = fuse_flops(c, heads, n_modalities)
    else:
        run = lambda: vanilla_attention(f_in, layer)  # noqa: E731
        expected = vanilla_attention_flops(h * w, c)
        fused = 0
    with no_record(), FlopCounter() as fc:
        run()
    best = math.inf
    with no_record(), threadpool_limits(limits=1):
        for _ in range(repeats):
            t0 = time.perf_counter()
            run()
            best = min(best, time.perf_counter() - t0)
    return BenchRow(mode, h, w, c, heads, fc.flops, expected, fused, best)


def run_bench(sizes, channels, heads: int = 1, mode: str = "cm_msa", repeats: int = 3, seed: int = 0,
              vanilla_limit: int = VANILLA_HW_LIMIT) -> BenchReport:
    """Measure the grid sizes x channels and fit the scaling exponents.

    HW exponents are fit at the smallest C; the C exponent at the smallest HW.
    """
    sizes = [parse_size(s) if isinstance(s, str) else tuple(s) for s in sizes]
    channels = list(channels)
    if not sizes or not channels:
        raise BenchError("need at least one size and one channel count")
    rep = BenchReport(mode)
    for c in channels:
        for h, w in sizes:
            rep.rows.append(measure(mode, h, w, c, heads, repeats, seed, vanilla_limit))
    c0 = min(channels)
    by_hw = [r for r in rep.rows if r.c == c0]
    rep.flops_vs_hw = fit_exponent([r.hw for r in by_hw], [r.flops for r in by_hw])
    rep.time_vs_hw = fit_exponent([r.hw for r in by_hw], [r.seconds for r in by_hw])
    hw0 = min(r.hw for r in rep.rows)
    by_c = [r for r in rep.rows if r.hw == hw0]
    rep.flops_vs_c = fit_exponent([r.c for r in by_c], [r.flops for r in by_c])
    return rep
