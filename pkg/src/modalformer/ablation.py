"""Ablation matrix: one training run per row under identical seed and budget.

Axes:

``injection``        add, concat, Q replace, V pointwise mul, CM-MSA; the plain
                     MSA baseline (no modalities) runs as an extra reference row.
``modality-groups``  each group left out in turn, then all four.
``loss``             MSE+MM, MSE+MS-SSIM, MSE+Perc, MSE+MS-SSIM+Perc, then all four terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .attention import BASELINE_MODE
from .modalities.bundle import GROUPS, ImagePair
from .train import TrainConfig, evaluate, train


@dataclass(frozen=True)
class Row:
    label: str
    overrides: dict
    reference: bool = False  # extra row, not part of the axis itself


AXES: dict[str, tuple[Row, ...]] = {
    "injection": (
        Row("Add", {"injection": "add"}),
        Row("Concat", {"injection": "concat"}),
        Row("Q replace", {"injection": "q_replace"}),
        Row("V p. mul.", {"injection": "v_pointwise_mul"}),
        Row("CM-MSA", {"injection": "cm_msa"}),
        Row("MSA (no modalities)", {"injection": BASELINE_MODE}, reference=True),
    ),
    "modality-groups": tuple(
        [Row(f"without {g}", {"modality_groups": [h for h in GROUPS if h != g]}) for g in GROUPS]
        + [Row("all groups", {"modality_groups": list(GROUPS)})]
    ),
    "loss": (
        Row("MSE + MM", {"loss_terms": ["mse", "mm"]}),
        Row("MSE + MS-SSIM", {"loss_terms": ["mse", "ms_ssim"]}),
        Row("MSE + Perc", {"loss_terms": ["mse", "perc"]}),
        Row("MSE + MS-SSIM + Perc", {"loss_terms": ["mse", "ms_ssim", "perc"]}),
        Row("all terms", {"loss_terms": ["mse", "ms_ssim", "perc", "mm"]}),
    ),
}


@dataclass
class RowResult:
    label: str
    params: int
    psnr: float
    ssim: float
    ms_ssim: float
    input_psnr: float
    reference: bool = False

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.psnr, self.ssim, self.ms_ssim))


@dataclass
class AblationResult:
    axis: str
    rows: list[RowResult] = field(default_factory=list)

    def row(self, label: str) -> RowResult:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def table(self) -> str:
        out = [f"{'row':26s} {'params':>9s} {'PSNR':>8s} {'SSIM':>7s} {'MS-SSIM':>8s}"]
        for r in self.rows:
            tag = " *" if r.reference else ""
            out.append(f"{r.label + tag:26s} {r.params:9d} {r.psnr:8.3f} {r.ssim:7.4f} {r.ms_ssim:8.4f}")
        if self.rows:
            out.append(f"{'raw input':26s} {'':9s} {self.rows[0].input_psnr:8.3f}")
        return "\n".join(out)

    def as_dict(self) -> dict:
        return {"axis": self.axis, "rows": [vars(r) for r in self.rows]}


def row_config(base: TrainConfig, row: Row) -> TrainConfig:
    return replace(base, **row.overrides)


def run_ablation(
    axis: str,
    base: TrainConfig,
    train_pairs: Sequence[ImagePair],
    val_pairs: Optional[Sequence[ImagePair]] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> AblationResult:
    if axis not in AXES:
        raise ValueError(f"axis must be one of {list(AXES)}, got {axis!r}")
    val = list(val_pairs) if val_pairs else list(train_pairs)
    res = AblationResult(axis)
    for row in AXES[axis]:
        cfg = row_config(base, row)
        state = train(cfg, train_pairs, val)
        mean = evaluate(state.model, val, cfg.ms_ssim_scales).mean
        r = RowResult(row.label, state.model.num_parameters(), mean["psnr"], mean["ssim"], mean["ms_ssim"],
                      mean["input_psnr"], row.reference)
        res.rows.append(r)
        if progress is not None:
            progress(f"{axis}: {row.label} psnr={r.psnr:.3f} ssim={r.ssim:.4f}")
    return res
