"""Desk-scale training experiments shared by scripts/ and the acceptance suite."""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .modalities import generate_corpus
from .train import TrainConfig, evaluate, train


@dataclass
class RunSummary:
    iters: int
    seconds: float
    input_psnr: float
    output_psnr: float
    train_time_psnr: float  # mean val PSNR from the last in-loop evaluation

    @property
    def gain(self) -> float:
        return self.output_psnr - self.input_psnr


DESK = TrainConfig(batch=1, log_every=50)


def _run(cfg: TrainConfig, pairs, progress) -> RunSummary:
    t0 = time.perf_counter()
    state = train(cfg, pairs, pairs, progress=progress)
    seconds = time.perf_counter() - t0
    mean = evaluate(state.model, pairs, cfg.ms_ssim_scales).mean
    return RunSummary(state.step, seconds, mean["input_psnr"], mean["psnr"], state.last_eval.mean["psnr"])


def overfit_one(iters: int = 1000, size: int = 32, seed: int = 0, config: Optional[TrainConfig] = None,
                progress: Optional[Callable[[dict], None]] = None, workdir=None) -> RunSummary:
    """Fit a single size x size pair; the patch is the whole image."""
    cfg = replace(config or DESK, total_iters=iters, patch=size, seed=seed, eval_every=iters)
    with tempfile.TemporaryDirectory() as tmp:
        pairs = generate_corpus(Path(workdir or tmp) / "one", 1, (size, size), seed=seed, val_fraction=0)
    return _run(cfg, pairs, progress)


def corpus_run(iters: int = 2000, count: int = 4, size: int = 32, seed: int = 0, config: Optional[TrainConfig] = None,
               progress: Optional[Callable[[dict], None]] = None, workdir=None) -> RunSummary:
    """Train on a small synthetic corpus and evaluate full images of that corpus."""
    cfg = replace(config or DESK, total_iters=iters, patch=size, seed=seed, eval_every=max(1, iters // 4))
    with tempfile.TemporaryDirectory() as tmp:
        pairs = generate_corpus(Path(workdir or tmp) / "corpus", count, (size, size), seed=seed, val_fraction=0)
    return _run(cfg, pairs, progress)


def log_line(entry: dict) -> str:
    keys = [k for k in ("l_total", "psnr", "eval_psnr") if k in entry]
    return f"iter {entry['iter']:5d} " + " ".join(f"{k}={entry[k]:.4f}" for k in keys)


def mean_of(values) -> float:
    return float(np.mean(list(values)))
