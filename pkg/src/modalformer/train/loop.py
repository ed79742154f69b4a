"""The joint training loop, checkpointing and resume.

Output directory::

    OUT/config.json   the TrainConfig
    OUT/log.jsonl     one JSON object per logged iteration / evaluation
    OUT/last/         checkpoint after the final iteration
    OUT/best/         checkpoint with the best mean validation PSNR

Each checkpoint holds ``params/`` and ``optim/`` tensor directories,
``model.json`` and ``meta.json`` (config, step, RNG state, best PSNR).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..autograd import NonFiniteError, Tape, Tensor, backward, ops
from ..losses import FixedFeatureNet, LossWeights, hybrid_loss
from ..modalities.bundle import ImagePair
from ..network.checkpoint import CheckpointError, atomic_dir, read_tensors, write_tensors
from ..network.model import ModalFormer
from .config import TrainConfig
from .data import Sample, sample_batch
from .evaluate import EvalResult, evaluate
from .optim import Adam, clip_by_global_norm, cosine_lr

LOSS_KEYS = ("l_mse", "l_ms_ssim", "l_perc", "l_mm", "l_total", "psnr", "ssim", "ms_ssim")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, detail: str = ""):
        super().__init__(f"non-finite loss at iteration {iteration}" + (f" ({detail})" if detail else ""))
        self.iteration = iteration


@dataclass
class TrainState:
    config: TrainConfig
    model: ModalFormer
    optim: Adam
    rng: np.random.Generator
    step: int = 0
    best_psnr: float = -math.inf
    history: list[dict] = field(default_factory=list)
    last_eval: Optional[EvalResult] = None


def init_state(config: TrainConfig) -> TrainState:
    model = ModalFormer(config.model_config())
    optim = Adam(dict(model.named_parameters()), config.beta1, config.beta2, config.adam_eps)
    data_seed = np.random.SeedSequence([config.seed, 1])
    return TrainState(config, model, optim, np.random.default_rng(data_seed))


# -- checkpoints -------------------------------------------------------------------

def save_checkpoint(path, state: TrainState) -> None:
    meta = {
        "config": state.config.to_dict(),
        "step": state.step,
        "adam_t": state.optim.t,
        "best_psnr": state.best_psnr if math.isfinite(state.best_psnr) else None,
        "rng": state.rng.bit_generator.state,
    }

    def write(d: Path):
        write_tensors(d / "params", state.model.state_dict())
        write_tensors(d / "optim", state.optim.state_arrays())
        (d / "model.json").write_text(json.dumps(state.model.config.to_dict(), indent=1, sort_keys=True))
        (d / "meta.json").write_text(json.dumps(meta, indent=1))

    atomic_dir(Path(path), write)


def load_checkpoint(path) -> TrainState:
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read {path / 'meta.json'}: {e}") from e
    state = init_state(TrainConfig.from_dict(meta["config"]))
    try:
        state.model.load_state_dict(read_tensors(path / "params"))
        state.optim.load_state_arrays(read_tensors(path / "optim"), meta["adam_t"])
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"checkpoint {path} does not match its config: {e}") from e
    state.rng.bit_generator.state = meta["rng"]
    state.step = meta["step"]
    state.best_psnr = -math.inf if meta["best_psnr"] is None else meta["best_psnr"]
    return state


# -- one step ----------------------------------------------------------------------

def batch_loss(model: ModalFormer, samples: Sequence[Sample], weights: LossWeights, psi: FixedFeatureNet, metrics: bool):
    """Mean hybrid loss over the batch and the per-term means."""
    active = model.config.active
    totals, reports = [], []
    for s in samples:
        i_hat, m_hat = model(Tensor(s.low), {n: Tensor(s.maps_low[n]) for n in active})
        m_gt = {n: Tensor(s.maps_gt[n]) for n in active}
        r = hybrid_loss(i_hat, Tensor(s.gt), m_hat, m_gt, weights, psi, metrics=metrics)
        totals.append(r.total)
        reports.append(r)
    loss = ops.scale(ops.sum_tensors(totals), 1.0 / len(samples))
    means = {}
    for k in LOSS_KEYS:
        vals = [getattr(r, k) for r in reports]
        if vals[0] is not None:
            means[k] = float(np.mean(vals))
    return loss, means


def train_step(state: TrainState, dataset: Sequence[ImagePair], weights: LossWeights, psi: FixedFeatureNet, log: bool) -> dict:
    cfg = state.config
    lr = cosine_lr(state.step, cfg.total_iters, cfg.lr_init, cfg.lr_final)
    samples = sample_batch(dataset, cfg.batch, cfg.patch, cfg.augment, state.rng)
    try:
        with Tape() as tape:
            loss, means = batch_loss(state.model, samples, weights, psi, metrics=log)
        named = dict(state.model.named_parameters())
        grads = backward(tape, loss, named.values())
    except NonFiniteError as e:
        raise TrainingDiverged(state.step + 1, str(e)) from e
    if not math.isfinite(float(loss.data)):
        raise TrainingDiverged(state.step + 1)
    grads = {n: grads[p] for n, p in named.items()}
    norm = clip_by_global_norm(grads, cfg.grad_clip) if cfg.grad_clip else None
    try:
        state.optim.step(grads, lr)
    except NonFiniteError as e:
        raise TrainingDiverged(state.step + 1, str(e)) from e
    state.step += 1
    entry = {"iter": state.step, "lr": lr, **means}
    if norm is not None:
        entry["grad_norm"] = norm
    return entry


# -- driver ------------------------------------------------------------------------

def train(
    config: TrainConfig,
    train_pairs: Sequence[ImagePair],
    val_pairs: Optional[Sequence[ImagePair]] = None,
    out=None,
    resume: bool = False,
    progress: Optional[Callable[[dict], None]] = None,
    stop_at: Optional[int] = None,
) -> TrainState:
    """Run (or continue) training up to ``config.total_iters``.

    Validation falls back to the training pairs when no validation split is
    given. With ``out`` set, logs and checkpoints are written there.
    ``stop_at`` halts early (saving ``last/``) without changing the schedule.
    """
    if not train_pairs:
        raise ValueError("training set is empty")
    val_pairs = list(val_pairs) if val_pairs else list(train_pairs)
    out = Path(out) if out is not None else None
    if out is not None and resume and (out / "last" / "meta.json").exists():
        state = load_checkpoint(out / "last")
        if state.config.to_dict() != config.to_dict():
            state.config = config
    else:
        state = init_state(config)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
    weights = config.loss_weights().fit_to(config.patch, config.patch)
    psi = FixedFeatureNet(seed=config.seed)
    scales = config.ms_ssim_scales
    log_file = open(out / "log.jsonl", "a") if out is not None else None
    try:
        end = config.total_iters if stop_at is None else min(stop_at, config.total_iters)
        while state.step < end:
            log_now = (state.step + 1) % config.log_every == 0 or state.step == 0
            entry = train_step(state, train_pairs, weights, psi, log_now)
            if log_now:
                _emit(state, entry, log_file, progress)
            if state.step % config.eval_every == 0 or state.step == config.total_iters:
                ev = evaluate(state.model, val_pairs, scales)
                state.last_eval = ev
                mean = ev.mean
                record = {"iter": state.step, **{f"eval_{k}": v for k, v in mean.items()}}
                _emit(state, record, log_file, progress)
                if mean["psnr"] > state.best_psnr:
                    state.best_psnr = mean["psnr"]
                    if out is not None:
                        save_checkpoint(out / "best", state)
        if out is not None:
            save_checkpoint(out / "last", state)
    finally:
        if log_file is not None:
            log_file.close()
    return state


def _emit(state: TrainState, entry: dict, log_file, progress) -> None:
    state.history.append(entry)
    if log_file is not None:
        log_file.write(json.dumps(entry) + "\n")
        log_file.flush()
    if progress is not None:
        progress(entry)


def resolve_checkpoint(path) -> Path:
    """Accept a checkpoint dir or a training output dir (prefers best/)."""
    path = Path(path)
    if (path / "model.json").exists():
        return path
    for sub in ("best", "last"):
        if (path / sub / "model.json").exists():
            return path / sub
    raise CheckpointError(f"no checkpoint found in {path}")
