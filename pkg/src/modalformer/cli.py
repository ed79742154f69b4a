"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Failures print one JSON line to stderr: {"error": kind, "code": n, "message": text}.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
KINDS = {EXIT_USAGE: "usage", EXIT_DATA: "data", EXIT_NUMERIC: "numeric"}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is our data-error code
        raise CliError(EXIT_USAGE, f"{self.prog}: {message}")


def _csv(cast):
    def parse(s: str):
        try:
            return [cast(x) for x in s.split(",") if x]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {s!r}") from None
    return parse


def _write_json(path: Optional[str], obj) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(obj, indent=1) + "\n")


# -- commands ----------------------------------------------------------------------

def cmd_gen_data(a) -> int:
    from .losses import psnr
    from .modalities import generate_corpus

    h, w = a.size
    if h % 8 or w % 8 or h <= 0 or w <= 0:
        raise CliError(EXIT_USAGE, f"--size {h} {w} must be positive multiples of 8")
    if a.count < 1:
        raise CliError(EXIT_USAGE, "--count must be at least 1")
    pairs = generate_corpus(a.out, a.count, (h, w), a.seed, a.severity)
    mean = float(np.mean([psnr(p.low, p.gt) for p in pairs]))
    print(f"wrote {len(pairs)} pairs to {a.out} (severity {a.severity}, mean input PSNR {mean:.3f} dB)")
    return EXIT_OK


def cmd_extract(a) -> int:
    from .modalities import extract_bundle, read_png, save_bundle

    rgb = read_png(a.image)
    save_bundle(extract_bundle(rgb, a.seed), a.out)
    print(f"wrote bundle for {a.image} ({rgb.shape[0]}x{rgb.shape[1]}) to {a.out}")
    return EXIT_OK


def _splits(data):
    from .modalities import load_corpus

    pairs = load_corpus(data)
    train = [p for p in pairs if p.split == "train"] or pairs
    val = [p for p in pairs if p.split == "val"] or train
    return train, val


def cmd_train(a) -> int:
    from .train import TrainConfig, train

    cfg = TrainConfig.load(a.config)
    train_pairs, val_pairs = _splits(a.data)

    def show(e):
        keys = [k for k in ("l_total", "psnr", "eval_psnr", "eval_ssim") if k in e]
        print(f"iter {e['iter']:6d} " + " ".join(f"{k}={e[k]:.4f}" for k in keys), flush=True)

    state = train(cfg, train_pairs, val_pairs, out=a.out, resume=a.resume, progress=None if a.quiet else show)
    print(f"done: {state.step} iterations, best val PSNR {state.best_psnr:.3f} dB, checkpoints in {a.out}")
    return EXIT_OK


def _load(ckpt):
    from .network import load_model
    from .train import resolve_checkpoint

    path = resolve_checkpoint(ckpt)
    scales = 3
    meta = path / "meta.json"
    if meta.exists():
        scales = json.loads(meta.read_text())["config"].get("ms_ssim_scales", 3)
    return load_model(path), scales


def cmd_infer(a) -> int:
    from .modalities import load_bundle, read_png, write_png
    from .network import write_tensors
    from .train import enhance_full

    model, _ = _load(a.ckpt)
    low = read_png(a.image)
    bundle = load_bundle(a.bundle, expect_hw=low.shape[:2])
    out, m_hat = enhance_full(model, low, bundle.maps, return_maps=True)
    write_png(a.out, out)
    if a.dump_modalities:
        write_tensors(Path(a.dump_modalities), m_hat)
    print(f"wrote {a.out} ({out.shape[0]}x{out.shape[1]})")
    return EXIT_OK


def cmd_eval(a) -> int:
    from .modalities import load_corpus
    from .train import evaluate

    model, scales = _load(a.ckpt)
    pairs = load_corpus(a.data, a.split)
    res = evaluate(model, pairs, scales)
    print(f"{'image':10s} {'PSNR':>8s} {'SSIM':>7s} {'MS-SSIM':>8s} {'in PSNR':>8s}")
    for r in res.rows + [{"name": "mean", **res.mean}]:
        print(f"{r['name']:10s} {r['psnr']:8.3f} {r['ssim']:7.4f} {r['ms_ssim']:8.4f} {r['input_psnr']:8.3f}")
    _write_json(a.json, {"rows": res.rows, "mean": res.mean})
    if not all(np.isfinite(v) for v in res.mean.values()):
        raise CliError(EXIT_NUMERIC, "non-finite evaluation metric")
    return EXIT_OK


def cmd_gradcheck(a) -> int:
    from .gradcheck_suite import run_scope

    results = run_scope(a.scope, a.seed, progress=lambda r: print(r.line(), flush=True))
    failed = [r for r in results if not r.passed]
    print(f"{a.scope}: {len(results) - len(failed)}/{len(results)} targets passed")
    _write_json(a.json, [vars(r) for r in results])
    if failed:
        worst = max(failed, key=lambda r: r.error)
        raise CliError(EXIT_NUMERIC, f"{len(failed)} gradient checks over threshold; worst {worst.target} {worst.error:.3e}")
    return EXIT_OK


def cmd_bench(a) -> int:
    from .bench import run_bench

    rep = run_bench(a.hw, a.c, a.heads, a.mode, a.repeats, a.seed, a.vanilla_limit)
    print(rep.table())
    _write_json(a.json, rep.as_dict())
    return EXIT_OK


def cmd_ablate(a) -> int:
    from .ablation import run_ablation
    from .train import TrainConfig

    cfg = TrainConfig.load(a.config)
    train_pairs, val_pairs = _splits(a.data)
    res = run_ablation(a.axis, cfg, train_pairs, val_pairs, progress=lambda s: print(s, flush=True))
    print(res.table())
    _write_json(a.json, res.as_dict())
    if not all(r.finite for r in res.rows):
        raise CliError(EXIT_NUMERIC, "an ablation row produced non-finite metrics")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .ablation import AXES
    from .bench import BENCH_MODES, VANILLA_HW_LIMIT
    from .gradcheck_suite import SCOPES

    p = _Parser(prog="modalformer", description="Cross-modal transformer for low-light enhancement.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-data", help="synthesize a paired corpus with modality bundles")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--severity", choices=("low", "med", "high"), default="med")
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("extract", help="extract the nine-map bundle of one image")
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_extract)

    s = sub.add_parser("train", help="train on a corpus")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--resume", action="store_true", help="continue from OUT/last if present")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("infer", help="enhance one image")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dump-modalities", metavar="DIR", help="also write the modality reconstructions")
    s.set_defaults(fn=cmd_infer)

    s = sub.add_parser("eval", help="full-image metrics of a checkpoint on a corpus")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=("train", "val"))
    s.add_argument("--json")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gradcheck", help="64-bit finite-difference gradient checks")
    s.add_argument("--scope", choices=SCOPES, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json")
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("bench-attn", help="attention-map cost scaling")
    s.add_argument("--hw", type=_csv(str), required=True, help="sizes, S or HxW, comma-separated")
    s.add_argument("--c", type=_csv(int), required=True, help="channel counts, comma-separated")
    s.add_argument("--heads", type=int, default=1)
    s.add_argument("--mode", choices=BENCH_MODES, default="cm_msa")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--vanilla-limit", type=int, default=VANILLA_HW_LIMIT)
    s.add_argument("--json")
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("ablate", help="run one ablation axis")
    s.add_argument("--axis", choices=tuple(AXES), required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--json")
    s.set_defaults(fn=cmd_ablate)
    return p


def _classify(e: BaseException) -> int:
    from .autograd import NonFiniteError, ShapeError
    from .bench import BenchError
    from .modalities import BundleError
    from .network import CheckpointError
    from .train import ConfigError, TrainingDiverged

    if isinstance(e, CliError):
        return e.code
    if isinstance(e, (NonFiniteError, TrainingDiverged, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(e, (ConfigError, BenchError)):
        return EXIT_USAGE
    if isinstance(e, (BundleError, CheckpointError, ShapeError, OSError, ValueError)):
        return EXIT_DATA
    raise e


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - every failure becomes one parsable line
        code = _classify(e)
        message = " ".join(str(e).split()) or type(e).__name__
        print(json.dumps({"error": KINDS[code], "code": code, "message": message}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
