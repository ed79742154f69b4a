"""Tensor-directory checkpoints.

A directory holds ``manifest.txt`` with one line per tensor,
``name shape offset file``, where shape is ``d0xd1x...`` (``-`` for a
scalar) and offset is the tensor's element offset in the concatenation of
all tensors in manifest order. Each tensor is one MFT1 file.
"""

from __future__ import annotations

import json
import os
import shutil
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from ..autograd import mft
from .layers import Module

MANIFEST = "manifest.txt"


class CheckpointError(ValueError):
    pass


def _shape_str(shape) -> str:
    return "x".join(map(str, shape)) if shape else "-"


def _parse_shape(s: str) -> tuple[int, ...]:
    return () if s == "-" else tuple(int(d) for d in s.split("x"))


def write_tensors(path, arrays: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines, offset = [], 0
    for i, (name, arr) in enumerate(arrays.items()):
        if any(ch.isspace() for ch in name):
            raise CheckpointError(f"tensor name {name!r} contains whitespace")
        fname = f"t{i:05d}.mft"
        mft.save(path / fname, np.asarray(arr))
        lines.append(f"{name} {_shape_str(np.shape(arr))} {offset} {fname}")
        offset += int(np.size(arr))
    (path / MANIFEST).write_text("\n".join(lines) + "\n")


def read_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.exists():
        raise CheckpointError(f"no tensor manifest in {path}")
    out, expected = {}, 0
    for n, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise CheckpointError(f"{manifest}:{n}: expected 'name shape offset file'")
        name, shape, offset, fname = parts
        if int(offset) != expected:
            raise CheckpointError(f"{manifest}:{n}: offset {offset} != {expected}")
        try:
            arr = mft.load(path / fname)
        except (OSError, mft.MFTFormatError) as e:
            raise CheckpointError(f"tensor {name}: {e}") from e
        if arr.shape != _parse_shape(shape):
            raise CheckpointError(f"tensor {name}: file shape {arr.shape} != manifest {shape}")
        out[name] = arr
        expected += arr.size
    return out


def atomic_dir(final: Path, write) -> None:
    """Build a directory next to ``final`` then swap it in with renames."""
    final = Path(final)
    tmp = final.with_name(final.name + ".tmp")
    old = final.with_name(final.name + ".old")
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    write(tmp)
    if final.exists():
        shutil.rmtree(old, ignore_errors=True)
        os.replace(final, old)
        os.replace(tmp, final)
        shutil.rmtree(old)
    else:
        os.replace(tmp, final)


def save_model(path, model: Module, config: Optional[dict] = None) -> None:
    def write(d: Path):
        write_tensors(d / "params", model.state_dict())
        if config is not None:
            (d / "model.json").write_text(json.dumps(config, indent=1, sort_keys=True))

    atomic_dir(Path(path), write)


def load_params(path) -> dict[str, np.ndarray]:
    return read_tensors(Path(path) / "params")


def load_model(path):
    """Rebuild a model from a checkpoint directory holding ``model.json``."""
    from .model import ModalFormer, ModelConfig

    path = Path(path)
    cfg_file = path / "model.json"
    if not cfg_file.exists():
        raise CheckpointError(f"{path} has no model.json")
    model = ModalFormer(ModelConfig(**json.loads(cfg_file.read_text())))
    try:
        model.load_state_dict(load_params(path))
    except (KeyError, ValueError) as e:
        raise CheckpointError(str(e)) from e
    return model
