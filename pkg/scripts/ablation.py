"""Run the ablation axes at desk scale on a fresh synthetic corpus."""

import argparse
import json
import tempfile

from modalformer.ablation import AXES, run_ablation
from modalformer.modalities import generate_corpus
from modalformer.train import TrainConfig

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--axis", choices=tuple(AXES), action="append", help="repeatable; default all")
p.add_argument("--iters", type=int, default=150)
p.add_argument("--channels", type=int, default=8)
p.add_argument("--count", type=int, default=6)
p.add_argument("--size", type=int, default=32)
p.add_argument("--json")
a = p.parse_args()

base = TrainConfig(base_channels=a.channels, patch=a.size, batch=1, total_iters=a.iters, log_every=50,
                   eval_every=10**9)
with tempfile.TemporaryDirectory() as tmp:
    pairs = generate_corpus(tmp, a.count, (a.size, a.size), seed=0)
train = [x for x in pairs if x.split == "train"]
val = [x for x in pairs if x.split == "val"]
out = {}
for axis in a.axis or AXES:
    res = run_ablation(axis, base, train, val, progress=lambda s: print(s, flush=True))
    print(res.table(), flush=True)
    out[axis] = res.as_dict()
if a.json:
    with open(a.json, "w") as f:
        json.dump(out, f, indent=1)
