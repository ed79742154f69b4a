"""Attention cost scaling: FLOP and wall-time exponents in HW and C."""

import argparse

from modalformer.bench import run_bench

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--sizes", default="64,96,128,192,256")
p.add_argument("--channels", default="32")
p.add_argument("--heads", type=int, default=1)
p.add_argument("--repeats", type=int, default=5)
p.add_argument("--with-vanilla", action="store_true", help="also fit the token-attention baseline at small sizes")
a = p.parse_args()

rep = run_bench(a.sizes.split(","), [int(c) for c in a.channels.split(",")], a.heads, repeats=a.repeats)
print(rep.table())
if a.with_vanilla:
    print(run_bench(["16", "24", "32", "48"], [8], 1, mode="vanilla", repeats=1).table())
