"""Fit one 32x32 synthetic pair and report the PSNR gain over the raw input."""

import argparse

from modalformer.experiments import log_line, overfit_one

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--iters", type=int, default=1000)
p.add_argument("--size", type=int, default=32)
p.add_argument("--seed", type=int, default=0)
a = p.parse_args()

r = overfit_one(a.iters, a.size, a.seed, progress=lambda e: print(log_line(e), flush=True))
print(f"input {r.input_psnr:.2f} dB -> output {r.output_psnr:.2f} dB (gain {r.gain:+.2f} dB) in {r.seconds:.0f} s")
