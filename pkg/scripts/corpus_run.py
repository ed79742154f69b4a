"""Train on a small synthetic corpus and compare output PSNR with the raw input."""

import argparse

from modalformer.experiments import corpus_run, log_line

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--iters", type=int, default=2000)
p.add_argument("--count", type=int, default=4)
p.add_argument("--size", type=int, default=32)
p.add_argument("--seed", type=int, default=0)
a = p.parse_args()

r = corpus_run(a.iters, a.count, a.size, a.seed, progress=lambda e: print(log_line(e), flush=True))
print(f"input {r.input_psnr:.2f} dB -> output {r.output_psnr:.2f} dB (gain {r.gain:+.2f} dB) in {r.seconds:.0f} s")
