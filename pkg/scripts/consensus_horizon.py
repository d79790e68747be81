"""Track the network dynamic range V_t over long horizons.

Runs the asynchronous algorithm on one geometric graph and reports, for each
checkpoint, the largest (over the b-grid) trial-averaged dynamic range, its
block averages and the effective iteration after which it stays below a
threshold.

    python3 scripts/consensus_horizon.py --trials 20 --eff-iters 1000
"""
import argparse
import tempfile
import time

import numpy as np

from decbisect.config import parse_config
from decbisect.experiment import run_experiment


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--eps", type=float, default=0.45)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.35)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--eff-iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=505)
    p.add_argument("--block", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--save", default=None, help="write the V curve to this .npy file")
    return p.parse_args(argv)


def dynamic_range_curve(args):
    cfg = parse_config(
        f"M: {args.M}\neps: {args.eps}\nalpha: {args.alpha}\n"
        f"graph: {{type: geometric, radius: {args.radius}}}\nalgos: [async]\n"
        f"eff_iters: {args.eff_iters}\ntrials: {args.trials}\ngraphs: 1\nseed: {args.seed}\n"
        "write_traces: false\ndiagnose_trials: 0\n"
    )
    acc = None
    with tempfile.TemporaryDirectory() as d:

        def collect(g, t, trace):
            nonlocal acc
            v = np.ptp(trace.cdf, axis=1)
            acc = v if acc is None else acc + v

        run_experiment(cfg, out_dir=d, on_trace=collect)
    return acc / args.trials  # (eff_iter, b)


def main(argv=None):
    args = parse_args(argv)
    t0 = time.perf_counter()
    V = dynamic_range_curve(args)
    worst = V.max(axis=1)
    n = worst.size - 1
    # uniform priors start at V=0, so look for the point after which V stays low
    above = np.flatnonzero(worst >= args.threshold)
    settled = int(above[-1]) + 1 if above.size else 0
    blocks = worst[1 : 1 + (n // args.block) * args.block].reshape(-1, args.block).mean(axis=1)

    print(f"M={args.M} eps={args.eps} alpha={args.alpha} trials={args.trials} ({time.perf_counter() - t0:.1f} s)")
    for k in sorted({0, 50, 100, 200, 400, 800, 1600, n} & set(range(n + 1))):
        print(f"  eff_iter {k:5d}: max_b mean V = {worst[k]:.4f}")
    print(f"  {args.block}-iteration block means: {np.array2string(blocks, precision=4)}")
    print(f"  block means monotone decreasing: {bool(np.all(np.diff(blocks) < 0))}")
    if settled <= n:
        print(f"  max_b mean V stays below {args.threshold} from eff_iter {settled} on")
    else:
        print(f"  max_b mean V stays >= {args.threshold} through eff_iter {n}")
    if args.save:
        np.save(args.save, V)


if __name__ == "__main__":
    main()
