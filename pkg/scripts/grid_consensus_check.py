"""Cross-check the dynamic range with an independent grid-based simulator.

The reference simulator stores each belief as masses on ``--bins`` equal bins
and implements the pairwise step directly with numpy, sharing nothing with
the piecewise-exact belief code except the graph.  Both simulators run the
same scenario with independent random streams; their trial-averaged
dynamic-range curves should agree up to Monte-Carlo noise.

    python3 scripts/grid_consensus_check.py --trials 20 --eff-iters 200
"""
import argparse
import time

import numpy as np

from decbisect.config import parse_config
from decbisect.engine import Scenario, default_b_grid, run_async
from decbisect.experiment import build_model


class GridNetwork:
    """All agents' beliefs as an ``(M, n_bins)`` mass array."""

    def __init__(self, M, n_bins):
        self.edges = np.linspace(0.0, 1.0, n_bins + 1)
        self.h = 1.0 / n_bins
        self.w = np.full((M, n_bins), self.h)

    def median(self, i):
        c = np.cumsum(self.w[i])
        k = int(np.searchsorted(c, 0.5))
        below = c[k - 1] if k else 0.0
        return k, (0.5 - below) / self.w[i, k]

    def step(self, i, j, alpha, eps, x_star, rng):
        k, frac = self.median(i)
        x_hat = self.edges[k] + frac * self.h
        z = int(x_star <= x_hat)
        y = z if rng.random() >= eps else 1 - z
        f1 = 1.0 - eps if y == 1 else eps
        lo, hi = 2.0 * f1, 2.0 * (1.0 - f1)
        upd = self.w[i].copy()
        upd[:k] *= lo
        upd[k + 1 :] *= hi
        upd[k] *= frac * lo + (1.0 - frac) * hi
        new = alpha * upd + (1.0 - alpha) * self.w[j]
        self.w[i] = new
        self.w[j] = new

    def cdf(self, xs):
        c = np.concatenate([np.zeros((self.w.shape[0], 1)), np.cumsum(self.w, axis=1)], axis=1)
        return np.array([np.interp(xs, self.edges, row) for row in c])


def grid_trial(model, eff_iters, x_star, b_grid, n_bins, rng):
    M = model.M
    net = GridNetwork(M, n_bins)
    q = np.asarray(model.q)
    P = np.asarray(model.P)
    V = np.empty((eff_iters + 1, b_grid.size))
    V[0] = np.ptp(net.cdf(b_grid), axis=0)
    for t in range(eff_iters * M):
        i = int(rng.choice(M, p=q))
        j = int(rng.choice(M, p=P[i]))
        net.step(i, j, float(model.alpha[i]), float(model.eps[i]), x_star, rng)
        if (t + 1) % M == 0:
            V[(t + 1) // M] = np.ptp(net.cdf(b_grid), axis=0)
    return V


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--eps", type=float, default=0.45)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.35)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--eff-iters", type=int, default=200)
    p.add_argument("--bins", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=2024)
    return p.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    cfg = parse_config(
        f"M: {args.M}\neps: {args.eps}\nalpha: {args.alpha}\n"
        f"graph: {{type: geometric, radius: {args.radius}}}\nalgos: [async]\n"
        f"eff_iters: {args.eff_iters}\ntrials: 1\ngraphs: 1\nseed: {args.seed}\n"
    )
    model = build_model(cfg, 0)
    targets = np.random.default_rng([args.seed, 1]).random(args.trials)
    exact_rng = np.random.default_rng([args.seed, 2])
    grid_rng = np.random.default_rng([args.seed, 3])

    t0 = time.perf_counter()
    exact = np.zeros((args.eff_iters + 1, 11))
    grid = np.zeros_like(exact)
    for x_star in targets:
        b_grid = default_b_grid(float(x_star))
        tr = run_async(Scenario(model, args.eff_iters, float(x_star)), exact_rng, record_events=False)
        exact += np.ptp(tr.cdf, axis=1)
        grid += grid_trial(model, args.eff_iters, float(x_star), b_grid, args.bins, grid_rng)
    exact /= args.trials
    grid /= args.trials

    we, wg = exact.max(axis=1), grid.max(axis=1)
    print(f"{args.trials} trials per simulator, {args.bins} bins ({time.perf_counter() - t0:.1f} s)")
    print("eff_iter  piecewise  grid")
    for k in range(0, args.eff_iters + 1, max(1, args.eff_iters // 10)):
        print(f"{k:8d}  {we[k]:9.4f}  {wg[k]:.4f}")
    late = slice(args.eff_iters // 2, None)
    print(f"mean over second half: piecewise {we[late].mean():.4f}, grid {wg[late].mean():.4f}")


if __name__ == "__main__":
    main()
