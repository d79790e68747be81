"""Run a configured experiment and print RMSE per algorithm at checkpoints.

    python3 scripts/baseline_table.py configs/heterogeneous.yaml --trials 20 --graphs 2
"""
import argparse
import dataclasses
import time

from decbisect.config import load_config


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--trials", type=int, default=None, help="override trials per graph")
    p.add_argument("--graphs", type=int, default=None, help="override graph count")
    p.add_argument("--out", default=None)
    p.add_argument("--at", type=int, nargs="*", default=None, help="effective iterations to report")
    return p.parse_args(argv)


def main(argv=None):
    from decbisect.experiment import run_experiment

    args = parse_args(argv)
    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("trials", args.trials), ("graphs", args.graphs)) if v is not None}
    cfg = dataclasses.replace(cfg, write_traces=False, diagnose_trials=0, **overrides)

    t0 = time.perf_counter()
    res = run_experiment(cfg, out_dir=args.out)
    n = cfg.eff_iters
    at = args.at or sorted({n // 4, n // 2, n})
    print(f"{cfg.trials} trials x {cfg.graphs} graphs, {time.perf_counter() - t0:.1f} s -> {res.out_dir}")
    print(f"{'algo':8s} " + " ".join(f"{'avg@' + str(k):>11s} {'max@' + str(k):>11s}" for k in at))
    for a in cfg.algos:
        print(f"{a:8s} " + " ".join(f"{res.rmse_avg[a][k]:11.4g} {res.rmse_max[a][k]:11.4g}" for k in at))


if __name__ == "__main__":
    main()
