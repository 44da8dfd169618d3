"""Compiled vs pure-Python gridworld kernels: Q-learning training and greedy rollouts.

Usage: python benchmarks/bench_kernels.py [--episodes N] [--repeats R]
"""

import argparse
import time

import numpy as np

from lfidgp.simulators import _nw_py, navigation
from lfidgp.simulators.navigation import TRUE_REWARDS, default_world


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--rollouts", type=int, default=200)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)
    if not navigation.COMPILED:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    from lfidgp.simulators import _nwkernels

    w = default_world()
    kind, reward = w.cell_arrays(TRUE_REWARDS)
    H, W = w.shape
    cfg = navigation.QConfig(episodes=args.episodes)
    train_args = (kind, reward, H, W, w.start, cfg.episodes, cfg.alpha, cfg.gamma, cfg.eps_start,
                  cfg.eps_end, cfg.max_steps, 12345)
    print(f"{'kernel':24s} {'compiled s':>11s} {'python s':>11s} {'speed-up':>9s}  identical")
    tc, Qc = best_of(lambda: np.asarray(_nwkernels.train_q(*train_args)), args.repeats)
    tp, Qp = best_of(lambda: np.asarray(_nw_py.train_q(*train_args)), args.repeats)
    print(f"{'train_q x' + str(args.episodes):24s} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f}  {np.array_equal(Qc, Qp)}")

    def rollouts(mod, Q):
        return [tuple(mod.rollout(Q, kind, reward, H, W, w.start, 0.1, cfg.max_steps, s))
                for s in range(args.rollouts)]

    tc, rc = best_of(lambda: rollouts(_nwkernels, Qc), args.repeats)
    tp, rp = best_of(lambda: rollouts(_nw_py, Qp), args.repeats)
    print(f"{'rollout x' + str(args.rollouts):24s} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f}  {rc == rp}")


if __name__ == "__main__":
    main()
