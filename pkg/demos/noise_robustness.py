"""How each solver degrades as normal-flow noise grows.

Sweeps pixel-equivalent noise over five decades with common random
numbers, so each column is directly comparable across models.
"""
import argparse

import numpy as np

from evnormalflow import ModelKind, run_noise_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = (0.01, 0.1, 1.0, 10.0, 100.0)
    print(f"median relative error, {args.trials} trials x {args.samples} "
          f"samples, seed {args.seed}")
    header = "model              " + "".join(f"{g:>10g}px" for g in grid)
    print(header)
    print("-" * len(header))
    for kind in ModelKind:
        res = run_noise_sweep(kind, noise_grid_px=grid, trials=args.trials,
                              samples=args.samples, seed=args.seed)
        row = "".join(f"{m:>12.2e}" for m in res.median)
        print(f"{kind.value:<19s}{row}")
    print()
    print("errors scale linearly with noise until ~10 px, where outliers in")
    print("the sampled gradients start to dominate the medians")


if __name__ == "__main__":
    main()
