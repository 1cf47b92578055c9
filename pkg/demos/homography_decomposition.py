"""Recover plane and motion from a differential homography, including the
two-fold ambiguity.

From normal flows on a planar scene the solver only pins the homography up
to an additive multiple of the identity; the true matrix comes back from
an eigenvalue condition, and its decomposition yields two (translation,
normal) candidates, one of which matches the scene.
"""
import argparse

import numpy as np

from evnormalflow import (ConstantMotion, PlaneScene, Velocity, decompose_hd,
                          generate_dataset, recover_true_hd,
                          solve_diff_homography)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    v = Velocity(nu=(0.25, -0.15, 0.3), omega=(0.1, -0.2, 0.15))
    scene = PlaneScene(normal=(0.3, -0.2, 1.0), d=2.0)
    obs, truth = generate_dataset(scene, ConstantMotion(v), count=600,
                                  seed=args.seed)

    h_l = solve_diff_homography(obs)
    h_d, eps = recover_true_hd(h_l)
    print("estimated homography (after removing the identity shift "
          f"eps = {eps:+.4f}):")
    print(np.array2string(h_d.h, precision=4, suppress_small=True))
    print("ground truth:")
    print(np.array2string(truth.hd.h, precision=4, suppress_small=True))
    print()

    decomp = decompose_hd(h_d)
    true_n = np.asarray(scene.normal)
    true_t = np.asarray(v.nu) / scene.d
    print(f"true nu/d = {np.array2string(true_t, precision=4)}   "
          f"N = {np.array2string(true_n, precision=4)}")
    for i, cand in enumerate(decomp.candidates, 1):
        n_c, t_c = cand.normal, cand.nu_over_d
        if n_c[2] < 0:
            n_c, t_c = -n_c, -t_c
        err = max(np.linalg.norm(t_c - true_t), np.linalg.norm(n_c - true_n))
        tag = "matches scene" if err < 1e-6 else "alternative interpretation"
        print(f"candidate {i}: nu/d = {np.array2string(t_c, precision=4)}   "
              f"N = {np.array2string(n_c, precision=4)}   "
              f"omega = {np.array2string(cand.omega, precision=4)}   ({tag})")
    print()
    print("both candidates reproduce the homography exactly; only extra")
    print("knowledge (cheirality over time, a second view) picks one")


if __name__ == "__main__":
    main()
