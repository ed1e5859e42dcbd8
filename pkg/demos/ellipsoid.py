"""Minimum-volume enclosing ellipsoid of a random planar cloud."""

import argparse

import numpy as np

from sensel.mvee import enclosure_check, mvee_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--kappa", type=float, default=1e-4)
    args = ap.parse_args()

    P = np.random.default_rng(args.seed).normal(size=(args.m, 2))
    E, z = mvee_solve(P, kappa=args.kappa)
    rep = enclosure_check(E, P)
    support = np.flatnonzero(z > 1e-2)
    print("shape matrix M:\n", np.array2string(E.M, precision=4))
    print(f"support points {support.tolist()} carry weight {z[support].sum():.4f} of {z.sum():.4f}")
    print(f"largest x^T M x = {rep.max_ratio:.5f}, log det M^-1 = {E.volume_logdet():.4f}")


if __name__ == "__main__":
    main()
