#!/usr/bin/env python3
"""Pairwise mean-Dice matrix between simulated raters, their consensus and the soft-mask labels."""
import argparse

import numpy as np

from softmask.labels import binarize, consensus
from softmask.matting import MattingParams, matte
from softmask.metrics import matrix_csv, pairwise_dice
from softmask.phantom import rater_masks, random_phantom
from softmask.trimap import trimap_from_multirater


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=10)
    ap.add_argument("--raters", type=int, default=4)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    raters = {f"rater{j + 1}": [] for j in range(args.raters)}
    soft, truth = [], []
    for i in range(args.cases):
        ph = random_phantom(args.size, args.seed * 1000 + i)
        masks = rater_masks(ph.truth, rng, args.raters)
        for j, m in enumerate(masks):
            raters[f"rater{j + 1}"].append(m)
        alpha = matte(ph.image, trimap_from_multirater(masks), MattingParams()).alpha
        soft.append(binarize(alpha))
        truth.append(ph.truth)
    cons = [consensus(ms, 0.5) for ms in zip(*raters.values())]
    names, mat = pairwise_dice(raters, {"50% consensus": cons, "soft mask": soft, "truth": truth})
    print(matrix_csv(names, mat), end="")


if __name__ == "__main__":
    main()
