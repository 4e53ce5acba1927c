#!/usr/bin/env python3
"""Stage timings (trimap, Laplacian, solve) on 256x256 phantoms."""
import argparse
import tempfile
import time

import numpy as np

from softmask.imaging import load_image, save_image
from softmask.matting import MattingParams, matte
from softmask.phantom import random_phantom
from softmask.trimap import GrabCutParams, trimap_from_recist


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(args.repeats):
            ph = random_phantom(args.size, args.seed + i)
            # round-trip through an 8-bit file, as the pipeline does
            save_image(ph.image, f"{tmp}/img.pgm")
            img = load_image(f"{tmp}/img.pgm")
            t0 = time.perf_counter()
            tri = trimap_from_recist(img, ph.recist, GrabCutParams(seed=args.seed + i))
            t_tri = (time.perf_counter() - t0) * 1e3
            res = matte(img, tri, MattingParams())
            rows.append((t_tri, res.laplacian_ms, res.solve_ms, res.iterations))
            print(f"run {i}: trimap {t_tri:7.1f} ms  laplacian {res.laplacian_ms:6.1f} ms  "
                  f"solve {res.solve_ms:6.1f} ms  ({res.iterations} CG iterations)")
    t = np.array(rows)
    total = t[:, 0] + t[:, 1] + t[:, 2]
    print(f"median trimap+matting: {np.median(total):.1f} ms over {len(rows)} runs "
          "(reference figures: 5 ms trimap, 15 ms matting)")


if __name__ == "__main__":
    main()
