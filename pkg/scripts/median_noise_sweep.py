"""How close the 10-frame temporal median gets to the noise-free render, per noise level.

Prints the fraction of valid pixels inside k * sigma / sqrt(n) for a few k, next to the
Gaussian-median prediction (the sample median has standard error about 1.2533 sigma / sqrt(n)).

    python scripts/median_noise_sweep.py --outlier-prob 0.2
"""
import argparse
import math

import numpy as np

from kiip.pipeline import temporal_median
from kiip.sensor import NoiseModel, PinholeCamera, Scene, add_noise, render_depth
from kiip.shapes import icosphere


def gaussian_within(k: float, n: int) -> float:
    # P(|median error| <= k sigma / sqrt(n)) under the asymptotic median distribution
    return math.erf(k / (1.2533 * math.sqrt(2)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.001, 0.003, 0.005])
    ap.add_argument("--outlier-prob", type=float, default=0.2)
    ap.add_argument("--outlier-range", type=float, default=0.05)
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--seed", type=int, default=4)
    args = ap.parse_args(argv)

    clean = render_depth(Scene(icosphere(0.05, 4, center=(0.0, 0.0, 0.8))), PinholeCamera())
    ks = (2.0, 3.0, 4.0, 5.0)
    print("sigma_mm  " + "  ".join(f"k={k:.0f}" for k in ks) + "   (gaussian, no outliers: "
          + "  ".join(f"{100 * gaussian_within(k, args.frames):.1f}%" for k in ks) + ")")
    for sigma in args.sigmas:
        model = NoiseModel(sigma, 0.0, args.outlier_prob, args.outlier_range, args.seed)
        med = temporal_median([add_noise(clean, model, stream=i) for i in range(args.frames)])
        both = med.valid & clean.valid
        err = np.abs(med.depth[both] - clean.depth[both])
        fr = [np.mean(err <= k * sigma / math.sqrt(args.frames)) for k in ks]
        print(f"{1000 * sigma:8.1f}  " + "  ".join(f"{100 * f:5.1f}%" for f in fr))


if __name__ == "__main__":
    main()
