"""Grip-count sweep on the LEGO-analog family: accuracy and training time per network.

    python scripts/table2_lego_sweep.py --grips 1 2 4 8 16 --out runs/table2
"""
import argparse
import sys

from kiip.experiment import LEGO, ExperimentConfig, object_family, results_table, run_sweep, write_results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--object-set", default=LEGO)
    ap.add_argument("--grips", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    ap.add_argument("--networks", nargs="+", default=["fg", "fg_ol", "ol_e2e"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--out", default="runs/table2")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig(object_set=args.object_set, grips_train=max(args.grips), seed=args.seed,
                           epochs=args.epochs, output_dir=args.out)
    rows = run_sweep(cfg, args.grips, args.networks, log=lambda m: print(m, file=sys.stderr))
    out = write_results(rows, cfg)
    print(results_table(rows, object_family(args.object_set).labels))
    print(f"written to {out}/results.csv and {out}/timings.csv")


if __name__ == "__main__":
    main()
