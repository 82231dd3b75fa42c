"""Household-analog classification at 8 grips per class, all three networks, several seeds.

    python scripts/table1_household.py --seeds 0 1 2 --out runs/table1
"""
import argparse
import sys
import time
from pathlib import Path

from kiip.experiment import HOUSEHOLD, ExperimentConfig, object_family, results_table, run_sweep, write_results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--grips", type=int, default=8)
    ap.add_argument("--networks", nargs="+", default=["fg", "fg_ol", "ol_e2e"])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--out", default="runs/table1")
    args = ap.parse_args(argv)

    labels = object_family(HOUSEHOLD).labels
    summary = {n: [] for n in args.networks}
    for seed in args.seeds:
        cfg = ExperimentConfig(object_set=HOUSEHOLD, grips_train=args.grips, seed=seed, epochs=args.epochs,
                               output_dir=str(Path(args.out) / f"seed{seed}"))
        t0 = time.perf_counter()
        rows = run_sweep(cfg, [args.grips], args.networks, log=lambda m: print(m, file=sys.stderr))
        write_results(rows, cfg)
        print(f"seed {seed} ({time.perf_counter() - t0:.0f} s)")
        print(results_table(rows, labels))
        for r in rows:
            summary[r.network].append(r.accuracy)
    for n, accs in summary.items():
        wins = sum(a >= 0.8 for a in accs)
        print(f"{n:7s} " + " ".join(f"{100 * a:5.0f}%" for a in accs) + f"   {wins}/{len(accs)} seeds at >= 80%")


if __name__ == "__main__":
    main()
