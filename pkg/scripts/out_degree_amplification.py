"""Mean cluster size against the seed's number of lenders, pooled over snapshots."""
import argparse
import csv
import sys
from collections import defaultdict

from contagionx.stress import sweep
from contagionx.syngen import GeneratorConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snapshots", type=int, default=20)
    ap.add_argument("--n-banks", type=int, default=500)
    ap.add_argument("--component", choices=["all", "Out", "InOut"], default="all")
    args = ap.parse_args()

    by_deg = defaultdict(list)
    for seed in range(args.snapshots):
        for s in sweep(generate(GeneratorConfig.calibrated(seed=seed, n_banks=args.n_banks))).seeds:
            if args.component in ("all", s.component):
                by_deg[s.out_degree].append(s.cluster_size)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["out_degree", "count", "mean_cluster_size"])
    for d in sorted(by_deg):
        sizes = by_deg[d]
        w.writerow([d, len(sizes), f"{sum(sizes) / len(sizes):.4f}"])


if __name__ == "__main__":
    main()
