"""Recall of the detector vs the 25%-of-weekly-median rule, by outage depth.

Also reports bin overlap (Venn cells) between the two alarm sets.
"""

import argparse

import numpy as np

from ibrwatch.detect import AlarmKind
from ibrwatch.evaluation import baseline_ioda, overlap_counts, truth_mask
from ibrwatch.pipeline import run_pipeline
from ibrwatch.synth import make_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--depths", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.9, 1.0])
    args = ap.parse_args()

    print(f"{'depth':>6} {'recall':>7} {'baseline':>9}   overlap cells")
    for depth in args.depths:
        ours = base = pos = 0
        cells = {}
        for e in make_corpus(args.n, seed=args.seed, depth_range=(depth, depth)):
            result = run_pipeline(e.series)
            test = result.fitted.split.test
            offset = len(e.series) - len(test)
            truth = truth_mask(e.truth, test.grid, range(len(test)))
            a = np.zeros(len(test), dtype=bool)
            a[[x.bin_index for x in result.alarms if x.kind is AlarmKind.OUTAGE]] = True
            b = np.zeros(len(test), dtype=bool)
            b[[x.bin_index - offset for x in baseline_ioda(e.series, start=offset)]] = True
            pos += int(truth.sum())
            ours += int((a & truth).sum())
            base += int((b & truth).sum())
            for k, v in overlap_counts({"detector": a, "baseline": b}).items():
                cells["&".join(k)] = cells.get("&".join(k), 0) + v
        print(f"{depth:>6} {ours / pos:7.4f} {base / pos:9.4f}   {cells}")


if __name__ == "__main__":
    main()
