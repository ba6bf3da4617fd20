"""Run the national-shutdown fixture end to end and describe what was flagged."""

import argparse
from datetime import datetime, timezone

from ibrwatch.detect import AlarmKind
from ibrwatch.pipeline import run_pipeline
from ibrwatch.synth import egypt_fixture


def utc(ts):
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%d %H:%M")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=2011)
    args = ap.parse_args()

    series, truth = egypt_fixture(args.seed)
    result = run_pipeline(series)
    sel = result.fitted.selection
    print(f"selected order {sel.order}, sigma_hat {sel.model.sigma_hat:.2f}")
    for c in sorted(sel.candidates, key=lambda c: c.rmse)[:5]:
        print(f"  {c.order}  rmse {c.rmse:.3f}")

    (blackout,) = truth
    print(f"truth: {utc(blackout.start)} -> {utc(blackout.end)}")
    for ev in result.events:
        tag = "  <-- blackout" if ev.start < blackout.end and ev.end > blackout.start else ""
        if ev.bin_count > 1 or tag:
            print(f"event {utc(ev.start)} -> {utc(ev.end)}  bins {ev.bin_count}  max d {ev.max_distance:.1f}{tag}")
    singles = sum(ev.bin_count == 1 for ev in result.events)
    print(f"single-bin events elsewhere: {singles}")

    surge = range(blackout.end, blackout.end + 4 * 86400)
    kinds = {k: sum(a.kind is k and a.timestamp in surge for a in result.alarms) for k in AlarmKind}
    print("alarms during surge:", {k.value: v for k, v in kinds.items()})


if __name__ == "__main__":
    main()
