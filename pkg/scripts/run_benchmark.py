#!/usr/bin/env python3
"""Run the synthetic recovery benchmark and report per-case scores.

Each case replays a fixed truth sequence into a target mesh, fits it,
and scores the recovered sequence: unit-normalized chamfer distance and
token-level normalized LCS against the truth. Cases run in parallel
worker processes, one core each.
"""

import argparse
import json
import sys

from opforge.benchmark import run_benchmark


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=str, default="0-9",
                    help="case indices, e.g. '0-9' or '1,3,5'")
    ap.add_argument("--jobs", type=int, default=8)
    ap.add_argument("--out", type=str, default=None,
                    help="write the JSON report here")
    args = ap.parse_args()

    if "-" in args.cases:
        lo, hi = args.cases.split("-")
        indices = list(range(int(lo), int(hi) + 1))
    else:
        indices = [int(x) for x in args.cases.split(",")]

    report = run_benchmark(indices, jobs=args.jobs)
    results = report["results"]

    cd_pass = lcs_pass = 0
    for r in results:
        if "error" in r:
            print(f"[{r['index']}] ERROR {r['error']}")
            continue
        cd_ok = r["chamfer"] <= 5e-3
        lcs_ok = r["normalized_lcs"] >= 0.6
        cd_pass += cd_ok
        lcs_pass += lcs_ok
        print(f"[{r['index']}] {r['name']:18s} cd={r['chamfer']:.2e} "
              f"({'ok' if cd_ok else 'MISS'})  nlcs={r['normalized_lcs']:.2f} "
              f"({'ok' if lcs_ok else 'MISS'})  len {r['truth_length']}->"
              f"{r['recovered_length']}  {r['wall_clock']:.0f}s")
        print(f"     truth: {' '.join(r['truth_tokens'])}")
        print(f"     found: {' '.join(r['recovered_tokens'])}")
    print(f"chamfer<=5e-3 on {cd_pass}/{len(results)}, "
          f"nLCS>=0.6 on {lcs_pass}/{len(results)}, "
          f"wall {report['total_wall']:.0f}s with {report['jobs']} jobs")

    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1)
        print(f"report written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
