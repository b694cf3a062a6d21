#!/usr/bin/env python3
"""Blender replay harness.

Rebuilds a design-sequence JSON with native Blender operators, exports
the result as OBJ, and (when a reference replay OBJ is supplied)
reports geometric agreement with it.

Targets Blender 4.0. Invoke as:

    blender --background --python harness.py -- \
        --seq SEQ.json --out OUT.obj --report REPORT.json [--ref REF.obj]

The report JSON is written even on partial failure; it carries the
per-record execution status and the index of the first failing record.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from bpy_exec import ExecError, ReplayReport, blender_execute  # noqa: E402
from compare import compare_objs  # noqa: E402


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Arguments after Blender's `--` separator (or the full list when
    run outside Blender)."""
    if "--" in argv:
        argv = argv[argv.index("--") + 1:]
    ap = argparse.ArgumentParser(prog="harness.py")
    ap.add_argument("--seq", required=True, help="design sequence JSON")
    ap.add_argument("--out", required=True, help="exported OBJ path")
    ap.add_argument("--report", required=True, help="report JSON path")
    ap.add_argument("--ref", default=None,
                    help="library replay OBJ to compare against")
    return ap.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    try:
        report = blender_execute(args.seq, args.out)
    except ExecError as e:
        # version mismatch or unreadable sequence: report and abort
        report = ReplayReport(out_obj=args.out)
        report.records = []
        report.first_failure = 0
        doc = report.to_dict()
        doc["error"] = str(e)
        with open(args.report, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
        print(f"harness: {e}", file=sys.stderr)
        return 1

    if args.ref is not None and report.exported:
        agree = compare_objs(args.out, args.ref)
        report.chamfer = agree["chamfer"]
        report.vertex_delta = agree["vertex_delta"]
        report.face_delta = agree["face_delta"]

    with open(args.report, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
    return 0 if report.first_failure < 0 else 1


def main(argv: list[str] | None = None) -> int:
    return run(parse_args(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    sys.exit(main())
