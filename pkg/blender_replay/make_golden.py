#!/usr/bin/env python3
"""Regenerate the golden sequence pack and its reference replays.

The five sequences cover the operator mapping while avoiding known
cross-implementation ambiguities (open boundaries, bevel corner
topology). References are produced through the library CLI — the same
`opforge replay` a user would run — so the pack always matches the
released replay semantics.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "golden")

SEQUENCES = {
    "g0_boss": [
        {"kind": "Extrude", "params": {"faces": [1], "height": 0.4,
                                       "width": 1.0, "angles": [0.0, 0.0]}},
    ],
    "g1_subdivided": [
        {"kind": "Subdivision", "params": {"level": 1}},
    ],
    "g2_posed": [
        {"kind": "GlobalAffine", "params": {"kind": "translate",
                                            "vec": [0.2, -0.1, 0.3]}},
        {"kind": "GlobalAffine", "params": {"kind": "scale",
                                            "vec": [1.5, 0.8, 1.2]}},
    ],
    "g3_dented": [
        {"kind": "Extrude", "params": {"faces": [1], "height": 0.3,
                                       "width": 1.0, "angles": [0.0, 0.0]}},
        {"kind": "VertexDisplace", "params": {"offsets": [
            [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.05],
            [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0], [0.0, 0.0, -0.05],
            [0.0, 0.0, 0.0], [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0], [0.02, 0.02, 0.0]]}},
    ],
    "g4_turned": [
        {"kind": "Extrude", "params": {"faces": [3], "height": 0.25,
                                       "width": 1.0, "angles": [0.0, 0.0]}},
        {"kind": "GlobalAffine", "params": {"kind": "rotate",
                                            "vec": [0.0, 0.0, 0.3]}},
    ],
}


def main() -> int:
    os.makedirs(GOLDEN, exist_ok=True)
    for name, operations in SEQUENCES.items():
        doc = {"version": "1",
               "initial": {"kind": "cube", "size": 1.0},
               "operations": operations,
               "provenance": {}}
        seq_path = os.path.join(GOLDEN, f"{name}.json")
        with open(seq_path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        ref_path = os.path.join(GOLDEN, f"{name}.ref.obj")
        subprocess.run(["opforge", "replay", seq_path, "--out", ref_path],
                       check=True)
        print(f"wrote {seq_path} and {ref_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
