"""Command-line surface: fit, replay, metrics, emit-bpy, gradcheck,
seqcmp.

Exit codes: 0 success, 1 usage error, 2 data error, 3 fit finished
above its convergence threshold (partial sequence still written). All
randomness flows from --seed; OPFORGE_THREADS caps internal
parallelism. Outputs are deterministic byte-for-byte for identical
inputs and seed, so logs carry no timestamps.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_UNCONVERGED = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class DataError(Exception):
    """Unreadable or invalid input data (exit code 2)."""


def _apply_thread_cap():
    cap = os.environ.get("OPFORGE_THREADS")
    if cap:
        try:
            n = int(cap)
        except ValueError:
            raise DataError(f"OPFORGE_THREADS must be an integer, got {cap!r}")
        if n > 0:
            import torch

            torch.set_num_threads(n)


def _read_text(path: str) -> str:
    try:
        with open(path, "r") as fh:
            return fh.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from e


def _write_text(path: str, text: str):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror}") from e


def _load_target(path: str):
    """Mesh (.obj) or point cloud (.xyz) target."""
    from .mesh import MeshError, load_obj, load_xyz

    if not os.path.exists(path):
        raise DataError(f"target file not found: {path}")
    try:
        if path.lower().endswith(".xyz"):
            return load_xyz(path)
        return load_obj(path)
    except (MeshError, ValueError) as e:
        raise DataError(f"{path}: {e}") from e


def _load_sequence(path: str):
    from .sequence import SequenceError, from_json

    try:
        return from_json(_read_text(path))
    except SequenceError as e:
        raise DataError(f"{path}: {e}") from e


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


# -- subcommands ----------------------------------------------------------


def _cmd_fit(args) -> int:
    from .fit import FitConfig, FitError, fit
    from .sequence import to_json

    target = _load_target(args.target)
    cfg_dict = {}
    if args.config:
        try:
            cfg_dict = json.loads(_read_text(args.config))
        except json.JSONDecodeError as e:
            raise DataError(f"{args.config}: invalid JSON: {e}") from e
        if not isinstance(cfg_dict, dict):
            raise DataError(f"{args.config}: config must be a JSON object")
    if args.seed is not None:
        cfg_dict["seed"] = args.seed      # flags win over the config file
    try:
        cfg = FitConfig.from_dict(cfg_dict)
    except (FitError, TypeError) as e:
        raise DataError(f"bad config: {e}") from e

    log_fh = open(args.log, "w") if args.log else None
    try:
        log_fn = (lambda rec: log_fh.write(_json_line(rec))) if log_fh else None
        result = fit(target, cfg, log_fn=log_fn)
    finally:
        if log_fh:
            log_fh.close()

    _write_text(args.out, to_json(result.sequence))
    if args.checkpoint:
        _write_text(args.checkpoint, result.checkpoint)
    print(_json_line({"final_cd": result.final_cd,
                      "operations": len(result.sequence),
                      "seed": result.seed}), end="")
    return EXIT_OK if result.final_cd < cfg.eps_term else EXIT_UNCONVERGED


def _cmd_replay(args) -> int:
    from .mesh import save_obj
    from .sequence import SequenceError, replay

    seq = _load_sequence(args.sequence)
    try:
        mesh = replay(seq)
    except SequenceError as e:
        raise DataError(str(e)) from e
    save_obj(mesh, args.out)
    print(_json_line({"vertices": mesh.num_vertices,
                      "faces": mesh.num_faces, "out": args.out}), end="")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    from .loss import LossInputError
    from .metrics import metrics_report

    pred = _load_target(args.pred)
    target = _load_target(args.target)
    try:
        report = metrics_report(pred, target, seed=args.seed or 0)
    except LossInputError as e:
        raise DataError(str(e)) from e
    doc = report.to_dict()
    print(json.dumps(doc, sort_keys=True, indent=1))
    if args.out:
        _write_text(args.out, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def _cmd_emit_bpy(args) -> int:
    from .bpy_emit import emit_bpy

    seq = _load_sequence(args.sequence)
    _write_text(args.out, emit_bpy(seq))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import GRADCHECK_OPS, gradcheck_op

    kinds = [args.op] if args.op else list(GRADCHECK_OPS)
    worst = 0.0
    for kind in kinds:
        try:
            err = gradcheck_op(kind, seed=args.seed or 0)
        except ValueError as e:
            raise DataError(str(e)) from e
        worst = max(worst, err)
        print(f"{kind:16s} {err:.3e}")
    print(f"{'worst':16s} {worst:.3e}")
    return EXIT_OK if worst < 1e-4 else EXIT_UNCONVERGED


def _cmd_seqcmp(args) -> int:
    from .metrics import sequence_similarity

    a = _load_sequence(args.a)
    b = _load_sequence(args.b)
    sim = sequence_similarity(a, b)
    print(json.dumps(sim.to_dict(), sort_keys=True, indent=1))
    return EXIT_OK


# -- entry ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opforge",
                description="Recover and replay compact modeling "
                            "operation sequences from 3D shapes.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a sequence to a target shape")
    f.add_argument("--target", required=True, help="OBJ mesh or XYZ cloud")
    f.add_argument("--out", required=True, help="sequence JSON output path")
    f.add_argument("--config", help="fit config JSON (flags take precedence)")
    f.add_argument("--seed", type=int, help="random seed")
    f.add_argument("--log", help="JSON-lines progress log path")
    f.add_argument("--checkpoint", help="write the final graph state here")
    f.set_defaults(func=_cmd_fit)

    r = sub.add_parser("replay", help="replay a sequence to an OBJ mesh")
    r.add_argument("sequence")
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_replay)

    m = sub.add_parser("metrics", help="geometric fidelity report")
    m.add_argument("--pred", required=True)
    m.add_argument("--target", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--out", help="also write the JSON report here")
    m.set_defaults(func=_cmd_metrics)

    e = sub.add_parser("emit-bpy", help="emit a Blender script for a sequence")
    e.add_argument("sequence")
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_emit_bpy)

    g = sub.add_parser("gradcheck", help="verify per-op analytic gradients")
    g.add_argument("--op", help="check a single operation")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=_cmd_gradcheck)

    s = sub.add_parser("seqcmp", help="token-level similarity of two sequences")
    s.add_argument("a")
    s.add_argument("b")
    s.set_defaults(func=_cmd_seqcmp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_thread_cap()
        return args.func(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
