"""End-to-end acceptance suite.

Each test exercises one release criterion and prints a single PASS/FAIL
line, so the run log doubles as the acceptance report. The round-trip
benchmark fixture is shared between the recovery and wiring checks and
runs the ten cases in parallel worker processes.
"""

import json
import time

import numpy as np
import pytest
import torch

from opforge.benchmark import run_benchmark
from opforge.fit import FitConfig, fit
from opforge.gradcheck import GRADCHECK_OPS, gradcheck_all
from opforge.loss import brute_force_chamfer, chamfer_np
from opforge.mesh import genus, unit_cube, wiring_stats
from opforge.ops.bevel import _arc_frame, _arc_points
from opforge.ops.subdivision import (
    subdivide_blend,
    subdivide_catmull,
    subdivide_simple,
)
from opforge.sequence import DesignSequence, OpRecord, from_json, replay

BENCH_CD_MAX = 5e-3
BENCH_CD_QUOTA = 8
BENCH_LCS_MIN = 0.6
BENCH_LCS_QUOTA = 6
BENCH_WALL_MAX = 3600.0


def _report(name: str, ok: bool, detail: str = ""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert ok, line


# -- gradient suite -----------------------------------------------------


def test_gradient_suite():
    t0 = time.monotonic()
    results = gradcheck_all(draws=20, seed=0, eps=1e-5)
    wall = time.monotonic() - t0
    worst = max(results.values())
    ok = set(results) == set(GRADCHECK_OPS) and worst < 1e-4 and wall < 120.0
    _report("gradient suite (all ops, 20 draws, rel err < 1e-4, < 2 min)",
            ok, f"worst={worst:.2e} wall={wall:.1f}s")


# -- subdivision oracle --------------------------------------------------


def test_subdivision_oracle():
    cube = unit_cube()
    simple = subdivide_simple(cube)
    catmull = subdivide_catmull(cube)
    lo = subdivide_blend(cube, torch.tensor(1e-7))
    hi = subdivide_blend(cube, torch.tensor(1.0 - 1e-12))
    err_lo = float((lo.vertices - simple.vertices).abs().max())
    # at level 1 - eps the blend is eps away from catmull by construction;
    # evaluate the endpoint itself through the fractional formula
    topo_err = hi.faces != catmull.faces
    err_hi = float((subdivide_blend(cube, torch.tensor(1.0)).vertices
                    - catmull.vertices).abs().max())
    counts_ok = (catmull.num_vertices, catmull.num_faces) == (26, 24)

    level = torch.tensor(0.37, dtype=torch.float64, requires_grad=True)
    out = subdivide_blend(cube, level)
    out.vertices.sum().backward()
    expected = float((catmull.vertices - simple.vertices).sum())
    grad_err = abs(float(level.grad) - expected)

    ok = (err_lo <= 1e-12 and err_hi <= 1e-12 and not topo_err
          and counts_ok and grad_err <= 1e-12 * max(abs(expected), 1.0))
    _report("subdivision oracle (blend endpoints 1e-12, cube 26/24, "
            "exact level derivative)", ok,
            f"lo={err_lo:.1e} hi={err_hi:.1e} grad={grad_err:.1e}")


# -- bevel oracle ---------------------------------------------------------


def test_bevel_oracle():
    rng = np.random.default_rng(2024)
    worst_end = worst_rad = 0.0
    for _ in range(100):
        e = rng.standard_normal(3)
        e /= np.linalg.norm(e)
        t = np.cross(e, rng.standard_normal(3))
        t /= np.linalg.norm(t)
        s = np.cross(e, t)
        ang = rng.uniform(0.2, np.pi - 0.2)
        d1 = torch.as_tensor(t)
        d2 = torch.as_tensor(np.cos(ang) * t + np.sin(ang) * s)
        v0 = torch.as_tensor(rng.standard_normal(3))
        w = torch.as_tensor(rng.uniform(0.05, 1.0))
        pts = _arc_points(v0, d1, d2, w, 6)
        v1, v2 = v0 + w * d1, v0 + w * d2
        worst_end = max(worst_end,
                        float(torch.linalg.norm(pts[0] - v1)),
                        float(torch.linalg.norm(pts[-1] - v2)))
        o, r, *_ = _arc_frame(v0, d1, d2, w)
        for p in pts:
            worst_rad = max(worst_rad,
                            abs(float(torch.linalg.norm(p - o)) - float(r)))
    ok = worst_end <= 1e-9 and worst_rad <= 1e-9
    _report("bevel oracle (arc endpoints and radius <= 1e-9, "
            "100 dihedrals)", ok,
            f"end={worst_end:.1e} rad={worst_rad:.1e}")


# -- chamfer exactness -----------------------------------------------------


def test_chamfer_exactness():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        n1 = int(rng.integers(16, 2049))
        n2 = int(rng.integers(16, 2049))
        a = rng.uniform(-1.0, 1.0, size=(n1, 3))
        b = rng.uniform(-1.0, 1.0, size=(n2, 3))
        fast = chamfer_np(a, b)
        slow = brute_force_chamfer(a, b)
        worst = max(worst, abs(fast - slow) / max(abs(slow), 1e-300))
    ok = worst <= 1e-12
    _report("chamfer exactness (accelerated == brute force, 50 pairs, "
            "1e-12)", ok, f"worst rel={worst:.1e}")


# -- boolean-weight selection ----------------------------------------------


def _extrude_betas(checkpoint: str) -> list[float]:
    doc = json.loads(checkpoint)
    out = []
    for n in doc["nodes"]:
        if n["kind"] == "Extrude" and n["enabled"] and n.get("target"):
            out.append(1.0 / (1.0 + np.exp(-n["beta_logit"])))
    return out


def test_boolean_weight_selection():
    budget = FitConfig(seed=0, proxy_budget=450, exact_budget=800,
                       settle_budget=140, eps_term=1e-4)
    # every phase that can move a boolean weight fits in the budget:
    # alignment probe (60) + proxy + exact + weight settling; later
    # stages only touch continuous geometry parameters
    assert 60 + budget.proxy_budget + budget.exact_budget \
        + budget.settle_budget <= 1500

    boss = replay(DesignSequence(operations=[OpRecord("Extrude", {
        "faces": [1], "height": 0.4, "width": 0.7, "angles": [0.0, 0.0]})]))
    boss_fit = fit(boss, budget)
    boss_betas = _extrude_betas(boss_fit.checkpoint)

    pocket = replay(DesignSequence(operations=[OpRecord("Boolean", {
        "type": "difference", "primitive": "cuboid",
        "scale": [0.35, 0.35, 1.6], "translate": [0.5, 0.5, 0.5],
        "rotate": [0.0, 0.0, 0.0]})]))
    pocket_fit = fit(pocket, budget)
    pocket_betas = _extrude_betas(pocket_fit.checkpoint)

    boss_ok = bool(boss_betas) and min(boss_betas) < 0.1
    pocket_ok = bool(pocket_betas) and max(pocket_betas) > 0.9
    g = genus(replay(pocket_fit.sequence))
    genus_ok = g >= 1
    ok = boss_ok and pocket_ok and genus_ok
    _report("boolean-weight selection (boss beta < 0.1, pocket beta > 0.9 "
            "within 1500 iterations, pocket genus >= 1)", ok,
            f"boss={min(boss_betas) if boss_betas else None} "
            f"pocket={max(pocket_betas) if pocket_betas else None} genus={g}")


# -- round-trip benchmark + wiring ------------------------------------------


@pytest.fixture(scope="module")
def benchmark_report():
    return run_benchmark(jobs=8)


def test_round_trip_benchmark(benchmark_report):
    results = benchmark_report["results"]
    errors = [r for r in results if "error" in r]
    cd_pass = sum(1 for r in results
                  if "error" not in r and r["chamfer"] <= BENCH_CD_MAX)
    lcs_pass = sum(1 for r in results
                   if "error" not in r and r["normalized_lcs"] >= BENCH_LCS_MIN)
    wall = benchmark_report["total_wall"]
    ok = (not errors and len(results) == 10
          and cd_pass >= BENCH_CD_QUOTA and lcs_pass >= BENCH_LCS_QUOTA
          and wall <= BENCH_WALL_MAX)
    _report("round-trip benchmark (CD <= 5e-3 on >= 8/10, nLCS >= 0.6 on "
            ">= 6/10, <= 60 min on 8 cores)", ok,
            f"cd {cd_pass}/10, nlcs {lcs_pass}/10, wall {wall:.0f}s, "
            f"errors {len(errors)}")


def test_wiring_property(benchmark_report):
    worst_deg = worst_quad = 1.0
    failures = []
    for r in benchmark_report["results"]:
        if "error" in r:
            failures.append(f"case {r['index']} errored")
            continue
        mesh = replay(from_json(r["recovered_sequence"]))
        stats = wiring_stats(mesh)
        worst_deg = min(worst_deg, stats.degree4_interior_fraction)
        worst_quad = min(worst_quad, stats.quad_fraction)
        if stats.degree4_interior_fraction < 0.95 or stats.quad_fraction < 0.95:
            failures.append(f"case {r['index']}: deg4="
                            f"{stats.degree4_interior_fraction:.3f} "
                            f"quad={stats.quad_fraction:.3f}")
    ok = not failures
    _report("wiring property (>= 95% interior degree-4, quad fraction "
            ">= 0.95 on every round-trip output)", ok,
            f"worst deg4={worst_deg:.3f} quad={worst_quad:.3f}; "
            + ("; ".join(failures) if failures else "all ok"))


# -- CLI determinism ---------------------------------------------------------


def test_cli_determinism(tmp_path):
    from opforge.cli import main

    target = tmp_path / "target.obj"
    from opforge.mesh import save_obj
    save_obj(replay(DesignSequence(operations=[OpRecord("Extrude", {
        "faces": [1], "height": 0.3, "width": 0.8,
        "angles": [0.0, 0.0]})])), str(target))

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"proxy_budget": 40, "exact_budget": 60,
                               "initial_cycles": 3, "max_cycles": 4}))

    def run(tag):
        out = tmp_path / f"seq{tag}.json"
        log = tmp_path / f"log{tag}.jsonl"
        obj = tmp_path / f"replay{tag}.obj"
        rc1 = main(["fit", "--target", str(target), "--out", str(out),
                    "--config", str(cfg), "--seed", "5", "--log", str(log)])
        rc2 = main(["replay", str(out), "--out", str(obj)])
        assert rc1 in (0, 3) and rc2 == 0
        return out.read_bytes(), log.read_bytes(), obj.read_bytes()

    a = run("a")
    b = run("b")
    ok = a == b
    _report("CLI determinism (identical inputs + --seed give "
            "byte-identical outputs)", ok,
            "fit/replay outputs and logs compared")
