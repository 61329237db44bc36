"""Acceptance criteria 1-9, one PASS/FAIL line each.

Lines are printed as they are decided and repeated in the terminal summary.
Run alone with ``pytest tests/test_acceptance.py -s`` to see them inline.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from uvdisinfect import formats
from uvdisinfect.cli import bundled_path, main
from uvdisinfect.dose import report_from_values
from uvdisinfect.geometry import Pose3D, quat_from_axis_angle, quat_multiply, quat_to_matrix
from uvdisinfect.irradiance import (LedPanelSource, SurfaceSample, TubeLampBankSource, irradiance,
                                    irradiance_lambertian_point)
from uvdisinfect.motsp import (MotspInstance, ObjectiveVector, brute_force_pareto, decomposition_solve, hypervolume,
                               nadir, random_tour_mean, scalarized_cost, scalarized_optimal)
from uvdisinfect.scenario import load_scenario, scenario_to_text
from uvdisinfect.segmentation import update_dictionary
from uvdisinfect.synthetic import make_scene
from uvdisinfect.world_model import PolygonDictionary, SurfacePolygon, polygons_associated

import oracles

pytestmark = pytest.mark.slow

SCENARIOS = ("grobot_table.scn", "uvrobot_wall.scn", "office_tables.scn")
EXPECTED_ENERGY = {"grobot_table.scn": 3.0, "uvrobot_wall.scn": 57.5}
TARGET_LAMP_DOSE = 2240.0
INJECTED_PANEL_DOSE = 1790.0
TARGET_PANEL_DPU = 596.6


def record(n: int, ok: bool, title: str, detail: str) -> bool:
    line = f"CRITERION {n} {'PASS' if ok else 'FAIL'}: {title} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def simulate(name, out, *extra):
    t0 = time.perf_counter()
    code = main(["simulate", name, "--out-dir", str(out), *extra])
    elapsed = time.perf_counter() - t0
    assert code == 0
    return json.loads((out / "report.json").read_text()), elapsed


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """Each bundled scenario simulated once at its own settings."""
    out = {}
    for name in SCENARIOS:
        d = tmp_path_factory.mktemp(name.split(".")[0])
        rep, secs = simulate(name, d)
        out[name] = (d, rep, secs)
    return out


def avg(rep):
    s = rep["surfaces"]
    return sum(x["report"]["avg_dose_J_per_m2"] for x in s) / len(s)


# ---------------------------------------------------------------- 1

def test_criterion_1_energy_accounting(runs):
    parts, ok = [], True
    for name, expected in EXPECTED_ENERGY.items():
        _, rep, secs = runs[name]
        e = rep["surfaces"][0]["report"]["energy_consumption_W_hr"]
        good = abs(e - expected) <= 1e-9 * expected and secs < 60
        ok &= good
        parts.append(f"{name} {e!r} W*hr in {secs:.1f} s")
    assert record(1, ok, "energy 3 / 57.5 W*hr, < 1 min each", "; ".join(parts))


# ---------------------------------------------------------------- 2

def test_criterion_2_lamp_average_dose(runs):
    _, rep, secs = runs["uvrobot_wall.scn"]
    s = rep["surfaces"][0]
    a = s["report"]["avg_dose_J_per_m2"]
    lo, hi = TARGET_LAMP_DOSE / 1.5, TARGET_LAMP_DOSE * 1.5
    ok = lo <= a <= hi and secs < 120 and s["cells"] == [100, 100] and rep["dt"] == 0.05
    assert record(2, ok, "lamp wall avg dose within 1.5x of 2240 J/m^2",
                  f"avg {a:.1f} in [{lo:.1f}, {hi:.1f}], {s['cells'][0]}x{s['cells'][1]} cells, "
                  f"dt {rep['dt']}, {secs:.1f} s")


# ---------------------------------------------------------------- 3

def conservation_ok(runs):
    ratios = {name: max(s["conservation_ratio"] for s in rep["surfaces"]) for name, (_, rep, _) in runs.items()}
    return all(r <= 1.02 for r in ratios.values()), ratios


def test_criterion_3_conservation_part(runs):
    ok, ratios = conservation_ok(runs)
    assert ok, ratios


@pytest.mark.xfail(strict=True, reason="1790/3 = 596.67 lies outside 596.6 +/- 0.05, which is the truncated value")
def test_criterion_3_dpu_and_conservation(runs):
    cons_ok, ratios = conservation_ok(runs)
    injected = report_from_values(np.full(10, INJECTED_PANEL_DOSE), [LedPanelSource()], 360.0)
    literal_ok = abs(injected.dpu - TARGET_PANEL_DPU) <= 0.05
    truncated_ok = math.floor(injected.dpu * 10) / 10 == TARGET_PANEL_DPU
    simulated_dpu = runs["grobot_table.scn"][1]["surfaces"][0]["report"]["dpu"]
    only_injected = abs(simulated_dpu - TARGET_PANEL_DPU) > 0.05
    ok = cons_ok and literal_ok and only_injected
    detail = (f"conservation max {max(ratios.values()):.4f} <= 1.02 {'ok' if cons_ok else 'VIOLATED'}; "
              f"injected DPU {injected.dpu:.4f} vs 596.6 +/- 0.05 {'ok' if literal_ok else 'out of band'}"
              f" (truncated to 1 dp: {math.floor(injected.dpu * 10) / 10}, {'match' if truncated_ok else 'no match'}); "
              f"simulated DPU {simulated_dpu:.1f} {'differs' if only_injected else 'matches'}")
    assert record(3, ok, "conservation bound + injected DPU", detail)


# ---------------------------------------------------------------- 4

def test_criterion_4_convergence(runs, tmp_path):
    parts, ok = [], True
    for name in EXPECTED_ENERGY:
        rep, _ = simulate(name, tmp_path / name, "--dt", "0.025")
        base = avg(runs[name][1])
        rel = abs(avg(rep) - base) / base
        ok &= rel < 5e-3
        parts.append(f"{name} dt/2 change {100 * rel:.4f}%")
    g = np.linspace(-0.5, 0.5, 11)
    wall = [SurfaceSample((x, y, 1.0), (0, 0, -1)) for x in g for y in g]
    e64 = np.array([irradiance(TubeLampBankSource(), t) for t in wall])
    e128 = np.array([irradiance(TubeLampBankSource(segment_count=128), t) for t in wall])
    rel = float(np.max(np.abs(e128 - e64) / e64))
    ok &= rel < 5e-3
    parts.append(f"segments 64->128 max change at 1 m {100 * rel:.4f}%")
    assert record(4, ok, "dt halving and segment doubling < 0.5%", "; ".join(parts))


# ---------------------------------------------------------------- 5

def _rotated(src, rot, m):
    def mv(p):
        return Pose3D(tuple(m @ np.asarray(p.position)), tuple(quat_multiply(rot, p.orientation)))
    if isinstance(src, LedPanelSource):
        return LedPanelSource(pose=mv(src.pose))
    return TubeLampBankSource(lamp_count=src.lamp_count, segment_count=src.segment_count,
                              poses=tuple(mv(p) for p in src.poses))


def test_criterion_5_radiometry_properties():
    rng = np.random.default_rng(20240605)
    cases, failures = 10_000, []
    t0 = time.perf_counter()
    for k in range(cases):
        # inverse square at normal incidence
        d = rng.uniform(0.01, 10.0)
        p = rng.uniform(0.0, 5.0)
        t = SurfaceSample((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
        e1 = irradiance_lambertian_point((0, 0, d), (0, 0, -1), p, t)
        e2 = irradiance_lambertian_point((0, 0, 2 * d), (0, 0, -1), p, t)
        if not abs(e2 - e1 / 4) <= 1e-12 * abs(e1 / 4):
            failures.append((k, "inverse-square"))
        # random placement
        qa = quat_from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi))
        qb = quat_from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi))
        pa = Pose3D(tuple(rng.uniform(-1, 1, 3)), tuple(qa))
        pb = Pose3D(tuple(rng.uniform(-1, 1, 3)), tuple(qb))
        tn = rng.normal(size=3)
        tn /= np.linalg.norm(tn)
        tp = rng.uniform(-2, 2, 3)
        target = SurfaceSample(tuple(tp), tuple(tn))
        src = (LedPanelSource(pose=pa) if k % 2 == 0 else
               TubeLampBankSource(lamp_count=2, segment_count=8, poses=(pa, pb)))
        e = irradiance(src, target)
        if not e >= 0:
            failures.append((k, "non-negativity"))
        # rotate source and target together
        rot = quat_from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi))
        m = quat_to_matrix(rot)
        er = irradiance(_rotated(src, rot, m), SurfaceSample(tuple(m @ tp), tuple(m @ tn)))
        if not abs(er - e) <= 1e-9 * abs(e) + 1e-15:
            failures.append((k, "rotation"))
        # superposition: a two-lamp bank equals its lamps taken separately
        if isinstance(src, TubeLampBankSource):
            parts = sum(irradiance(TubeLampBankSource(lamp_count=1, segment_count=8, poses=(q,)), target)
                        for q in src.poses)
            if not abs(parts - e) <= 1e-12 * abs(e) + 1e-300:
                failures.append((k, "superposition"))
    secs = time.perf_counter() - t0
    ok = not failures and secs < 30
    assert record(5, ok, "radiometry properties on 10,000 random cases",
                  f"{len(failures)} failures {failures[:3]} in {secs:.1f} s")


# ---------------------------------------------------------------- 6

def test_criterion_6_motsp_exactness():
    t0 = time.perf_counter()
    front_bad, hk_bad = [], []
    for k in range(100):
        n = 3 + k % 7
        inst = MotspInstance.random(n, np.random.default_rng(6000 + k))
        c1, c2 = inst.coords1.tolist(), inst.coords2.tolist()
        every = oracles.all_tour_objectives(c1, c2)
        ref = oracles.pareto_from(every)
        got = sorted(o.as_tuple() for o in brute_force_pareto(inst).objectives())
        if len(got) != len(ref) or any(abs(a - c) > 1e-9 * max(1.0, c) or abs(b - d) > 1e-9 * max(1.0, d)
                                       for (a, b), (c, d) in zip(got, ref)):
            front_bad.append(k)
        for lam in np.linspace(0.0, 1.0, 11):
            best = min(lam * f1 + (1 - lam) * f2 for f1, f2 in every)
            cost = scalarized_cost(inst, scalarized_optimal(inst, float(lam)), float(lam))
            if abs(cost - best) > 1e-12 * max(best, 1.0):
                hk_bad.append((k, float(lam)))
    secs = time.perf_counter() - t0
    ok = not front_bad and not hk_bad and secs < 300
    assert record(6, ok, "brute force + Held-Karp vs independent enumeration (100 instances, n 3-9)",
                  f"front mismatches {front_bad}, Held-Karp mismatches {hk_bad[:3]}, {secs:.1f} s")


# ---------------------------------------------------------------- 7

def test_criterion_7_decomposition_quality():
    t0 = time.perf_counter()
    ratios = []
    for k in range(50):
        inst = MotspInstance.random(8, np.random.default_rng(7000 + k))
        exact = brute_force_pareto(inst)
        ref = ObjectiveVector(*(1.1 * v for v in nadir(exact).as_tuple()))
        approx = decomposition_solve(inst, 51, k)
        ratios.append(hypervolume(approx, ref) / hypervolume(exact, ref))
    large = {
        "n=200 (bundled)": (formats.read_instance(bundled_path("motsp_200.txt")), 7),
        "n=1000": (MotspInstance.random(1000, np.random.default_rng(1000)), 1000),
    }
    parts, dom_ok = [], True
    for label, (inst, seed) in large.items():
        front = decomposition_solve(inst, 101, seed)
        mean = random_tour_mean(inst, 1000, seed)
        worst = max(max(o.f1 / mean.f1, o.f2 / mean.f2) for o in front.objectives())
        good = all(o.f1 < mean.f1 and o.f2 < mean.f2 for o in front.objectives())
        dom_ok &= good
        parts.append(f"{label}: {len(front)} points, worst objective/mean {worst:.3f}")
    secs = time.perf_counter() - t0
    ok = min(ratios) >= 0.8 and dom_ok and secs < 600
    assert record(7, ok, "hypervolume >= 80% on 50 n=8, random-tour dominance at n=200/1000",
                  f"min HV ratio {min(ratios):.4f}, mean {np.mean(ratios):.4f}; " + "; ".join(parts) +
                  f"; {secs:.1f} s")


# ---------------------------------------------------------------- 8

def _square(cx, cy, side=1.0, z=0.0):
    h = side / 2
    return SurfacePolygon.from_vertices(0, [(cx - h, cy - h, z), (cx + h, cy - h, z), (cx + h, cy + h, z),
                                            (cx - h, cy + h, z)])


def association_cases():
    a = _square(0.5, 0.5)
    s = 2 * (1.3 / math.sqrt(2) - 0.5)
    s2 = s + 1e-6
    return [
        ("identical", a, a, True),
        ("centroids 1.4 m", a, _square(1.9, 0.5), False),
        ("shared edge", a, _square(1.5, 0.5), True),
        ("centroid 1.3 m, corner 0.3 m", a, _square(1.8, 0.5), True),
        ("centroid 1.3 m + 1 um", a, _square(1.8 + 1e-6, 0.5), False),
        ("stacked 0.30 m", a, _square(0.5, 0.5, z=0.3), True),
        ("stacked 0.30 m + 1 um", a, _square(0.5, 0.5, z=0.3 + 1e-6), False),
        ("shared corner, centroid 1.3 m", a, _square(1 + s / 2, 1 + s / 2, side=s), True),
        ("shared corner, centroid 1.3 m + 1 um", a, _square(1 + s2 / 2, 1 + s2 / 2, side=s2), False),
    ]


def test_criterion_8_segmentation_recovery():
    counts_ok, worst, area_ok = 0, 0.0, True
    for seed in range(50):
        n = 1 + seed % 3
        sc = make_scene(seed, n)
        d = update_dictionary(PolygonDictionary(), sc.cloud)
        counts_ok += len(d) == n
        for poly in d.entries.values():
            t = min(sc.tables, key=lambda t: math.dist(t.center, poly.centroid[:2]))
            err = abs(poly.area - t.area) / t.area
            worst = max(worst, err)
            area_ok &= err <= 0.10
    wrong = [name for name, a, b, want in association_cases()
             if polygons_associated(a, b) != want or polygons_associated(b, a) != want]
    ok = counts_ok >= 48 and area_ok and not wrong
    assert record(8, ok, "table count >= 48/50, areas within 10%, association boundaries",
                  f"count correct {counts_ok}/50, worst area error {100 * worst:.2f}%, "
                  f"boundary cases wrong: {wrong or 'none'}")


# ---------------------------------------------------------------- 9

def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def _round_trips(tmp):
    """Name -> True when write, read, write gives identical bytes."""
    res = {}

    def check(label, write, read, obj, suffix):
        a, b = tmp / f"{label}_a{suffix}", tmp / f"{label}_b{suffix}"
        write(obj, a)
        write(read(a), b)
        res[label] = a.read_bytes() == b.read_bytes()

    for name in SCENARIOS:
        sc = load_scenario(bundled_path(name))
        t1 = scenario_to_text(sc)
        p = tmp / f"rt_{name}"
        p.write_text(t1)
        res[f"scenario {name}"] = scenario_to_text(load_scenario(p)) == t1
    check("instance", formats.write_instance, formats.read_instance,
          formats.read_instance(bundled_path("motsp_200.txt")), ".txt")
    check("occupancy", lambda g, p: formats.write_occupancy(g, p), formats.read_occupancy,
          formats.read_occupancy(bundled_path("office.yaml")), ".pgm")
    check("point cloud", formats.write_point_cloud, formats.read_point_cloud, make_scene(2, 2).cloud, ".txt")
    d = update_dictionary(PolygonDictionary(), make_scene(5, 3).cloud)
    check("polygon dictionary", formats.write_dictionary, formats.read_dictionary, d, ".json")
    return res


def test_criterion_9_determinism_and_round_trip(runs, tmp_path):
    same = {}
    for name in SCENARIOS:
        d0 = runs[name][0]
        d1 = tmp_path / f"again_{name}"
        simulate(name, d1)
        same[f"simulate {name}"] = _files(d0) == _files(d1)
    for label, argv in {"plan motsp_200": ["plan", "motsp_200.txt", "--seed", "7"],
                        "plan office_tables": ["plan", "office_tables.scn"]}.items():
        outs = []
        for k in range(2):
            o = tmp_path / f"{label.replace(' ', '_')}_{k}"
            assert main([*argv, "--out-dir", str(o)]) == 0
            outs.append(_files(o))
        same[label] = outs[0] == outs[1]
    rt = _round_trips(tmp_path)
    # artefacts from the runs above: dose CSV, mission and front
    dose_src = runs["grobot_table.scn"][0] / "dose_0.csv"
    t = formats.read_dose_csv(dose_src)
    formats.write_dose_csv(t, tmp_path / "dose_rt.csv")
    rt["dose csv"] = (tmp_path / "dose_rt.csv").read_bytes() == dose_src.read_bytes()
    mdir = tmp_path / "plan_office_tables_0"
    formats.write_mission(formats.read_mission(mdir / "mission.json"), tmp_path / "mission_rt.json")
    rt["mission"] = (tmp_path / "mission_rt.json").read_bytes() == (mdir / "mission.json").read_bytes()
    from uvdisinfect.motsp import ObjectiveVector as OV, ParetoFront, Tour
    rows = formats.read_front_csv(mdir / "front.csv")
    rt["front csv"] = formats.front_to_csv(ParetoFront(tuple((Tour(r[2]), OV(r[0], r[1])) for r in rows))) == \
        (mdir / "front.csv").read_text()
    bad = [k for k, v in {**same, **rt}.items() if not v]
    ok = not bad
    assert record(9, ok, "bit-identical reruns and round trips",
                  f"{len(same)} rerun checks, {len(rt)} round trips, failing: {bad or 'none'}")
