import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uvdisinfect import formats
from uvdisinfect.dose import DoseMap, SurfaceGrid, TimedTrajectory
from uvdisinfect.geometry import Pose2D, Pose3D, quat_from_axis_angle
from uvdisinfect.motsp import MotspInstance, ParetoFront, Tour, ObjectiveVector, decomposition_solve
from uvdisinfect.segmentation import PointCloud
from uvdisinfect.waypoints import ScanPattern, assemble_mission
from uvdisinfect.world_model import CellState, OccupancyGrid, PolygonDictionary, SurfacePolygon, dictionary_update

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def square(cx, cy, side=1.0, z=0.0):
    h = side / 2
    return SurfacePolygon.from_vertices(0, [(cx - h, cy - h, z), (cx + h, cy - h, z), (cx + h, cy + h, z),
                                            (cx - h, cy + h, z)])


def twice(write, read, obj, tmp_path, name):
    a, b = tmp_path / f"a_{name}", tmp_path / f"b_{name}"
    write(obj, a)
    write(read(a), b)
    assert a.read_bytes() == b.read_bytes()
    return read(a)


def test_atomic_write_permissions_and_no_temp(tmp_path):
    p = formats.atomic_write(tmp_path / "sub" / "x.txt", "hello")
    assert p.read_text() == "hello"
    assert [q.name for q in p.parent.iterdir()] == ["x.txt"]
    assert p.stat().st_mode & 0o044  # readable beyond the owner under a normal umask


# ---------------------------------------------------------------- occupancy

def test_occupancy_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cells = rng.choice([0, 1, 2], size=(7, 11)).astype(np.uint8)
    g = OccupancyGrid(0.05, 11, 7, Pose2D(-1.5, 2.25, 0.0), cells)
    pgm, side = formats.write_occupancy(g, tmp_path / "m.pgm")
    back = formats.read_occupancy(side)
    assert back == g
    assert formats.read_occupancy(pgm) == g
    _, side2 = formats.write_occupancy(back, tmp_path / "n.pgm")
    assert (tmp_path / "n.pgm").read_bytes() == pgm.read_bytes()
    # top image row is the highest grid row
    first_row = pgm.read_text().splitlines()[3].split()
    expect = [{CellState.OCCUPIED: "0", CellState.UNKNOWN: "205", CellState.FREE: "254"}[CellState(c)]
              for c in cells[-1]]
    assert first_row == expect


def test_occupancy_reads_binary_pgm_with_comment(tmp_path):
    (tmp_path / "b.pgm").write_bytes(b"P5\n# made by hand\n3 2\n255\n" + bytes([254, 0, 205, 254, 254, 0]))
    (tmp_path / "b.yaml").write_text("image: b.pgm\nresolution: 0.1\norigin: [0, 0, 0]\n")
    g = formats.read_occupancy(tmp_path / "b.yaml")
    assert g.cells.tolist() == [[0, 0, 1], [0, 1, 2]]


def test_occupancy_errors(tmp_path):
    (tmp_path / "t.pgm").write_text("P2\n3 2\n255\n0 0\n")
    (tmp_path / "t.yaml").write_text("image: t.pgm\nresolution: 0.1\norigin: [0, 0, 0]\n")
    with pytest.raises(formats.FormatError):
        formats.read_occupancy(tmp_path / "t.yaml")
    (tmp_path / "u.yaml").write_text("image: missing.pgm\nresolution: 0.1\norigin: [0, 0, 0]\n")
    with pytest.raises(formats.FormatError):
        formats.read_occupancy(tmp_path / "u.yaml")
    with pytest.raises(formats.FormatError):
        formats.read_occupancy(tmp_path / "nothing.yaml")


# ---------------------------------------------------------------- point clouds

@given(st.lists(st.tuples(finite, finite, finite), max_size=30), st.sampled_from(["sensor", "map"]))
def test_point_cloud_round_trip(tmp_path_factory, pts, frame):
    tmp = tmp_path_factory.mktemp("pc")
    q = tuple(quat_from_axis_angle((0.3, 1, 0), 0.7))
    cloud = PointCloud(np.array(pts, dtype=float).reshape(-1, 3), Pose3D((1.0, -2.0, 0.5), q), frame)
    back = twice(formats.write_point_cloud, formats.read_point_cloud, cloud, tmp, "c.txt")
    assert back.points.tobytes() == cloud.points.tobytes()
    assert back.sensor_pose == cloud.sensor_pose and back.frame == frame


def test_point_cloud_errors(tmp_path):
    bad = {"trunc": "3 sensor\n0 0 0\n1 1 1\n", "frame": "1 world\n0 0 0\n", "nan": "1 map\nnan 0 0\n",
           "fields": "1 map\n0 0\n", "empty": "", "head": "x map\n", "pose": "0 map 0 0 0 2 0 0 0\n"}
    for name, text in bad.items():
        (tmp_path / name).write_text(text)
        with pytest.raises(formats.FormatError):
            formats.read_point_cloud(tmp_path / name)
    (tmp_path / "ok").write_text("0 sensor\n")
    assert len(formats.read_point_cloud(tmp_path / "ok")) == 0


# ---------------------------------------------------------------- polygons, missions

@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 2)), max_size=8))
def test_dictionary_round_trip(tmp_path_factory, specs):
    tmp = tmp_path_factory.mktemp("d")
    d = PolygonDictionary()
    for x, y, s in specs:
        d = dictionary_update(d, square(x, y, s))
    back = twice(formats.write_dictionary, formats.read_dictionary, d, tmp, "p.json")
    assert back == d


def test_dictionary_errors(tmp_path):
    (tmp_path / "x.json").write_text('{"next_id": 0, "polygons": [{"id": 0}]}')
    with pytest.raises(formats.FormatError):
        formats.read_dictionary(tmp_path / "x.json")
    (tmp_path / "y.json").write_text("{not json")
    with pytest.raises(formats.FormatError):
        formats.read_dictionary(tmp_path / "y.json")


def test_mission_round_trip(tmp_path):
    grid = OccupancyGrid.empty(40, 40, 0.1)
    d = PolygonDictionary({0: square(1.0, 1.0, 0.6, 0.7), 1: square(3.0, 2.5, 0.5, 0.7)})
    m = assemble_mission([1, 0], d, grid, ScanPattern(), 45.0, Pose2D(0.33, 0.21, 2.0))
    back = twice(formats.write_mission, formats.read_mission, m, tmp_path, "m.json")
    assert back == m
    (tmp_path / "bad.json").write_text('{"cell_order": [0]}')
    with pytest.raises(formats.FormatError):
        formats.read_mission(tmp_path / "bad.json")


# ---------------------------------------------------------------- MOTSP

@given(st.integers(1, 40), st.integers(0, 2**31))
def test_instance_round_trip(tmp_path_factory, n, seed):
    tmp = tmp_path_factory.mktemp("i")
    inst = MotspInstance.random(n, np.random.default_rng(seed))
    back = twice(formats.write_instance, formats.read_instance, inst, tmp, "i.txt")
    assert back.coords1.tobytes() == inst.coords1.tobytes()
    assert back.coords2.tobytes() == inst.coords2.tobytes()


def test_instance_errors(tmp_path):
    for name, text in {"short": "3\n0 0 0 0\n", "cols": "1\n0 0 0\n", "nan": "1\nnan 0 0 0\n", "empty": ""}.items():
        (tmp_path / name).write_text(text)
        with pytest.raises(formats.FormatError):
            formats.read_instance(tmp_path / name)


def test_front_csv_round_trip(tmp_path):
    inst = MotspInstance.random(30, np.random.default_rng(1))
    front = decomposition_solve(inst, 21, 0)
    formats.write_front(front, tmp_path / "f.csv")
    rows = formats.read_front_csv(tmp_path / "f.csv")
    rebuilt = ParetoFront(tuple((Tour(t), ObjectiveVector(a, b)) for a, b, t in rows))
    assert rebuilt == front
    assert formats.front_to_csv(rebuilt) == (tmp_path / "f.csv").read_text()
    (tmp_path / "g.csv").write_text("f1,f2,tour\n1.0,x,0 1\n")
    with pytest.raises(formats.FormatError):
        formats.read_front_csv(tmp_path / "g.csv")


# ---------------------------------------------------------------- dose + heatmap

def dose_map(values, nx, ny):
    poly = SurfacePolygon.from_vertices(0, [(0, 0, 0.5), (nx * 0.1, 0, 0.5), (nx * 0.1, ny * 0.1, 0.5),
                                            (0, ny * 0.1, 0.5)])
    return DoseMap(SurfaceGrid.from_polygon(poly, 0.1), np.asarray(values, float))


@given(st.lists(st.floats(0, 1e6), min_size=6, max_size=6))
def test_dose_csv_round_trip(tmp_path_factory, vals):
    tmp = tmp_path_factory.mktemp("dose")
    dm = dose_map(vals, 3, 2)
    formats.write_dose_csv(dm, tmp / "a.csv")
    t = formats.read_dose_csv(tmp / "a.csv")
    formats.write_dose_csv(t, tmp / "b.csv")
    assert (tmp / "a.csv").read_bytes() == (tmp / "b.csv").read_bytes()
    assert t.dose.tobytes() == dm.dose.tobytes()
    assert t.ij.tolist() == [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]]


def test_dose_csv_errors(tmp_path):
    (tmp_path / "a.csv").write_text("wrong\n")
    with pytest.raises(formats.FormatError):
        formats.read_dose_csv(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text(formats.DOSE_HEADER + "\n0,0,1,2\n")
    with pytest.raises(formats.FormatError):
        formats.read_dose_csv(tmp_path / "b.csv")


def parse_p5(data):
    lines = data.split(b"\n", 4)
    assert lines[0] == b"P5" and lines[1].startswith(b"# dose_J_per_m2 = level * ")
    w, h = map(int, lines[2].split())
    assert lines[3] == b"255"
    return float(lines[1].rsplit(b" ", 1)[1]), np.frombuffer(lines[4], np.uint8).reshape(h, w)


def test_heatmap_examples():
    scale, px = parse_p5(formats.heatmap_bytes(dose_map(np.full(6, 7.5), 3, 2)))
    assert px.shape == (2, 3) and np.all(px == 255)
    assert scale == 7.5 / 255
    _, px = parse_p5(formats.heatmap_bytes(dose_map([0, 0, 0, 0, 3.0, 0], 3, 2)))
    assert np.count_nonzero(px == 255) == 1 and px[1, 1] == 255 and px.sum() == 255
    _, px = parse_p5(formats.heatmap_bytes(dose_map(np.zeros(6), 3, 2)))
    assert not px.any()


@given(st.lists(st.floats(0, 1e4), min_size=12, max_size=12))
def test_heatmap_linear_scaling(vals):
    dm = dose_map(vals, 4, 3)
    scale, px = parse_p5(formats.heatmap_bytes(dm))
    if max(vals) > 0:
        np.testing.assert_allclose(px.astype(float).ravel() * scale, dm.dose, atol=scale / 2 + 1e-12)


def test_heatmap_deterministic(tmp_path):
    dm = dose_map(np.arange(6.0), 3, 2)
    formats.write_heatmap(dm, tmp_path / "a.pgm")
    formats.write_heatmap(dm, tmp_path / "b.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_report_table_truncates_dpu():
    from uvdisinfect.dose import report_from_values
    from uvdisinfect.irradiance import LedPanelSource
    r = report_from_values(np.full(3, 1790.0), [LedPanelSource()], 360.0)
    assert "596.6" in formats.report_table(r)
    d = formats.report_to_dict(r)
    assert d["energy_consumption_W_hr"] == 3.0 and math.isclose(d["dpu"], 1790 / 3)
