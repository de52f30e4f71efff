import json
import logging
import struct

import numpy as np
import pytest
from hypothesis import given, settings

from relocbench.dataset import (
    DatasetError,
    DuplicateFrameError,
    MeshFormatError,
    MissingFileError,
    PoseFormatError,
    load_manifest,
    load_predictions,
    load_scene,
    read_object_transforms,
    read_ply,
    read_trajectory,
    write_object_transforms,
    write_ply,
    write_predictions,
    write_trajectory,
)
from relocbench.geometry import Intrinsics, Pose, axis_angle
from relocbench.synthetic import make_room_with_moved_box, unit_cube, write_fixture

from .conftest import poses

K = Intrinsics(64, 48, 50, 50, 32, 24)


def _same_model(a, b):
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.vertex_colors, b.vertex_colors)
    assert np.array_equal(a.vertex_labels, b.vertex_labels)


@pytest.mark.parametrize("binary", [True, False])
def test_ply_roundtrip(tmp_path, binary):
    model = make_room_with_moved_box()[1]
    write_ply(tmp_path / "m.ply", model, binary=binary)
    _same_model(read_ply(tmp_path / "m.ply"), model)


def test_ply_ascii_quads_and_float_colors(tmp_path):
    p = tmp_path / "q.ply"
    p.write_text("\n".join([
        "ply", "format ascii 1.0", "comment hand written", "element vertex 4",
        "property float x", "property float y", "property float z",
        "property float red", "property float green", "property float blue",
        "property int label",
        "element face 1", "property list uchar int vertex_indices", "end_header",
        "0 0 0 1 0 0 5", "1 0 0 0 1 0 5", "1 1 0 0 0 1 5", "0 1 0 0.5 0.5 0.5 5",
        "4 0 1 2 3",
    ]) + "\n")
    m = read_ply(p)
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert m.vertex_colors.tolist()[0] == [255, 0, 0]
    assert m.vertex_colors.tolist()[3] == [128, 128, 128]
    assert m.vertex_labels.tolist() == [5, 5, 5, 5]


def test_ply_big_endian(tmp_path):
    p = tmp_path / "be.ply"
    header = "\n".join([
        "ply", "format binary_big_endian 1.0", "element vertex 3",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue", "property ushort objectId",
        "element face 1", "property list uchar int vertex_indices", "end_header",
    ]) + "\n"
    body = b"".join(struct.pack(">fffBBBH", *v) for v in
                    [(0, 0, 0, 1, 2, 3, 7), (1, 0, 0, 4, 5, 6, 7), (0, 1, 0, 7, 8, 9, 8)])
    body += struct.pack(">Biii", 3, 0, 1, 2)
    p.write_bytes(header.encode() + body)
    m = read_ply(p)
    assert m.vertices.tolist() == [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    assert m.vertex_colors[2].tolist() == [7, 8, 9]
    assert m.vertex_labels.tolist() == [7, 7, 8]
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_ply_binary_mixed_face_sizes(tmp_path):
    p = tmp_path / "mix.ply"
    header = "\n".join([
        "ply", "format binary_little_endian 1.0", "element vertex 5",
        "property double x", "property double y", "property double z",
        "element face 2", "property list uchar int vertex_indices", "end_header",
    ]) + "\n"
    body = b"".join(struct.pack("<ddd", *v) for v in [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (2, 2, 0)])
    body += struct.pack("<Biiii", 4, 0, 1, 2, 3) + struct.pack("<Biii", 3, 1, 4, 2)
    p.write_bytes(header.encode() + body)
    assert read_ply(p).triangles.tolist() == [[0, 1, 2], [0, 2, 3], [1, 4, 2]]


def test_ply_errors_name_file_and_line(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                 "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
                 "0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n")
    with pytest.raises(MeshFormatError) as e:
        read_ply(p)
    assert str(e.value).startswith(f"{p}:13:") and "out of range" in str(e.value)

    p.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                 "property float z\nend_header\n0 0 0\n1 0\n")
    with pytest.raises(MeshFormatError, match=r"bad.ply:9:"):
        read_ply(p)

    p.write_text("PLY?\n")
    with pytest.raises(MeshFormatError, match=r"bad.ply:1: not a PLY"):
        read_ply(p)

    p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n")
    with pytest.raises(MeshFormatError, match=r"bad.ply:3: vertex property 'z'"):
        read_ply(p)


def test_ply_truncated_binary(tmp_path):
    p = tmp_path / "t.ply"
    write_ply(p, unit_cube())
    p.write_bytes(p.read_bytes()[:-7])
    with pytest.raises(MeshFormatError, match="truncated"):
        read_ply(p)


def test_missing_file():
    with pytest.raises(MissingFileError, match="file not found"):
        read_ply("/nonexistent/x.ply")
    assert issubclass(MissingFileError, FileNotFoundError)


def test_trajectory_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    frames = [(f"f{i}", Pose(axis_angle(rng.normal(size=3), rng.uniform(0, 180)), rng.normal(size=3) * 10))
              for i in range(200)]
    write_trajectory(tmp_path / "t.txt", frames)
    back = read_trajectory(tmp_path / "t.txt")
    assert [f for f, _ in back] == [f for f, _ in frames]
    for (_, a), (_, b) in zip(frames, back):
        assert np.array_equal(a.matrix(), b.matrix())


def _traj_line(m):
    return "f0 " + " ".join(repr(float(x)) for x in np.asarray(m)[:3].ravel()) + "\n"


def test_trajectory_rejects_improper_rotation(tmp_path):
    m = np.eye(4)
    m[2, 2] = -1
    (tmp_path / "t.txt").write_text("# header\n" + _traj_line(m))
    with pytest.raises(PoseFormatError, match=r"t.txt:2: improper rotation"):
        read_trajectory(tmp_path / "t.txt")


def test_trajectory_rigidity_tolerance(tmp_path):
    m = np.eye(4)
    m[0, 0] = 1.0 + 4e-4  # R^T R - I has entry ~8e-4: accepted and re-orthonormalized
    (tmp_path / "ok.txt").write_text(_traj_line(m))
    (_, p), = read_trajectory(tmp_path / "ok.txt")
    assert np.allclose(p.rotation, np.eye(3))
    m[0, 0] = 1.01
    (tmp_path / "bad.txt").write_text(_traj_line(m))
    with pytest.raises(PoseFormatError, match=r"bad.txt:1: non-rigid"):
        read_trajectory(tmp_path / "bad.txt")


def test_trajectory_format_errors(tmp_path):
    (tmp_path / "t.txt").write_text("f0 1 0 0\n")
    with pytest.raises(PoseFormatError, match="t.txt:1: expected 12"):
        read_trajectory(tmp_path / "t.txt")
    (tmp_path / "t.txt").write_text(_traj_line(np.eye(4)) * 2)
    with pytest.raises(DuplicateFrameError, match="t.txt:2"):
        read_trajectory(tmp_path / "t.txt")


def test_object_transforms_roundtrip(tmp_path):
    moves = {12: Pose(axis_angle((0, 0, 1), 30), (1, 2, 0)), 3: Pose()}
    write_object_transforms(tmp_path / "o.txt", moves)
    back = read_object_transforms(tmp_path / "o.txt")
    assert sorted(back) == [3, 12]
    assert back[12].almost_equal(moves[12], 0)


def test_predictions_parse(tmp_path, caplog):
    p = tmp_path / "p.txt"
    p.write_text("# comment\na 1 0 0 0 0 0 0\nb nan 0 0 0 0 0 0\nc 1 0 0 0 inf 0 0\nzz 1 0 0 0 0 0 0\n"
                 "d 2 0 0 0 0 0 0\n")
    with caplog.at_level(logging.WARNING):
        ps = load_predictions(p, ["a", "b", "c", "d", "e"], "m")
    assert ps.get("a").almost_equal(Pose(), 0)
    assert ps.get("b") is None and ps.get("c") is None and ps.get("d") is None and ps.get("e") is None
    assert ps.unknown_frames == ["zz"]
    assert sorted(ps.invalid_frames) == ["b", "c", "d"]
    assert "unknown" in caplog.text and "quaternion norm" in caplog.text


def test_predictions_duplicate(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("a 1 0 0 0 0 0 0\na 1 0 0 0 0 0 0\n")
    with pytest.raises(DuplicateFrameError, match="p.txt:2: duplicate"):
        load_predictions(p)


def test_predictions_roundtrip_precision(tmp_path):
    rng = np.random.default_rng(5)
    preds = {f"f{i}": Pose(axis_angle(rng.normal(size=3), rng.uniform(0, 180)), rng.uniform(-10, 10, 3))
             for i in range(1000)}
    write_predictions(tmp_path / "p.txt", preds)
    back = load_predictions(tmp_path / "p.txt", preds)
    worst = max(max(np.max(np.abs(back.get(f).translation - p.translation)),
                    np.max(np.abs(back.get(f).rotation - p.rotation))) for f, p in preds.items())
    assert worst <= 1e-6


@settings(max_examples=40)
@given(poses(max_trans=100.0))
def test_prediction_row_roundtrip_property(tmp_path_factory, p):
    path = tmp_path_factory.mktemp("pp") / "p.txt"
    write_predictions(path, {"x": p})
    q = load_predictions(path).get("x")
    assert np.max(np.abs(q.translation - p.translation)) <= 1e-6 * max(1.0, np.max(np.abs(p.translation)))
    assert np.max(np.abs(q.rotation - p.rotation)) <= 1e-6


def test_minimal_manifest(tmp_path):
    write_ply(tmp_path / "cube.ply", unit_cube())
    write_trajectory(tmp_path / "ref.txt", [("r0", Pose())])
    write_trajectory(tmp_path / "q.txt", [("q0", Pose())])
    k = {"width": 64, "height": 48, "fx": 50, "fy": 50, "cx": 32, "cy": 24}
    (tmp_path / "m.json").write_text(json.dumps({
        "scene_id": "s", "reference": {"sequence_id": "ref", "model": "cube.ply", "trajectory": "ref.txt"},
        "rescans": [{"sequence_id": "q", "model": "cube.ply", "trajectory": "q.txt", "intrinsics": k}]}))
    scene = load_scene(tmp_path / "m.json")
    assert len(scene.frames()) == 1
    assert scene.models["ref"] is scene.models["q"]  # shared file loaded once


def test_manifest_errors(tmp_path):
    m = tmp_path / "m.json"
    m.write_text('{\n "scene_id": "s",\n "reference": {\n')
    with pytest.raises(DatasetError, match=r"m.json:\d+: malformed manifest"):
        load_manifest(m)
    m.write_text(json.dumps({"reference": {"sequence_id": "r", "model": "nope.ply", "trajectory": "t.txt"}},
                            indent=1))
    with pytest.raises(MissingFileError, match=r"m.json:\d+: referenced file not found"):
        load_manifest(m)
    m.write_text(json.dumps({"reference": {"sequence_id": "r", "model": "a.ply", "trajectory": "t.txt"},
                             "rescans": [{"sequence_id": "q", "model": "a.ply", "trajectory": "t.txt"}]},
                            indent=1))
    with pytest.raises(DatasetError, match=r"m.json:\d+: test sequence q has no intrinsics"):
        load_manifest(m)


def test_scene_roundtrip_and_order_independence(tmp_path):
    manifest, test = write_fixture(tmp_path / "a", n_train=4, n_test=3)
    scene = load_scene(manifest)
    d = json.loads(manifest.read_text())
    # a second rescan, listed before the first in one manifest and after in another
    d["rescans"].append(dict(d["rescans"][0], sequence_id="scan0"))
    both = [dict(d), dict(d, rescans=list(reversed(d["rescans"])))]
    for i, variant in enumerate(both):
        (tmp_path / "a" / f"v{i}.json").write_text(json.dumps(variant))
    with pytest.raises(DuplicateFrameError):
        load_scene(tmp_path / "a" / "v0.json")  # shared trajectory means shared frame ids
    m0, m1 = (load_manifest(tmp_path / "a" / f"v{i}.json") for i in range(2))
    assert [e.sequence_id for e in m0.rescans] == [e.sequence_id for e in m1.rescans] == ["scan0", "scan1"]
    assert m0.rescans == m1.rescans
    gt = dict(test)
    for f in scene.frames():
        assert np.array_equal(f.gt_pose.matrix(), gt[f.frame_id].matrix())
    ref, rescan, label, move = make_room_with_moved_box()
    assert np.array_equal(scene.models["scan1"].vertices, rescan.vertices)
    assert scene.object_transforms["scan1"][label].almost_equal(move, 0)
