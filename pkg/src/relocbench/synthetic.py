"""Procedural scenes and camera paths for tests and demos.

The "room" is an inward-facing box with textured walls plus a few labelled
boxes standing on the floor, roughly the layout of a small office.
"""
from __future__ import annotations

import numpy as np

from .geometry import Intrinsics, Pose, axis_angle
from .render import SceneModel

ROOM_SIZE = (5.0, 4.0, 2.7)
BOX_LABELS = (10, 11, 12)


def _grid_face(origin, du, dv, n, label, rng, flip=False, base=None):
    s = np.linspace(0.0, 1.0, n + 1)
    a, b = np.meshgrid(s, s, indexing="ij")
    verts = origin + a.reshape(-1, 1) * du + b.reshape(-1, 1) * dv
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    q0 = idx[:-1, :-1].ravel()
    q1 = idx[1:, :-1].ravel()
    q2 = idx[1:, 1:].ravel()
    q3 = idx[:-1, 1:].ravel()
    tris = np.concatenate([np.stack([q0, q1, q2], 1), np.stack([q0, q2, q3], 1)])
    if flip:
        tris = tris[:, ::-1]
    base = rng.integers(60, 200, 3) if base is None else np.asarray(base)
    checker = ((np.floor(a * n) + np.floor(b * n)) % 2).reshape(-1, 1)
    noise = rng.integers(-25, 26, (len(verts), 3))
    colors = np.clip(base + 50 * checker + noise, 0, 255).astype(np.uint8)
    return SceneModel(verts, tris, colors, np.full(len(verts), label))


def make_box(center, size, label=1, subdivisions=1, seed=0, inward=False, face_labels=None) -> SceneModel:
    """Axis-aligned box made of six subdivided faces.

    With ``face_labels`` (six ids) every face gets its own instance id,
    which is how the room walls are labelled.
    """
    rng = np.random.default_rng(seed)
    c = np.asarray(center, dtype=float)
    h = np.asarray(size, dtype=float) / 2.0
    lo = c - h
    ex, ey, ez = np.diag(2 * h)
    faces = [
        (lo, ey, ez), (lo + ex, ez, ey),  # -x, +x
        (lo, ez, ex), (lo + ey, ex, ez),  # -y, +y
        (lo, ex, ey), (lo + ez, ey, ex),  # -z, +z
    ]
    labels = face_labels if face_labels is not None else [label] * 6
    parts = [
        _grid_face(o, du, dv, subdivisions, lab, rng, flip=inward)
        for (o, du, dv), lab in zip(faces, labels)
    ]
    return SceneModel.merge(*parts)


def unit_cube(center=(0.0, 0.0, 3.0), label=1) -> SceneModel:
    """12-triangle cube of side 1."""
    return make_box(center, (1.0, 1.0, 1.0), label=label, subdivisions=1, seed=1)


def make_room(subdivisions=20, seed=0) -> SceneModel:
    """Textured room (6 labelled walls) with three labelled boxes, ~5k triangles."""
    size = np.array(ROOM_SIZE)
    room = make_box(size / 2, size, subdivisions=subdivisions, seed=seed, inward=True,
                    face_labels=[1, 2, 3, 4, 5, 6])
    return SceneModel.merge(room, *room_boxes(seed=seed))


def room_boxes(seed=0):
    specs = [
        ((1.0, 1.0, 0.4), (0.8, 0.8, 0.8)),
        ((3.8, 1.2, 0.5), (1.0, 0.6, 1.0)),
        ((2.5, 3.2, 0.3), (1.2, 0.7, 0.6)),
    ]
    return [
        make_box(c, s, label=lab, subdivisions=4, seed=seed + 7 * i + 1)
        for i, ((c, s), lab) in enumerate(zip(specs, BOX_LABELS))
    ]


def make_room_with_moved_box(offset=(0.6, 0.3, 0.0), which=0, seed=0):
    """Reference room, rescan room with one box translated, and the box's move."""
    size = np.array(ROOM_SIZE)
    walls = make_box(size / 2, size, subdivisions=20, seed=seed, inward=True, face_labels=[1, 2, 3, 4, 5, 6])
    boxes = room_boxes(seed=seed)
    move = Pose(np.eye(3), offset)
    moved = list(boxes)
    moved[which] = boxes[which].transformed(move)
    return SceneModel.merge(walls, *boxes), SceneModel.merge(walls, *moved), BOX_LABELS[which], move


def fronto_parallel_plane(z=2.0, half_extent=10.0, label=1) -> SceneModel:
    """Large square at constant depth ``z`` facing a camera at the origin."""
    e = half_extent
    v = [(-e, -e, z), (e, -e, z), (e, e, z), (-e, e, z)]
    return SceneModel(v, [(0, 1, 2), (0, 2, 3)], np.full((4, 3), 200), np.full(4, label))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose of a camera at ``eye`` looking at ``target``.

    Camera axes follow the usual computer-vision convention: x right,
    y down, z forward.
    """
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, (1.0, 0.0, 0.0))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), eye)


def default_intrinsics(width=640, height=480, focal=500.0) -> Intrinsics:
    return Intrinsics(width, height, focal, focal, width / 2.0, height / 2.0)


def random_room_poses(n, seed=0, margin=0.6) -> list[Pose]:
    """Cameras inside the room looking at random points near the walls."""
    rng = np.random.default_rng(seed)
    size = np.array(ROOM_SIZE)
    poses = []
    for _ in range(n):
        eye = rng.uniform([margin, margin, 1.0], [size[0] - margin, size[1] - margin, 1.8])
        target = rng.uniform([0.0, 0.0, 0.2], size - [0.0, 0.0, 0.2])
        while np.linalg.norm(target - eye) < 1.0:
            target = rng.uniform([0.0, 0.0, 0.2], size - [0.0, 0.0, 0.2])
        pose = look_at(eye, target)
        roll = axis_angle((0.0, 0.0, 1.0), rng.uniform(-10, 10))
        poses.append(Pose(pose.rotation @ roll, pose.translation))
    return poses


def room_trajectory(n, radius=1.0, turns=0.5, height=1.4, phase=0.0) -> list[Pose]:
    """Smooth circular walk around the room centre, looking outwards."""
    centre = np.array(ROOM_SIZE) / 2
    poses = []
    for i in range(n):
        a = phase + 2 * np.pi * turns * i / max(n - 1, 1)
        eye = np.array([centre[0] + radius * np.cos(a), centre[1] + radius * np.sin(a), height])
        target = eye + np.array([np.cos(a + 0.3), np.sin(a + 0.3), -0.25])
        poses.append(look_at(eye, target))
    return poses


def perturb(pose: Pose, rng, trans=0.02, rot_deg=2.0) -> Pose:
    """Camera-frame perturbation: uniform translation per axis, random-axis rotation."""
    dt = rng.uniform(-trans, trans, 3)
    axis = rng.normal(size=3)
    d = Pose(axis_angle(axis, rng.uniform(0.0, rot_deg)), dt)
    return pose @ d


def write_fixture(directory, n_train=12, n_test=8, width=160, height=120, focal=125.0, binary=True):
    """Write a two-sequence scene bundle (reference + one rescan with a moved box).

    Returns ``(manifest_path, test_frames)`` where ``test_frames`` is the
    rescan's list of ``(frame_id, gt_pose)``.
    """
    from .dataset import write_scene

    ref, rescan, label, move = make_room_with_moved_box()
    k = Intrinsics(width, height, focal, focal, width / 2.0, height / 2.0)
    train = [(f"ref-{i:04d}", p) for i, p in enumerate(room_trajectory(n_train, turns=1.0))]
    test = [(f"scan1-{i:04d}", p) for i, p in enumerate(room_trajectory(n_test, radius=0.8, turns=0.6,
                                                                        height=1.3, phase=0.2))]
    manifest = write_scene(
        directory, "room",
        {"sequence_id": "ref", "model": ref, "frames": train, "intrinsics": k},
        [{"sequence_id": "scan1", "model": rescan, "frames": test, "intrinsics": k,
          "object_transforms": {label: move}}],
        binary=binary,
    )
    return manifest, test
