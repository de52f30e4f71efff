"""Scene bundles on disk: meshes, trajectories, predictions, manifests.

File formats
------------
Mesh
    PLY (ascii or binary) with vertex properties ``x y z``, optional
    ``red green blue`` and optional ``objectId`` (instance id, 0 = none),
    and a ``face`` element with a ``vertex_indices`` list.
Trajectory
    One line per frame: ``frame_id`` followed by the 12 row-major values of
    the top 3x4 block of the camera-to-model matrix. ``#`` starts a comment.
Predictions
    One line per frame: ``frame_id qw qx qy qz tx ty tz`` (camera-to-model).
    Non-finite values mark the frame as not predicted.
Object transforms
    One line per moved instance: ``instance_id`` followed by 12 row-major
    values of the reference-to-rescan rigid motion.
Manifest
    JSON, see :func:`load_scene`.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geometry import Intrinsics, Pose, orthonormalize, rotation_defect
from .metrics import FrameRecord
from .render import SceneModel

log = logging.getLogger(__name__)

RIGID_TOL = 1e-3
QUAT_TOL = 1e-3
SPLITS = ("train", "val", "test")

TRAJECTORY_HEADER = "# frame_id r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz  (camera-to-model, row-major 3x4)"
PREDICTION_HEADER = "# frame_id qw qx qy qz tx ty tz  (camera-to-model)"
OBJECTS_HEADER = "# instance_id r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz  (reference-to-rescan motion)"


class DatasetError(ValueError):
    """A file could not be parsed; carries the path and line number."""

    def __init__(self, path, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class MeshFormatError(DatasetError):
    pass


class PoseFormatError(DatasetError):
    pass


class DuplicateFrameError(DatasetError):
    pass


def _require(path: Path, referenced_from=None, line=None) -> Path:
    if not path.is_file():
        if referenced_from is not None:
            raise MissingFileError(referenced_from, line, f"referenced file not found: {path}")
        raise MissingFileError(path, None, "file not found")
    return path


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_COLOR_NAMES = (("red", "green", "blue"), ("r", "g", "b"), ("diffuse_red", "diffuse_green", "diffuse_blue"))
_LABEL_NAMES = ("objectId", "objectid", "object_id", "label", "instance")


@dataclass
class _Element:
    name: str
    count: int
    line: int  # header line declaring the element
    props: list = field(default_factory=list)  # (name, dtype) or (name, count_dtype, item_dtype)


def _parse_ply_header(path: Path, fh):
    first = fh.readline()
    if first.strip() != b"ply":
        raise MeshFormatError(path, 1, "not a PLY file (missing 'ply' magic)")
    fmt = None
    elements: list[_Element] = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshFormatError(path, lineno, "unexpected end of file in header")
        tok = raw.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise MeshFormatError(path, lineno, f"unsupported format {' '.join(tok[1:])!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            try:
                elements.append(_Element(tok[1], int(tok[2]), lineno))
            except (IndexError, ValueError):
                raise MeshFormatError(path, lineno, "malformed element line") from None
        elif tok[0] == "property":
            if not elements:
                raise MeshFormatError(path, lineno, "property before any element")
            try:
                if tok[1] == "list":
                    elements[-1].props.append((tok[4], _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]]))
                else:
                    elements[-1].props.append((tok[2], _PLY_TYPES[tok[1]]))
            except (IndexError, KeyError):
                raise MeshFormatError(path, lineno, f"malformed property line {raw.strip()!r}") from None
        else:
            raise MeshFormatError(path, lineno, f"unexpected header keyword {tok[0]!r}")
    if fmt is None:
        raise MeshFormatError(path, lineno, "missing format line")
    return fmt, elements, lineno


def _read_ascii_elements(path, fh, elements, lineno):
    data = {}
    for el in elements:
        rows = []
        for _ in range(el.count):
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise MeshFormatError(path, lineno, f"unexpected end of file in element '{el.name}'")
            tok = raw.split()
            vals, pos = {}, 0
            try:
                for prop in el.props:
                    if len(prop) == 3:
                        n = int(tok[pos])
                        vals[prop[0]] = [float(x) for x in tok[pos + 1: pos + 1 + n]]
                        if len(vals[prop[0]]) != n:
                            raise IndexError
                        pos += 1 + n
                    else:
                        vals[prop[0]] = float(tok[pos])
                        pos += 1
            except (IndexError, ValueError):
                raise MeshFormatError(path, lineno, f"malformed '{el.name}' entry") from None
            rows.append(vals)
        data[el.name] = rows
    return data


def _read_binary_elements(path, buf, elements, endian, lineno):
    data = {}
    offset = 0
    for el in elements:
        scalar = all(len(p) == 2 for p in el.props)
        try:
            if scalar:
                dt = np.dtype([(p[0], endian + p[1]) for p in el.props])
                arr = np.frombuffer(buf, dt, el.count, offset)
                offset += dt.itemsize * el.count
                data[el.name] = arr
                continue
            # fast path: one list property with a constant length of 3
            if len(el.props) == 1:
                name, ct, it = el.props[0]
                dt = np.dtype([("n", endian + ct), ("v", endian + it, 3)])
                fits = len(buf) - offset >= dt.itemsize * el.count
                arr = np.frombuffer(buf, dt, el.count, offset) if fits else None
                if arr is not None and np.all(arr["n"] == 3):
                    offset += dt.itemsize * el.count
                    data[el.name] = {name: arr["v"]}
                    continue
            rows = []
            for _ in range(el.count):
                vals = {}
                for prop in el.props:
                    if len(prop) == 3:
                        n = int(np.frombuffer(buf, endian + prop[1], 1, offset)[0])
                        offset += np.dtype(prop[1]).itemsize
                        vals[prop[0]] = np.frombuffer(buf, endian + prop[2], n, offset).tolist()
                        offset += np.dtype(prop[2]).itemsize * n
                    else:
                        vals[prop[0]] = float(np.frombuffer(buf, endian + prop[1], 1, offset)[0])
                        offset += np.dtype(prop[1]).itemsize
                rows.append(vals)
            data[el.name] = rows
        except ValueError:
            raise MeshFormatError(path, lineno + 1, f"binary payload truncated in element '{el.name}'") from None
    return data


def _column(rows, name):
    if isinstance(rows, np.ndarray):
        return rows[name]
    if isinstance(rows, dict):
        return rows[name]
    return [r[name] for r in rows]


def read_ply(path) -> SceneModel:
    """Load a triangle mesh with optional vertex colors and instance ids."""
    path = _require(Path(path))
    with open(path, "rb") as fh:
        fmt, elements, lineno = _parse_ply_header(path, fh)
        els = {e.name: e for e in elements}
        if "vertex" not in els:
            raise MeshFormatError(path, lineno, "no vertex element")
        if fmt == "ascii":
            data = _read_ascii_elements(path, fh, elements, lineno)
        else:
            data = _read_binary_elements(path, fh.read(), elements, "<" if fmt.endswith("little_endian") else ">",
                                         lineno)
    vprops = [p[0] for p in els["vertex"].props]
    for axis in "xyz":
        if axis not in vprops:
            raise MeshFormatError(path, els["vertex"].line, f"vertex property '{axis}' missing")
    rows = data["vertex"]
    verts = np.stack([np.asarray(_column(rows, a), dtype=np.float64) for a in "xyz"], axis=1)
    colors = None
    for names in _COLOR_NAMES:
        if all(n in vprops for n in names):
            colors = np.stack([np.asarray(_column(rows, n), dtype=np.float64) for n in names], axis=1)
            ptype = dict(p for p in els["vertex"].props if len(p) == 2)[names[0]]
            if ptype.startswith("f"):
                # float colors are in [0, 1]
                colors = colors * 255.0
            colors = np.clip(np.rint(colors), 0, 255).astype(np.uint8)
            break
    labels = None
    for n in _LABEL_NAMES:
        if n in vprops:
            labels = np.asarray(_column(rows, n), dtype=np.int64)
            break
    tris = np.zeros((0, 3), np.int64)
    if "face" in els:
        fprops = [p for p in els["face"].props if len(p) == 3]
        if not fprops:
            raise MeshFormatError(path, els["face"].line, "face element has no index list")
        faces = _column(data["face"], fprops[0][0])
        if isinstance(faces, np.ndarray):
            tris = faces.astype(np.int64)
        else:
            out = []
            for f in faces:
                f = [int(i) for i in f]
                out.extend((f[0], f[i], f[i + 1]) for i in range(1, len(f) - 1))
            tris = np.asarray(out, dtype=np.int64).reshape(-1, 3)
    n = len(verts)
    if len(tris) and (tris.min() < 0 or tris.max() >= n):
        bad = int(np.nonzero((tris < 0) | (tris >= n))[0][0])
        raise MeshFormatError(path, _face_line(fmt, elements, lineno, data, bad),
                              f"face {bad} has a vertex index out of range [0, {n})")
    return SceneModel(verts, tris, colors, labels)


def _face_line(fmt, elements, header_end, data, tri):
    """Line of the face holding triangle ``tri``; the element's header line for binary files."""
    face = next(e for e in elements if e.name == "face")
    if fmt != "ascii":
        return face.line
    # map the fan-triangulated index back to its source face
    faces = _column(data["face"], next(p for p in face.props if len(p) == 3)[0])
    seen = 0
    for i, f in enumerate(faces):
        seen += max(len(f) - 2, 0)
        if tri < seen:
            break
    before = sum(e.count for e in elements[:elements.index(face)])
    return header_end + before + i + 1


def write_ply(path, model: SceneModel, binary: bool = True) -> None:
    """Write ``model`` as PLY with double coordinates and 16-bit instance ids."""
    path = Path(path)
    n, m = len(model.vertices), len(model.triangles)
    header = "\n".join([
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {n}",
        "property double x", "property double y", "property double z",
        "property uchar red", "property uchar green", "property uchar blue",
        "property ushort objectId",
        f"element face {m}",
        "property list uchar int vertex_indices",
        "end_header",
    ]) + "\n"
    if model.vertex_labels.size and model.vertex_labels.max() > 65535:
        raise ValueError("instance ids must fit in 16 bits")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            vdt = np.dtype([("p", "<f8", 3), ("c", "u1", 3), ("l", "<u2")])
            v = np.empty(n, vdt)
            v["p"], v["c"], v["l"] = model.vertices, model.vertex_colors, model.vertex_labels
            fh.write(v.tobytes())
            fdt = np.dtype([("n", "u1"), ("v", "<i4", 3)])
            f = np.empty(m, fdt)
            f["n"], f["v"] = 3, model.triangles
            fh.write(f.tobytes())
        else:
            lines = [
                f"{p[0]!r} {p[1]!r} {p[2]!r} {c[0]} {c[1]} {c[2]} {lab}"
                for p, c, lab in zip(model.vertices.tolist(), model.vertex_colors.tolist(), model.vertex_labels.tolist())
            ]
            lines += [f"3 {a} {b} {c}" for a, b, c in model.triangles.tolist()]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# poses and predictions
# ---------------------------------------------------------------------------

def _data_lines(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _rigid(path, lineno, values) -> Pose:
    m = np.asarray(values, dtype=np.float64).reshape(3, 4)
    if not np.all(np.isfinite(m)):
        raise PoseFormatError(path, lineno, "non-finite pose")
    r = m[:, :3]
    if np.linalg.det(r) < 0:
        raise PoseFormatError(path, lineno, "improper rotation (det(R) < 0)")
    defect = rotation_defect(r)
    if defect > RIGID_TOL:
        raise PoseFormatError(path, lineno, f"non-rigid pose (orthonormality violation {defect:.2e})")
    if defect > 1e-9:
        r = orthonormalize(r)
    return Pose(r, m[:, 3])


def _parse_floats(path, lineno, tokens, n):
    if len(tokens) != n:
        raise PoseFormatError(path, lineno, f"expected {n} values, found {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError as e:
        raise PoseFormatError(path, lineno, str(e)) from None


def _pose_row(pose: Pose) -> str:
    m = pose.matrix()[:3]
    return " ".join(repr(float(x)) for x in m.ravel())


def read_trajectory(path) -> list[tuple[str, Pose]]:
    """``(frame_id, camera-to-model pose)`` pairs in file order."""
    path = _require(Path(path))
    out, seen = [], set()
    for lineno, tok in _data_lines(path):
        frame_id = tok[0]
        if frame_id in seen:
            raise DuplicateFrameError(path, lineno, f"duplicate frame id {frame_id!r}")
        seen.add(frame_id)
        out.append((frame_id, _rigid(path, lineno, _parse_floats(path, lineno, tok[1:], 12))))
    return out


def write_trajectory(path, frames: Iterable[tuple[str, Pose]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for frame_id, pose in frames:
            fh.write(f"{frame_id} {_pose_row(pose)}\n")


def read_object_transforms(path) -> dict[int, Pose]:
    path = _require(Path(path))
    out = {}
    for lineno, tok in _data_lines(path):
        try:
            inst = int(tok[0])
        except ValueError:
            raise PoseFormatError(path, lineno, f"invalid instance id {tok[0]!r}") from None
        if inst in out:
            raise DuplicateFrameError(path, lineno, f"duplicate instance id {inst}")
        out[inst] = _rigid(path, lineno, _parse_floats(path, lineno, tok[1:], 12))
    return out


def write_object_transforms(path, transforms: Mapping[int, Pose]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(OBJECTS_HEADER + "\n")
        for inst in sorted(transforms):
            fh.write(f"{inst} {_pose_row(transforms[inst])}\n")


@dataclass
class PredictionSet:
    """Predictions of one method; a frame maps to ``None`` when not predicted."""

    method: str
    poses: dict
    unknown_frames: list = field(default_factory=list)
    invalid_frames: list = field(default_factory=list)

    def get(self, frame_id: str) -> Optional[Pose]:
        return self.poses.get(frame_id)


def load_predictions(path, frame_ids: Optional[Iterable[str]] = None, method: Optional[str] = None) -> PredictionSet:
    """Parse a prediction file.

    Frames of ``frame_ids`` absent from the file map to ``None``, as do rows
    with a non-finite value or a quaternion whose norm is off by more than
    1e-3 (those are listed in ``invalid_frames``). Rows for frames outside
    ``frame_ids`` are skipped with a warning and listed in ``unknown_frames``.
    """
    path = _require(Path(path))
    known = None if frame_ids is None else set(frame_ids)
    poses: dict = {}
    unknown, invalid, seen = [], [], set()
    for lineno, tok in _data_lines(path):
        frame_id = tok[0]
        if frame_id in seen:
            raise DuplicateFrameError(path, lineno, f"duplicate frame id {frame_id!r}")
        seen.add(frame_id)
        if known is not None and frame_id not in known:
            unknown.append(frame_id)
            continue
        vals = np.asarray(_parse_floats(path, lineno, tok[1:], 7))
        q, t = vals[:4], vals[4:]
        norm = float(np.linalg.norm(q)) if np.all(np.isfinite(vals)) else math.nan
        if not abs(norm - 1.0) <= QUAT_TOL:
            if math.isfinite(norm):
                log.warning("%s:%d: quaternion norm %.6f rejected for frame %s", path, lineno, norm, frame_id)
            invalid.append(frame_id)
            poses[frame_id] = None
            continue
        poses[frame_id] = Pose.from_quaternion(q / norm, t)
    if unknown:
        log.warning("%s: skipped %d predictions for unknown frames", path, len(unknown))
    if known is not None:
        for f in known:
            poses.setdefault(f, None)
    return PredictionSet(method or path.stem, poses, unknown, invalid)


def write_predictions(path, predictions: Mapping[str, Optional[Pose]], digits: int = 9) -> None:
    """Write predictions; ``None`` entries are written as a row of NaNs."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PREDICTION_HEADER + "\n")
        for frame_id, pose in predictions.items():
            if pose is None or not pose.is_finite():
                vals = ["nan"] * 7
            else:
                vals = [f"{x:.{digits}g}" for x in np.concatenate([pose.quaternion(), pose.translation])]
            fh.write(f"{frame_id} {' '.join(vals)}\n")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceEntry:
    sequence_id: str
    split: str
    model: Path
    trajectory: Path
    intrinsics: Optional[Intrinsics]
    object_transforms: Optional[Path] = None


@dataclass
class SceneManifest:
    scene_id: str
    path: Path
    reference: SequenceEntry
    rescans: list  # of SequenceEntry, sorted by sequence id

    @property
    def sequences(self) -> list[SequenceEntry]:
        return [self.reference] + self.rescans


@dataclass
class Scene:
    """A loaded scene bundle: manifest, models and trajectories."""

    manifest: SceneManifest
    models: dict  # sequence_id -> SceneModel
    trajectories: dict  # sequence_id -> list of (frame_id, Pose)
    object_transforms: dict  # sequence_id -> {instance: Pose}

    @property
    def reference_model(self) -> SceneModel:
        return self.models[self.manifest.reference.sequence_id]

    @property
    def train_poses(self) -> list[Pose]:
        return [p for _, p in self.trajectories[self.manifest.reference.sequence_id]]

    @property
    def train_frame_ids(self) -> list[str]:
        return [f for f, _ in self.trajectories[self.manifest.reference.sequence_id]]

    def entry(self, sequence_id: str) -> SequenceEntry:
        for e in self.manifest.sequences:
            if e.sequence_id == sequence_id:
                return e
        raise KeyError(sequence_id)

    def frames(self, splits: Sequence[str] = ("test",), predictions: Optional[PredictionSet] = None) -> list[FrameRecord]:
        out = []
        for e in self.manifest.rescans:
            if e.split not in splits:
                continue
            for frame_id, pose in self.trajectories[e.sequence_id]:
                pred = predictions.get(frame_id) if predictions is not None else None
                out.append(FrameRecord(frame_id, pose, e.intrinsics, pred, e.sequence_id))
        return out

    def frame_ids(self, splits: Sequence[str] = ("test",)) -> list[str]:
        return [f.frame_id for f in self.frames(splits)]


def _line_of(lines: Sequence[str], needle: str, default: int = 1) -> int:
    """1-based line of the first occurrence of ``needle``."""
    for i, line in enumerate(lines, 1):
        if needle in line:
            return i
    return default


def _parse_intrinsics(path, d, line=None) -> Optional[Intrinsics]:
    if d is None:
        return None
    try:
        return Intrinsics(d["width"], d["height"], d["fx"], d["fy"], d["cx"], d["cy"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(path, line, f"invalid intrinsics {d!r}: {e}") from None


def _parse_entry(path: Path, root: Path, d, default_split: str, lines: Sequence[str] = ()) -> SequenceEntry:
    try:
        seq = str(d["sequence_id"])
        split = d.get("split", default_split)
        model = root / d["model"]
        traj = root / d["trajectory"]
    except (KeyError, TypeError, AttributeError):
        raise DatasetError(path, 1, f"sequence entry needs sequence_id, model and trajectory: {d!r}") from None
    line = _line_of(lines, json.dumps(seq))
    if split not in SPLITS:
        raise DatasetError(path, line, f"sequence {seq}: unknown split {split!r}")
    intr = _parse_intrinsics(path, d.get("intrinsics"), line)
    if split == "test" and intr is None:
        raise DatasetError(path, line, f"test sequence {seq} has no intrinsics")
    objs = d.get("object_transforms")
    return SequenceEntry(seq, split, model, traj, intr, root / objs if objs else None)


def load_manifest(path) -> SceneManifest:
    """Parse a JSON manifest::

        {"scene_id": "scene01",
         "reference": {"sequence_id": "seq01_01", "model": "ref.ply",
                       "trajectory": "seq01_01.txt", "intrinsics": {...}},
         "rescans": [{"sequence_id": "seq01_02", "split": "test",
                      "model": "seq01_02.ply", "trajectory": "seq01_02.txt",
                      "intrinsics": {"width": 540, "height": 960, "fx": ...,
                                     "fy": ..., "cx": ..., "cy": ...},
                      "object_transforms": "seq01_02_objects.txt"}]}

    Paths are relative to the manifest's directory.
    """
    path = _require(Path(path))
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetError(path, e.lineno, f"malformed manifest: {e.msg}") from None
    root = path.parent
    if not isinstance(d, dict) or "reference" not in d:
        raise DatasetError(path, 1, "manifest needs a 'reference' entry")
    ref = _parse_entry(path, root, d["reference"], "train", lines)
    rescans = sorted((_parse_entry(path, root, e, "test", lines) for e in d.get("rescans", [])),
                     key=lambda e: e.sequence_id)
    ids = [ref.sequence_id] + [e.sequence_id for e in rescans]
    dup = next((i for i in ids if ids.count(i) > 1), None)
    if dup is not None:
        first = _line_of(lines, json.dumps(dup))
        raise DatasetError(path, _line_of(lines[first:], json.dumps(dup)) + first, f"duplicate sequence id {dup!r}")
    for e in [ref] + rescans:
        line = _line_of(lines, json.dumps(e.sequence_id))
        _require(e.model, path, _line_of(lines, json.dumps(e.model.name), line))
        _require(e.trajectory, path, _line_of(lines, json.dumps(e.trajectory.name), line))
        if e.object_transforms is not None:
            _require(e.object_transforms, path, _line_of(lines, json.dumps(e.object_transforms.name), line))
    return SceneManifest(str(d.get("scene_id", path.stem)), path, ref, rescans)


def load_scene(path) -> Scene:
    """Load a manifest and everything it references.

    Models sharing a file are loaded once. Frame ids must be unique across
    all sequences of the scene, since predictions are keyed by them.
    """
    manifest = load_manifest(path)
    by_file: dict = {}
    models, trajs, objs = {}, {}, {}
    seen: dict = {}
    for e in manifest.sequences:
        key = e.model.resolve()
        if key not in by_file:
            by_file[key] = read_ply(e.model)
        models[e.sequence_id] = by_file[key]
        trajs[e.sequence_id] = read_trajectory(e.trajectory)
        for frame_id, _ in trajs[e.sequence_id]:
            if frame_id in seen:
                lines = e.trajectory.read_text(encoding="utf-8").splitlines()
                line = next(i for i, s in enumerate(lines, 1) if s.split()[:1] == [frame_id])
                raise DuplicateFrameError(e.trajectory, line,
                                          f"frame id {frame_id!r} also used in sequence {seen[frame_id]}")
            seen[frame_id] = e.sequence_id
        if e.object_transforms is not None:
            objs[e.sequence_id] = read_object_transforms(e.object_transforms)
    return Scene(manifest, models, trajs, objs)


def _intrinsics_dict(k: Intrinsics) -> dict:
    return {"width": k.width, "height": k.height, "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}


def write_scene(directory, scene_id: str, reference: Mapping, rescans: Sequence[Mapping], binary: bool = True) -> Path:
    """Write a scene bundle and return the manifest path.

    ``reference`` and each rescan are mappings with ``sequence_id``,
    ``model`` (SceneModel), ``frames`` (list of ``(frame_id, Pose)``),
    ``intrinsics`` and optionally ``split`` and ``object_transforms``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def entry(d, split):
        seq = d["sequence_id"]
        write_ply(directory / f"{seq}.ply", d["model"], binary=binary)
        write_trajectory(directory / f"{seq}.txt", d["frames"])
        out = {"sequence_id": seq, "split": d.get("split", split), "model": f"{seq}.ply",
               "trajectory": f"{seq}.txt", "intrinsics": _intrinsics_dict(d["intrinsics"])}
        if d.get("object_transforms"):
            write_object_transforms(directory / f"{seq}_objects.txt", d["object_transforms"])
            out["object_transforms"] = f"{seq}_objects.txt"
        return out

    manifest = {"scene_id": scene_id, "reference": entry(reference, "train"),
                "rescans": [entry(r, "test") for r in rescans]}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path
