"""Rigid poses, quaternions, dual quaternions and the pinhole camera model.

Conventions used throughout the package:

* A :class:`Pose` maps camera coordinates to model (world) coordinates,
  ``x_model = R @ x_cam + t``.
* Quaternions are numpy arrays ordered ``(w, x, y, z)``.
* Pixel coordinates are continuous, with integer values at pixel centres.
  Column ``u`` runs along the image width, row ``v`` along the height.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics plus image size in pixels."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("image size must be integral")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid image size {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def shape(self) -> tuple[int, int]:
        """Image array shape ``(height, width)``."""
        return (self.height, self.width)

    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, factor: int) -> "Intrinsics":
        """Intrinsics of the same camera sampled ``factor`` times more densely.

        Pixel centres stay at integer coordinates, so the principal point
        moves by ``(factor - 1) / 2``.
        """
        if factor == 1:
            return self
        s = float(factor)
        return Intrinsics(
            self.width * factor,
            self.height * factor,
            self.fx * s,
            self.fy * s,
            (self.cx + 0.5) * s - 0.5,
            (self.cy + 0.5) * s - 0.5,
        )

    @classmethod
    def from_matrix(cls, k: np.ndarray, width: int, height: int) -> "Intrinsics":
        k = np.asarray(k, dtype=float)
        return cls(width, height, k[0, 0], k[1, 1], k[0, 2], k[1, 2])


# ---------------------------------------------------------------------------
# quaternions
# ---------------------------------------------------------------------------

def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion of a rotation matrix, with ``w >= 0``.

    Shepperd's method: pick the largest diagonal term of the 4x4 symmetric
    form to stay away from cancellation.
    """
    r = np.asarray(r, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > max(r[0, 0], r[1, 1], r[2, 2]):
        s = 2.0 * math.sqrt(1.0 + tr)
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = 2.0 * math.sqrt(max(1.0 + r[0, 0] - r[1, 1] - r[2, 2], 0.0))
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = 2.0 * math.sqrt(max(1.0 + r[1, 1] - r[0, 0] - r[2, 2], 0.0))
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(max(1.0 + r[2, 2] - r[0, 0] - r[1, 1], 0.0))
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def axis_angle(axis: Sequence[float], degrees: float) -> np.ndarray:
    """Rotation matrix for a rotation of ``degrees`` about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = math.radians(degrees) / 2.0
    return matrix_from_quat(np.concatenate([[math.cos(half)], math.sin(half) * axis]))


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Closest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def rotation_defect(r: np.ndarray) -> float:
    """Largest entry of ``|R^T R - I|``, a measure of non-orthonormality."""
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-model rigid transform.

    Non-finite poses can be built (``check`` skips them) so that invalid
    predictions survive ingestion and are later counted as N/A.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if self.is_finite():
            if rotation_defect(r) > _ORTHO_TOL:
                raise ValueError("rotation is not orthonormal")
            if np.linalg.det(r) < 0:
                raise ValueError("improper rotation (det(R) = -1)")

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, q: Sequence[float], t: Sequence[float]) -> "Pose":
        return cls(matrix_from_quat(np.asarray(q, dtype=float)), t)

    @classmethod
    def from_dual_quaternion(cls, dq: "DualQuaternion") -> "Pose":
        real = dq.real / np.linalg.norm(dq.real)
        dual = dq.dual / np.linalg.norm(dq.real)
        t = 2.0 * quat_mul(dual, quat_conj(real))[1:]
        return cls(matrix_from_quat(real), t)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation)))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def quaternion(self) -> np.ndarray:
        return quat_from_matrix(self.rotation)

    def dual_quaternion(self) -> "DualQuaternion":
        return DualQuaternion.from_pose(self)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the pose to an ``(N, 3)`` array (or a single 3-vector)."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return bool(
            np.max(np.abs(self.rotation - other.rotation)) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )

    def __repr__(self):
        q = np.round(self.quaternion(), 6).tolist() if self.is_finite() else "nan"
        return f"Pose(q={q}, t={np.round(self.translation, 6).tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    return a @ b


def invert(p: Pose) -> Pose:
    return p.inverse()


@dataclass(frozen=True, eq=False)
class DualQuaternion:
    """Unit dual quaternion ``real + eps * dual`` with ``dual = t * real / 2``."""

    real: np.ndarray
    dual: np.ndarray

    @classmethod
    def from_pose(cls, pose: Pose) -> "DualQuaternion":
        real = pose.quaternion()
        tq = np.concatenate([[0.0], pose.translation])
        return cls(real, 0.5 * quat_mul(tq, real))

    def __neg__(self) -> "DualQuaternion":
        return DualQuaternion(-self.real, -self.dual)

    def normalized(self) -> "DualQuaternion":
        n = np.linalg.norm(self.real)
        real = self.real / n
        dual = self.dual / n
        # Remove the component of the dual part along the real part.
        dual = dual - np.dot(real, dual) * real
        return DualQuaternion(real, dual)

    def to_pose(self) -> Pose:
        return Pose.from_dual_quaternion(self)


# ---------------------------------------------------------------------------
# pose errors and blending
# ---------------------------------------------------------------------------

def angular_error(r1: np.ndarray, r2: np.ndarray) -> float:
    """Rotation difference in degrees, in ``[0, 180]``."""
    d = abs(float(np.dot(quat_from_matrix(r1), quat_from_matrix(r2))))
    return math.degrees(2.0 * math.acos(min(d, 1.0)))


def translation_error(p1: Pose, p2: Pose) -> float:
    return float(np.linalg.norm(p1.translation - p2.translation))


def dlb_blend(poses: Sequence[Pose], weights: Optional[Sequence[float]] = None) -> Pose:
    """Dual-quaternion linear blending (Kavan et al.) of rigid poses.

    Every dual quaternion is flipped onto the hemisphere of the first one
    before the weighted sum, so the result does not depend on the sign
    chosen for any input rotation.
    """
    if len(poses) == 0:
        raise ValueError("no poses to blend")
    if weights is None:
        weights = np.ones(len(poses))
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(poses),):
        raise ValueError("need one weight per pose")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    w = w / w.sum()

    dqs = [DualQuaternion.from_pose(p) for p in poses]
    pivot = dqs[0].real
    real = np.zeros(4)
    dual = np.zeros(4)
    for wi, dq in zip(w, dqs):
        sign = -1.0 if np.dot(dq.real, pivot) < 0 else 1.0
        real += sign * wi * dq.real
        dual += sign * wi * dq.dual
    return DualQuaternion(real, dual).to_pose()


# ---------------------------------------------------------------------------
# pinhole projection
# ---------------------------------------------------------------------------

def project(point: Sequence[float], k: Intrinsics) -> Optional[np.ndarray]:
    """Pixel coordinate of a camera-space point, or ``None`` behind the camera."""
    x, y, z = (float(c) for c in point)
    if not z > 0:
        return None
    return np.array([k.fx * x / z + k.cx, k.fy * y / z + k.cy])


def backproject(u: Sequence[float], depth: float, k: Intrinsics) -> Optional[np.ndarray]:
    """Camera-space point at pixel ``u`` and depth ``depth``; ``None`` if invalid."""
    if not depth > 0:
        return None
    return np.array([(u[0] - k.cx) / k.fx * depth, (u[1] - k.cy) / k.fy * depth, float(depth)])


def project_points(points: np.ndarray, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`project`.

    Returns ``(uv, in_front)``; rows of ``uv`` where ``in_front`` is false
    are NaN.
    """
    points = np.asarray(points, dtype=float)
    z = points[:, 2]
    in_front = z > 0
    uv = np.full((len(points), 2), np.nan)
    zf = z[in_front]
    uv[in_front, 0] = k.fx * points[in_front, 0] / zf + k.cx
    uv[in_front, 1] = k.fy * points[in_front, 1] / zf + k.cy
    return uv, in_front


def pixel_grid(k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Column and row coordinate arrays of shape ``(height, width)``."""
    return np.meshgrid(np.arange(k.width, dtype=float), np.arange(k.height, dtype=float))


def backproject_depth(depth: np.ndarray, k: Intrinsics, mask: Optional[np.ndarray] = None):
    """Back-project every valid pixel of a depth map.

    Returns ``(points, uv)`` with camera-space points ``(N, 3)`` and their
    pixel coordinates ``(N, 2)``, in row-major pixel order.
    """
    depth = np.asarray(depth)
    if depth.shape != k.shape:
        raise ValueError(f"depth map shape {depth.shape} does not match intrinsics {k.shape}")
    valid = depth > 0
    if mask is not None:
        valid &= mask
    rows, cols = np.nonzero(valid)
    d = depth[rows, cols].astype(np.float64)
    u = cols.astype(np.float64)
    v = rows.astype(np.float64)
    points = np.stack([(u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d], axis=1)
    return points, np.stack([u, v], axis=1)
