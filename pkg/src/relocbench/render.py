"""Software z-buffer rendering of colored, instance-labelled triangle meshes.

``render`` produces the three synthetic views used by the change measures
and by DCRE: a depth map (camera-space z in meters, 0 where no geometry is
hit), an RGB image and an instance-label image (0 where invalid).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _raster
from .geometry import Intrinsics, Pose

NEAR_PLANE = 0.05


@dataclass(frozen=True, eq=False)
class SceneModel:
    """Triangle mesh with per-vertex color and per-vertex instance id.

    Arrays are copied and frozen on construction; a model is safe to share
    between threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_colors: np.ndarray | None = None
    vertex_labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(v)
        c = np.full((n, 3), 128, np.uint8) if self.vertex_colors is None else np.array(self.vertex_colors)
        lab = np.ones(n, np.int64) if self.vertex_labels is None else np.array(self.vertex_labels, dtype=np.int64)
        if c.shape != (n, 3):
            raise ValueError(f"vertex_colors has shape {c.shape}, expected ({n}, 3)")
        if lab.shape != (n,):
            raise ValueError(f"vertex_labels has shape {lab.shape}, expected ({n},)")
        if len(f) and (f.min() < 0 or f.max() >= n):
            bad = int(np.nonzero((f < 0) | (f >= n))[0][0])
            raise IndexError(f"triangle {bad} references a vertex outside [0, {n})")
        if np.any(lab < 0):
            raise ValueError("instance labels must be non-negative")
        c = np.clip(c, 0, 255).astype(np.uint8)
        for name, arr in (("vertices", v), ("triangles", f), ("vertex_colors", c), ("vertex_labels", lab)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    @cached_property
    def digest(self) -> str:
        """Content hash, used as a cache key for rendered views."""
        h = hashlib.sha256()
        for arr in (self.vertices, self.triangles, self.vertex_colors, self.vertex_labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def transformed(self, pose: Pose, instance: int | None = None) -> "SceneModel":
        """Copy with ``pose`` applied to all vertices, or only to one instance."""
        v = self.vertices.copy()
        sel = slice(None) if instance is None else self.vertex_labels == instance
        v[sel] = pose.transform(v[sel])
        return SceneModel(v, self.triangles, self.vertex_colors, self.vertex_labels)

    @staticmethod
    def merge(*models: "SceneModel") -> "SceneModel":
        verts, tris, cols, labs = [], [], [], []
        offset = 0
        for m in models:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            cols.append(m.vertex_colors)
            labs.append(m.vertex_labels)
            offset += len(m.vertices)
        return SceneModel(np.concatenate(verts), np.concatenate(tris), np.concatenate(cols), np.concatenate(labs))


@dataclass(frozen=True, eq=False)
class RenderedViews:
    depth: np.ndarray  # (h, w) float32, meters, 0 = invalid
    color: np.ndarray  # (h, w, 3) uint8
    labels: np.ndarray  # (h, w) int32, 0 = invalid
    pose: Pose
    intrinsics: Intrinsics

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0


def _rasterize(model: SceneModel, pose: Pose, k: Intrinsics):
    zbuf = np.full(k.shape, np.inf)
    tri_id = np.full(k.shape, -1, np.int64)
    weights = np.zeros(k.shape + (3,))
    if model.is_empty:
        return zbuf, tri_id, weights
    # model -> camera: R^T (x - t)
    cam = (model.vertices - pose.translation) @ pose.rotation
    _raster.rasterize(
        np.ascontiguousarray(cam), model.triangles, k.width, k.height,
        k.fx, k.fy, k.cx, k.cy, NEAR_PLANE, zbuf, tri_id, weights,
    )
    return zbuf, tri_id, weights


def render_depth(model: SceneModel, pose: Pose, k: Intrinsics) -> np.ndarray:
    """Depth-only rendering; identical to ``render(...).depth``."""
    zbuf, tri_id, _ = _rasterize(model, pose, k)
    return np.where(tri_id >= 0, zbuf, 0.0).astype(np.float32)


def render(model: SceneModel, pose: Pose, k: Intrinsics) -> RenderedViews:
    """Render depth, color and instance labels of ``model`` seen from ``pose``.

    Triangles are double sided. Colors are interpolated perspective-correctly
    from the vertex colors; the label of a pixel is the label of the corner
    with the largest barycentric weight in the winning fragment.
    """
    zbuf, tri_id, weights = _rasterize(model, pose, k)
    hit = tri_id >= 0
    depth = np.where(hit, zbuf, 0.0).astype(np.float32)
    color = np.zeros(k.shape + (3,), np.uint8)
    labels = np.zeros(k.shape, np.int32)
    if np.any(hit):
        corners = model.triangles[tri_id[hit]]  # (n, 3) vertex ids
        w = weights[hit]
        rgb = np.einsum("nc,ncj->nj", w, model.vertex_colors[corners].astype(np.float64))
        color[hit] = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
        best = np.argmax(w, axis=1)
        labels[hit] = model.vertex_labels[corners[np.arange(len(corners)), best]]
    return RenderedViews(depth, color, labels, pose, k)
