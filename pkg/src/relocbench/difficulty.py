"""Per-frame difficulty scores and the evaluation filter presets.

* ``sigma``: variance of the Laplacian of the grayscale image (texture/blur).
* ``nu``: volume in m^3 of the convex hull of the back-projected depth plus
  the camera centre (field-of-view context).
* ``eta``: pose novelty, the smallest DCRE in pixels between the query's
  ground truth and any training pose.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .change import to_gray
from .geometry import Intrinsics, Pose
from .metrics import depth_correspondences
from .render import SceneModel

log = logging.getLogger(__name__)

HULL_STRIDE = 8


@dataclass(frozen=True)
class DifficultyScores:
    vol: Optional[float] = None
    context_volume: Optional[float] = None
    pose_novelty: Optional[float] = None
    nearest_train: Optional[int] = None


def laplacian(gray: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian over interior pixels, shape ``(h-2, w-2)``."""
    g = gray
    return g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]


def variance_of_laplacian(image: np.ndarray) -> float:
    """Population variance of the Laplacian response of the grayscale image."""
    gray = to_gray(image)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError(f"image {gray.shape[1]}x{gray.shape[0]} is smaller than the 3x3 kernel")
    return float(np.var(laplacian(gray)))


class Context(NamedTuple):
    volume: float
    degenerate: bool


def fov_context(depth: np.ndarray, k: Intrinsics, pose: Pose = Pose(), stride: int = HULL_STRIDE) -> Context:
    """Convex-hull volume of the visible points plus the camera centre.

    Valid pixels are sampled on a ``stride`` grid that always includes the
    last row and column, so the hull reaches the image border.
    """
    depth = np.asarray(depth)
    if depth.shape != k.shape:
        raise ValueError(f"depth map shape {depth.shape} does not match intrinsics {k.shape}")
    rows = np.unique(np.r_[np.arange(0, k.height, stride), k.height - 1])
    cols = np.unique(np.r_[np.arange(0, k.width, stride), k.width - 1])
    sub = depth[np.ix_(rows, cols)].astype(np.float64)
    rr, cc = np.nonzero(sub > 0)
    d = sub[rr, cc]
    u = cols[cc].astype(np.float64)
    v = rows[rr].astype(np.float64)
    pts = np.stack([(u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d], axis=1)
    pts = np.vstack([pts, np.zeros((1, 3))])
    pts = pose.transform(pts)
    if len(pts) < 4:
        return Context(0.0, True)
    try:
        return Context(float(ConvexHull(pts).volume), False)
    except QhullError:
        return Context(0.0, True)


class Novelty(NamedTuple):
    eta: float
    nearest: int


def pose_novelty(query_gt: Pose, train_poses: Sequence[Pose], model: SceneModel, k: Intrinsics,
                 behind_penalty_px: Optional[float] = None, depth: Optional[np.ndarray] = None) -> Novelty:
    """Smallest unclamped DCRE (pixels) of any training pose against ``query_gt``.

    ``model`` is the reference scan, in whose frame the training poses
    live. Ties go to the lowest training index.
    """
    if len(train_poses) == 0:
        raise ValueError("empty training trajectory")
    corr = depth_correspondences(model, query_gt, k, depth=depth)
    best, best_i = np.inf, -1
    for i, p in enumerate(train_poses):
        px = corr.score(p, behind_penalty_px).mean_pixels_unclamped
        if px < best:
            best, best_i = px, i
    if best_i < 0:
        # nothing visible from the query pose: novelty is undefined
        return Novelty(float("nan"), 0)
    return Novelty(float(best), best_i)


# ---------------------------------------------------------------------------
# filter presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bound:
    lo: float = -np.inf
    hi: float = np.inf
    lo_inclusive: bool = True
    hi_inclusive: bool = True

    def __contains__(self, x: float) -> bool:
        lo_ok = x >= self.lo if self.lo_inclusive else x > self.lo
        hi_ok = x <= self.hi if self.hi_inclusive else x < self.hi
        return bool(lo_ok and hi_ok)

    def __str__(self):
        if np.isinf(self.hi):
            return f"{'>=' if self.lo_inclusive else '>'} {self.lo:g}"
        if np.isinf(self.lo):
            return f"{'<=' if self.hi_inclusive else '<'} {self.hi:g}"
        return f"{'[' if self.lo_inclusive else '('}{self.lo:g}, {self.hi:g}{']' if self.hi_inclusive else ')'}"


def gt(x):
    return Bound(lo=x, lo_inclusive=False)


def le(x):
    return Bound(hi=x)


def closed(a, b):
    return Bound(a, b)


@dataclass(frozen=True)
class FilterPreset:
    """A named conjunction of bounds on frame scores.

    Score names: ``sigma``, ``nu``, ``eta``, ``rho_v``, ``zeta_s``, ``zeta_g``.
    """

    name: str
    bounds: Mapping[str, Bound]

    def passes(self, scores: Mapping[str, Optional[float]], frame_id: str = "?") -> bool:
        for key, bound in self.bounds.items():
            value = scores.get(key)
            if value is None or (isinstance(value, float) and np.isnan(value)):
                raise KeyError(f"frame {frame_id}: missing score '{key}' required by preset '{self.name}'")
            if value not in bound:
                return False
        return True


_DEFAULT = {"sigma": gt(7.2), "nu": closed(0.2, 8.0), "eta": le(650.0)}

PRESETS: dict[str, FilterPreset] = {
    p.name: p
    for p in [
        FilterPreset("no filter", {}),
        FilterPreset("default filter", dict(_DEFAULT)),
        FilterPreset("well-textured", {**_DEFAULT, "sigma": gt(33.0)}),
        FilterPreset("texture-less", {**_DEFAULT, "sigma": le(33.0)}),
        FilterPreset("high context", {**_DEFAULT, "nu": gt(2.4)}),
        FilterPreset("medium context", {**_DEFAULT, "nu": closed(0.9, 2.4)}),
        FilterPreset("low context", {**_DEFAULT, "nu": le(0.9)}),
        FilterPreset("novel poses", {**_DEFAULT, "eta": gt(500.0)}),
        FilterPreset("not novel poses", {**_DEFAULT, "eta": le(150.0)}),
        FilterPreset("easy changes", {"rho_v": gt(0.8), "zeta_s": le(0.1), "zeta_g": le(30.0), **_DEFAULT}),
        FilterPreset("hard changes", {"rho_v": le(0.7), "zeta_s": gt(0.4), "zeta_g": gt(30.0), **_DEFAULT}),
    ]
}


def get_preset(name: str) -> FilterPreset:
    key = " ".join(name.replace("_", " ").replace("-", " ").lower().split())
    for preset in PRESETS.values():
        canonical = preset.name.replace("-", " ")
        # "default" and "none" are accepted for "default filter" / "no filter"
        if key in (canonical, canonical.removesuffix(" filter")) or (key == "none" and canonical == "no filter"):
            return preset
    raise KeyError(f"unknown filter preset {name!r}; known: {', '.join(PRESETS)}")


def frame_scores(result) -> dict[str, Optional[float]]:
    """Score mapping of a :class:`~relocbench.metrics.FrameResult`."""
    d, c = result.difficulty, result.change
    return {
        "sigma": d.vol if d else None,
        "nu": d.context_volume if d else None,
        "eta": d.pose_novelty if d else None,
        "rho_v": c.rho_v if c else None,
        "zeta_s": c.zeta_s if c else None,
        "zeta_g": c.zeta_g if c else None,
    }


def apply_filter(frames: Iterable, preset: FilterPreset | str,
                 key: Callable[[object], Mapping[str, Optional[float]]] = frame_scores) -> tuple[list, int]:
    """Frames passing every bound of ``preset``, and their count."""
    if isinstance(preset, str):
        preset = get_preset(preset)
    kept = [f for f in frames if preset.passes(key(f), getattr(f, "frame_id", "?"))]
    return kept, len(kept)
