"""Visual, semantic and geometric change between two renderings of a scene.

Both renderings are taken from the same pose: the "test" one from the
rescan model and the reference one from the reference model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .geometry import Intrinsics, Pose
from .render import RenderedViews, SceneModel, render

LUMA = np.array([0.299, 0.587, 0.114])

# flags attached to ChangeScores
DEGENERATE_VISUAL = "degenerate_visual"
EMPTY_SEMANTIC = "empty_semantic_overlap"
EMPTY_DEPTH = "empty_depth_overlap"


def to_gray(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma in float64; 2-D input is returned as float64 unchanged."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    return image[..., :3].astype(np.float64) @ LUMA


class VisualChange(NamedTuple):
    rho_v: float
    zeta_v: float
    degenerate: bool


def visual_change(image: np.ndarray, image_ref: np.ndarray, mask: Optional[np.ndarray] = None,
                  per_channel: bool = False) -> VisualChange:
    """Normalised SSD ``rho_v`` and mean-subtracted correlation ``zeta_v``.

    ``rho_v = sum (I - I')^2 / sqrt(sum I^2 * sum I'^2)`` (0 for identical
    images) and ``zeta_v = sum(Ib * Ib') / sqrt(sum Ib^2 * sum Ib'^2)`` with
    ``Ib`` the image minus its mean over ``mask`` (1 for identical images).

    Images are converted to grayscale unless ``per_channel`` is set, in which
    case all three channels are stacked into one signal. When either image
    has zero energy the affected score is 0 and ``degenerate`` is set.
    """
    image = np.asarray(image)
    image_ref = np.asarray(image_ref)
    if image.shape != image_ref.shape:
        raise ValueError(f"image shapes differ: {image.shape} vs {image_ref.shape}")
    if per_channel and image.ndim == 3:
        a = image.astype(np.float64)
        b = image_ref.astype(np.float64)
    else:
        a = to_gray(image)
        b = to_gray(image_ref)
    if mask is not None:
        a = a[mask]
        b = b[mask]
    a = a.ravel()
    b = b.ravel()
    if a.size == 0:
        return VisualChange(0.0, 0.0, True)

    degenerate = False
    energy = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if energy > 0:
        rho = float(np.sum((a - b) ** 2)) / energy
    else:
        rho, degenerate = 0.0, True

    ac = a - a.mean()
    bc = b - b.mean()
    centred = math.sqrt(float(np.dot(ac, ac)) * float(np.dot(bc, bc)))
    if centred > 0:
        zeta = float(np.dot(ac, bc)) / centred
        zeta = min(max(zeta, -1.0), 1.0)
    else:
        zeta, degenerate = 0.0, True
    return VisualChange(rho, zeta, degenerate)


def semantic_change(labels: np.ndarray, labels_ref: np.ndarray) -> tuple[float, bool]:
    """Fraction of mutually labelled pixels whose instance ids differ.

    Returns ``(zeta_s, empty)``; ``zeta_s`` is 0 when no pixel is labelled
    in both images.
    """
    labels = np.asarray(labels)
    labels_ref = np.asarray(labels_ref)
    if labels.shape != labels_ref.shape:
        raise ValueError(f"label image shapes differ: {labels.shape} vs {labels_ref.shape}")
    both = (labels != 0) & (labels_ref != 0)
    n = int(np.count_nonzero(both))
    if n == 0:
        return 0.0, True
    return int(np.count_nonzero(labels[both] != labels_ref[both])) / n, False


def geometric_change(depth: np.ndarray, depth_ref: np.ndarray) -> tuple[float, bool]:
    """Mean absolute depth difference in millimeters over mutually valid pixels.

    Returns ``(zeta_g, empty)``.
    """
    depth = np.asarray(depth)
    depth_ref = np.asarray(depth_ref)
    if depth.shape != depth_ref.shape:
        raise ValueError(f"depth map shapes differ: {depth.shape} vs {depth_ref.shape}")
    both = (depth > 0) & (depth_ref > 0)
    if not np.any(both):
        return 0.0, True
    diff = np.abs(depth[both].astype(np.float64) - depth_ref[both].astype(np.float64))
    return 1000.0 * float(np.mean(diff)), False


@dataclass(frozen=True)
class ChangeScores:
    rho_v: float
    zeta_v: float
    zeta_s: float
    zeta_g: float
    valid_overlap: float
    flags: frozenset = field(default_factory=frozenset)


def change_scores(views: RenderedViews, views_ref: RenderedViews, per_channel: bool = False) -> ChangeScores:
    """All four change measures for a pair of renderings from the same pose.

    Visual measures only use pixels with valid depth in both renderings.
    """
    both = views.valid & views_ref.valid
    flags = set()
    vis = visual_change(views.color, views_ref.color, mask=both, per_channel=per_channel)
    if vis.degenerate:
        flags.add(DEGENERATE_VISUAL)
    zeta_s, empty_s = semantic_change(views.labels, views_ref.labels)
    if empty_s:
        flags.add(EMPTY_SEMANTIC)
    zeta_g, empty_g = geometric_change(views.depth, views_ref.depth)
    if empty_g:
        flags.add(EMPTY_DEPTH)
    return ChangeScores(vis.rho_v, vis.zeta_v, zeta_s, zeta_g, float(np.mean(both)), frozenset(flags))


def frame_change(model: SceneModel, model_ref: SceneModel, pose: Pose, k: Intrinsics) -> ChangeScores:
    """Render rescan and reference at ``pose`` and compare them."""
    return change_scores(render(model, pose, k), render(model_ref, pose, k))


_SKIP = {
    "rho_v": DEGENERATE_VISUAL,
    "zeta_v": DEGENERATE_VISUAL,
    "zeta_s": EMPTY_SEMANTIC,
    "zeta_g": EMPTY_DEPTH,
}


def scene_change_stats(scores: Iterable[ChangeScores]) -> dict[str, float]:
    """Per-scene mean of each measure.

    A frame is left out of a measure's mean when it carries the flag that
    makes that measure undefined. Measures with no contributing frame are
    NaN.
    """
    scores = list(scores)
    if not scores:
        raise ValueError("no frames")
    out = {}
    for name, flag in _SKIP.items():
        vals = [getattr(s, name) for s in scores if flag not in s.flags]
        out[name] = float(np.mean(vals)) if vals else float("nan")
    out["valid_overlap"] = float(np.mean([s.valid_overlap for s in scores]))
    out["frames"] = len(scores)
    return out
