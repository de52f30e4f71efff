"""Pose-error metrics for re-localization results.

Absolute errors (translation in meters, rotation in degrees), the dense
correspondence re-projection error (DCRE), threshold recalls, outlier
rates, cumulative curves and the moved-object check.

Bookkeeping for missing predictions: every frame counts in the denominator
``p``; a frame without a (finite) prediction never counts as an inlier and
is reported under ``na_fraction`` instead of as an outlier. For any
threshold ``E_f + Ebar_f + na_fraction == 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .geometry import Intrinsics, Pose, angular_error, backproject_depth, project_points, translation_error
from .render import SceneModel, render_depth

STATUS_OK = "ok"
STATUS_NO_PREDICTION = "no-prediction"
STATUS_NO_VALID_PIXELS = "no-valid-pixels"

DEFAULT_ABS_THRESHOLDS = ((0.05, 5.0), (0.5, 25.0))
DEFAULT_DCRE_THRESHOLDS = (0.05, 0.15, 0.5)
DEFAULT_OBJ_THRESHOLD = 0.15


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One query frame. ``prediction`` is ``None`` when the method gave no pose."""

    frame_id: str
    gt_pose: Pose
    intrinsics: Intrinsics
    prediction: Optional[Pose] = None
    sequence_id: str = ""

    @property
    def has_prediction(self) -> bool:
        return self.prediction is not None and self.prediction.is_finite()

    def with_prediction(self, prediction: Optional[Pose]) -> "FrameRecord":
        return FrameRecord(self.frame_id, self.gt_pose, self.intrinsics, prediction, self.sequence_id)


@dataclass(frozen=True)
class DcreResult:
    mean_normalized: float
    mean_pixels_unclamped: float
    valid_pixel_count: int
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


NO_PREDICTION = DcreResult(math.nan, math.nan, 0, STATUS_NO_PREDICTION)


# ---------------------------------------------------------------------------
# DCRE
# ---------------------------------------------------------------------------

class DepthCorrespondences:
    """Back-projected pixels of a depth map rendered at a ground-truth pose.

    Holding these lets several candidate poses be scored against one
    rendering (pose novelty, the moved-object check).
    """

    def __init__(self, depth: np.ndarray, k: Intrinsics, gt_pose: Pose, diagonal: float, scale: float = 1.0):
        self.points, self.uv = backproject_depth(depth, k)
        self.k = k
        self.gt_pose = gt_pose
        self.diagonal = diagonal
        self.scale = scale

    def __len__(self):
        return len(self.points)

    def flows(self, prediction: Pose) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel flow magnitudes (native pixels) and the in-front mask."""
        rel = prediction.inverse() @ self.gt_pose
        moved = self.points @ rel.rotation.T + rel.translation
        uv, in_front = project_points(moved, self.k)
        delta = np.hypot(uv[:, 0] - self.uv[:, 0], uv[:, 1] - self.uv[:, 1]) / self.scale
        return delta, in_front

    def score(self, prediction: Pose, behind_penalty_px: Optional[float] = None) -> DcreResult:
        if prediction is None or not prediction.is_finite():
            return NO_PREDICTION
        n = len(self.points)
        if n == 0:
            return DcreResult(math.nan, math.nan, 0, STATUS_NO_VALID_PIXELS)
        penalty = 2.0 * self.diagonal if behind_penalty_px is None else behind_penalty_px
        delta, in_front = self.flows(prediction)
        normalized = np.where(in_front, np.minimum(delta / self.diagonal, 1.0), 1.0)
        pixels = np.where(in_front, delta, penalty)
        return DcreResult(float(np.mean(normalized)), float(np.mean(pixels)), n)


def dcre_from_depth(depth: np.ndarray, k: Intrinsics, gt_pose: Pose, prediction: Optional[Pose],
                    behind_penalty_px: Optional[float] = None) -> DcreResult:
    """DCRE of ``prediction`` given the depth map rendered at ``gt_pose``.

    Pixels whose point lands behind the predicted camera count as the
    clamped maximum (1) and, in pixel units, as ``behind_penalty_px``
    (default twice the image diagonal).
    """
    return DepthCorrespondences(depth, k, gt_pose, k.diagonal()).score(prediction, behind_penalty_px)


def depth_correspondences(model: SceneModel, gt_pose: Pose, k: Intrinsics, supersample: int = 1,
                          depth: Optional[np.ndarray] = None) -> DepthCorrespondences:
    kr = k.scaled(supersample)
    if depth is None:
        depth = render_depth(model, gt_pose, kr)
    return DepthCorrespondences(depth, kr, gt_pose, k.diagonal(), scale=float(supersample))


def dcre_frame(model: SceneModel, frame: FrameRecord, supersample: int = 1,
               behind_penalty_px: Optional[float] = None, depth: Optional[np.ndarray] = None) -> DcreResult:
    """Render ``model`` at the frame's ground truth and score its prediction.

    ``model`` is the rescan the query was captured in. A precomputed
    ``depth`` (at ``frame.intrinsics.scaled(supersample)``) skips rendering.
    """
    if not frame.has_prediction:
        return NO_PREDICTION
    corr = depth_correspondences(model, frame.gt_pose, frame.intrinsics, supersample, depth)
    return corr.score(frame.prediction, behind_penalty_px)


# ---------------------------------------------------------------------------
# per-frame results and aggregation
# ---------------------------------------------------------------------------

@dataclass
class FrameResult:
    """Everything computed for one frame; ``None`` fields were not evaluated."""

    frame_id: str
    sequence_id: str = ""
    has_prediction: bool = False
    translation_error: Optional[float] = None
    rotation_error: Optional[float] = None
    dcre: DcreResult = NO_PREDICTION
    obj_flag: Optional[bool] = None
    difficulty: Any = None
    change: Any = None
    extra: dict = field(default_factory=dict)

    @property
    def dcre_value(self) -> Optional[float]:
        """DCRE used for counting: ``None`` for N/A, 1 when no pixel was valid."""
        if not self.has_prediction:
            return None
        if self.dcre.status == STATUS_NO_VALID_PIXELS:
            return 1.0
        return self.dcre.mean_normalized


def pose_errors(frame: FrameRecord) -> Optional[tuple[float, float]]:
    """``(translation error m, rotation error deg)`` or ``None`` without prediction."""
    if not frame.has_prediction:
        return None
    return (translation_error(frame.prediction, frame.gt_pose),
            angular_error(frame.prediction.rotation, frame.gt_pose.rotation))


def object_reloc_check(model: SceneModel, frame: FrameRecord, object_transforms: Optional[Mapping[int, Pose]],
                       eps_f: float = DEFAULT_OBJ_THRESHOLD, supersample: int = 1,
                       corr: Optional[DepthCorrespondences] = None) -> Optional[bool]:
    """Whether a failed frame was localized against a moved object.

    ``object_transforms`` maps an instance id to its rigid move from the
    reference placement to the rescan placement. The frame is flagged if,
    for some moved instance, correcting the prediction by that move brings
    its DCRE below ``eps_f``. Returns ``None`` when no transforms are known.
    """
    if not frame.has_prediction:
        raise ValueError(f"frame {frame.frame_id}: no prediction to check")
    if not object_transforms:
        return None
    if corr is None:
        corr = depth_correspondences(model, frame.gt_pose, frame.intrinsics, supersample)
    if corr.score(frame.prediction).mean_normalized < eps_f:
        raise ValueError(f"frame {frame.frame_id}: not a failure at eps_f={eps_f}")
    identity = Pose()
    for instance in sorted(object_transforms):
        move = object_transforms[instance]
        if move.almost_equal(identity, 1e-12):
            continue
        if corr.score(move @ frame.prediction).mean_normalized < eps_f:
            return True
    return False


def evaluate_frame(model: SceneModel, frame: FrameRecord, supersample: int = 1,
                   object_transforms: Optional[Mapping[int, Pose]] = None,
                   obj_eps: float = DEFAULT_OBJ_THRESHOLD, depth: Optional[np.ndarray] = None) -> FrameResult:
    """Absolute errors, DCRE and (for failures) the moved-object flag."""
    res = FrameResult(frame.frame_id, frame.sequence_id, frame.has_prediction)
    errs = pose_errors(frame)
    if errs is None:
        return res
    res.translation_error, res.rotation_error = errs
    corr = depth_correspondences(model, frame.gt_pose, frame.intrinsics, supersample, depth)
    res.dcre = corr.score(frame.prediction)
    if object_transforms and res.dcre_value >= obj_eps and res.dcre.ok:
        res.obj_flag = object_reloc_check(model, frame, object_transforms, obj_eps, corr=corr)
    return res


def _check(results: Sequence[FrameResult]) -> int:
    if len(results) == 0:
        raise ValueError("empty frame list")
    return len(results)


def recall_abs(results: Sequence[FrameResult], eps_t: float, eps_theta: float) -> float:
    """Fraction of all frames with ``dt < eps_t`` and ``dtheta < eps_theta``."""
    p = _check(results)
    n = sum(1 for r in results if r.has_prediction and r.translation_error < eps_t and r.rotation_error < eps_theta)
    return n / p


def outlier_abs(results: Sequence[FrameResult], eps_t: float, eps_theta: float) -> float:
    """Fraction of all frames predicted with ``dt >= eps_t`` or ``dtheta >= eps_theta``."""
    p = _check(results)
    n = sum(1 for r in results if r.has_prediction and (r.translation_error >= eps_t or r.rotation_error >= eps_theta))
    return n / p


def na_fraction(results: Sequence[FrameResult]) -> float:
    p = _check(results)
    return sum(1 for r in results if not r.has_prediction) / p


def lower_median(values: Sequence[float]) -> float:
    v = sorted(values)
    return v[(len(v) - 1) // 2]


def median_errors(results: Sequence[FrameResult]) -> Optional[tuple[float, float]]:
    """Independent (lower) medians of translation and rotation error over predicted frames."""
    dt = [r.translation_error for r in results if r.has_prediction]
    if not dt:
        return None
    dr = [r.rotation_error for r in results if r.has_prediction]
    return lower_median(dt), lower_median(dr)


def recall_dcre(results: Sequence[FrameResult], eps_f: float) -> float:
    p = _check(results)
    return sum(1 for r in results if r.has_prediction and r.dcre_value < eps_f) / p


def outlier_dcre(results: Sequence[FrameResult], eps_f: float) -> float:
    p = _check(results)
    return sum(1 for r in results if r.has_prediction and r.dcre_value >= eps_f) / p


def obj_fraction(results: Sequence[FrameResult]) -> Optional[float]:
    """Fraction of checked failures that were localized against a moved object."""
    checked = [r.obj_flag for r in results if r.obj_flag is not None]
    if not checked:
        return None
    return sum(checked) / len(checked)


_METRIC_GETTERS = {
    "dcre": lambda r: r.dcre_value,
    "translation": lambda r: r.translation_error,
    "rotation": lambda r: r.rotation_error,
}


def cumulative_curve(results: Sequence[FrameResult], metric: str, grid: Sequence[float]) -> np.ndarray:
    """Fraction of all frames whose ``metric`` is below each grid value."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    p = _check(results)
    get = _METRIC_GETTERS[metric]
    values = np.sort([get(r) for r in results if r.has_prediction])
    # strict inequality: count of values < eps
    return np.searchsorted(values, grid, side="left") / p


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    abs_thresholds: tuple = DEFAULT_ABS_THRESHOLDS
    dcre_thresholds: tuple = DEFAULT_DCRE_THRESHOLDS
    obj_threshold: float = DEFAULT_OBJ_THRESHOLD
    dcre_grid: tuple = tuple(np.linspace(0.0, 1.0, 200))
    translation_grid: tuple = tuple(np.linspace(0.0, 1.0, 200))
    rotation_grid: tuple = tuple(np.linspace(0.0, 60.0, 200))

    def __post_init__(self):
        for t, r in self.abs_thresholds:
            if not (t > 0 and r > 0):
                raise ValueError("absolute thresholds must be positive")
        if any(not e > 0 for e in self.dcre_thresholds) or not self.obj_threshold > 0:
            raise ValueError("DCRE thresholds must be positive")
        for name in ("dcre_grid", "translation_grid", "rotation_grid"):
            g = np.asarray(getattr(self, name), dtype=float)
            if g.size == 0 or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be non-empty and strictly increasing")


def abs_key(eps_t: float, eps_theta: float) -> str:
    return f"({eps_t:g}m,{eps_theta:g}deg)"


@dataclass
class EvaluationReport:
    per_frame: list
    aggregates: dict
    curves: dict  # name -> (grid, values)

    def headline(self) -> dict:
        """The headline columns: inliers, medians, DCRE recalls, N/A, outliers, Obj."""
        a = self.aggregates
        return {
            "E_a(0.05m,5deg)": a.get("E_a(0.05m,5deg)"),
            "median (dt, dtheta)": [a["median_dt"], a["median_dtheta"]],
            "E_f(0.05)": a.get("E_f(0.05)"),
            "E_f(0.15)": a.get("E_f(0.15)"),
            "N/A": a["na_fraction"],
            "Ebar_a(0.5m,25deg)": a.get("Ebar_a(0.5m,25deg)"),
            "Ebar_f(0.5)": a.get("Ebar_f(0.5)"),
            "Obj.": a["obj_fraction"],
        }


def aggregate(results: Sequence[FrameResult], config: EvalConfig = EvalConfig()) -> dict:
    out: dict = {"frames": len(results), "predicted": sum(r.has_prediction for r in results)}
    for eps_t, eps_r in config.abs_thresholds:
        key = abs_key(eps_t, eps_r)
        out[f"E_a{key}"] = recall_abs(results, eps_t, eps_r)
        out[f"Ebar_a{key}"] = outlier_abs(results, eps_t, eps_r)
    med = median_errors(results)
    out["median_dt"], out["median_dtheta"] = med if med is not None else (None, None)
    for eps in config.dcre_thresholds:
        out[f"E_f({eps:g})"] = recall_dcre(results, eps)
        out[f"Ebar_f({eps:g})"] = outlier_dcre(results, eps)
    out["na_fraction"] = na_fraction(results)
    out["obj_fraction"] = obj_fraction(results)
    return out


def build_report(results: Sequence[FrameResult], config: EvalConfig = EvalConfig()) -> EvaluationReport:
    results = list(results)
    curves = {}
    for metric, grid in (("dcre", config.dcre_grid), ("translation", config.translation_grid),
                         ("rotation", config.rotation_grid)):
        g = np.asarray(grid, dtype=float)
        curves[metric] = (g, cumulative_curve(results, metric, g))
    return EvaluationReport(results, aggregate(results, config), curves)
