"""Per-frame evaluation over a worker pool with an order-preserving reduction."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .cache import DepthCache
from .change import change_scores
from .dataset import PredictionSet, Scene
from .difficulty import DifficultyScores, fov_context, pose_novelty, variance_of_laplacian
from .geometry import Pose
from .metrics import DEFAULT_OBJ_THRESHOLD, FrameRecord, FrameResult, evaluate_frame
from .render import SceneModel, render

log = logging.getLogger(__name__)


class FrameError(RuntimeError):
    """A frame-level failure, with scene / sequence / frame context."""


@dataclass(frozen=True)
class PipelineOptions:
    supersample: int = 1
    with_change: bool = False
    with_difficulty: bool = False
    obj_eps: float = DEFAULT_OBJ_THRESHOLD
    workers: int = 1
    keep_going: bool = False


def difficulty_scores(views, reference_model: Optional[SceneModel], train_poses: Optional[Sequence[Pose]]
                      ) -> DifficultyScores:
    """Difficulty of a frame from its rendering at the ground-truth pose."""
    ctx = fov_context(views.depth, views.intrinsics, views.pose)
    eta = nearest = None
    if reference_model is not None and train_poses:
        nov = pose_novelty(views.pose, train_poses, reference_model, views.intrinsics)
        eta, nearest = nov.eta, nov.nearest
    return DifficultyScores(variance_of_laplacian(views.color), ctx.volume, eta, nearest)


def evaluate_records(records: Sequence[FrameRecord], model_for: Callable[[str], SceneModel],
                     options: PipelineOptions = PipelineOptions(), *,
                     reference_model: Optional[SceneModel] = None,
                     train_poses: Optional[Sequence[Pose]] = None,
                     object_transforms: Optional[Mapping[str, Mapping[int, Pose]]] = None,
                     cache: Optional[DepthCache] = None, context: str = "") -> list[FrameResult]:
    """Evaluate every record; results come back in input order.

    ``model_for`` maps a sequence id to the rescan model the frame was
    captured in. Change measures compare it against ``reference_model``;
    pose novelty uses ``reference_model`` and ``train_poses``.
    """
    cache = cache or DepthCache()
    object_transforms = object_transforms or {}

    def run(rec: FrameRecord) -> FrameResult:
        try:
            model = model_for(rec.sequence_id)
            depth = None
            if rec.has_prediction:
                depth = cache.depth(model, rec.gt_pose, rec.intrinsics, options.supersample)
            res = evaluate_frame(model, rec, options.supersample, object_transforms.get(rec.sequence_id),
                                 options.obj_eps, depth=depth)
            if options.with_change or options.with_difficulty:
                views = render(model, rec.gt_pose, rec.intrinsics)
                if options.with_change and reference_model is not None:
                    res.change = change_scores(views, render(reference_model, rec.gt_pose, rec.intrinsics))
                if options.with_difficulty:
                    res.difficulty = difficulty_scores(views, reference_model, train_poses)
            return res
        except Exception as e:
            where = f"{context + ', ' if context else ''}sequence {rec.sequence_id}, frame {rec.frame_id}"
            if not options.keep_going:
                raise FrameError(f"{where}: {e}") from e
            log.error("%s: %s", where, e)
            return FrameResult(rec.frame_id, rec.sequence_id, False, extra={"error": str(e)})

    if options.workers <= 1:
        return [run(r) for r in records]
    with ThreadPoolExecutor(max_workers=options.workers) as pool:
        return list(pool.map(run, records))


def evaluate_scene(scene: Scene, predictions: Optional[PredictionSet] = None,
                   options: PipelineOptions = PipelineOptions(), splits=("test",),
                   cache: Optional[DepthCache] = None) -> list[FrameResult]:
    records = scene.frames(splits, predictions)
    return evaluate_records(
        records, scene.models.__getitem__, options,
        reference_model=scene.reference_model, train_poses=scene.train_poses,
        object_transforms=scene.object_transforms, cache=cache,
        context=f"scene {scene.manifest.scene_id}",
    )
