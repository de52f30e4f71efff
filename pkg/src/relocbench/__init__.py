"""Evaluation toolkit for camera re-localization in changing indoor scenes.

Renders scene meshes with a z-buffer rasterizer, scores predicted camera
poses by dense reprojection error, measures scene change and per-frame
difficulty, and fuses per-frame predictions along a sequence.
"""
from .geometry import DualQuaternion, Intrinsics, Pose, angular_error, dlb_blend, translation_error
from .render import RenderedViews, SceneModel, render, render_depth
from .change import ChangeScores, change_scores, scene_change_stats, visual_change
from .metrics import (
    DcreResult,
    EvalConfig,
    EvaluationReport,
    FrameRecord,
    FrameResult,
    aggregate,
    build_report,
    cumulative_curve,
    dcre_frame,
    evaluate_frame,
)
from .difficulty import PRESETS, DifficultyScores, FilterPreset, apply_filter, fov_context, get_preset, pose_novelty, variance_of_laplacian
from .fusion import fuse_sequence, fuse_window
from .dataset import load_manifest, load_predictions, load_scene, read_ply, write_ply, write_scene
from .pipeline import PipelineOptions, evaluate_records, evaluate_scene
from .report import read_frames_csv, write_report

__version__ = "0.1.0"
