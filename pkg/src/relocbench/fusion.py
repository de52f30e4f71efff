"""Sequence-based re-localization by clustering per-frame predictions.

Each frame of a window comes with its pose relative to the window's last
frame. A frame's prediction, composed with that relative pose, is a
hypothesis for the last frame's pose. Hypotheses are clustered, and the
dual-quaternion blend of the largest cluster is the window's result.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Pose, dlb_blend
from .metrics import FrameRecord

DEFAULT_WINDOWS = (10, 30, 100)
DEFAULT_TRANS_THRESH = 0.10
DEFAULT_ROT_THRESH = 10.0


@dataclass(frozen=True, eq=False)
class SequenceWindow:
    frames: tuple  # of FrameRecord, oldest first
    relative_poses: tuple  # of Pose, each frame relative to the last one
    length: int  # requested window size

    @property
    def last(self) -> FrameRecord:
        return self.frames[-1]

    @property
    def short(self) -> bool:
        return len(self.frames) < self.length


@dataclass(frozen=True, eq=False)
class PoseCluster:
    members: tuple  # candidate indices, ascending
    seed: int
    centroid: Pose


def build_windows(frames: Sequence[FrameRecord], s_delta: int) -> list[SequenceWindow]:
    """One window ending at every frame; the first ``s_delta - 1`` are short."""
    if s_delta < 1:
        raise ValueError("window length must be >= 1")
    if len(frames) == 0:
        raise ValueError("empty sequence")
    frames = list(frames)
    out = []
    for end in range(len(frames)):
        chunk = frames[max(0, end - s_delta + 1): end + 1]
        to_last = chunk[-1].gt_pose.inverse()
        rel = tuple(Pose() if f is chunk[-1] else to_last @ f.gt_pose for f in chunk)
        out.append(SequenceWindow(tuple(chunk), rel, s_delta))
    return out


def candidates(window: SequenceWindow) -> tuple[list[Pose], list[int]]:
    """Hypotheses for the last frame's pose, and the frame index each came from."""
    poses, idx = [], []
    for i, (f, rel) in enumerate(zip(window.frames, window.relative_poses)):
        if f.has_prediction:
            poses.append(f.prediction @ rel.inverse())
            idx.append(i)
    return poses, idx


def neighbourhoods(poses: Sequence[Pose], trans_thresh: float, rot_thresh: float) -> np.ndarray:
    """Boolean matrix: candidates within both thresholds of each other."""
    n = len(poses)
    t = np.array([p.translation for p in poses]).reshape(n, 3)
    q = np.array([p.quaternion() for p in poses]).reshape(n, 4)
    dist = np.linalg.norm(t[:, None, :] - t[None, :, :], axis=2)
    dot = np.minimum(np.abs(q @ q.T), 1.0)
    angle = np.degrees(2.0 * np.arccos(dot))
    adj = (dist <= trans_thresh) & (angle <= rot_thresh)
    np.fill_diagonal(adj, True)
    return adj


def translation_spread(poses: Sequence[Pose], members: Sequence[int]) -> float:
    """Summed distance of the members' positions to their mean position."""
    t = np.array([poses[i].translation for i in sorted(members)])
    return float(np.sum(np.linalg.norm(t - t.mean(axis=0), axis=1)))


def cluster_key(poses, members):
    """Ordering of competing clusters: bigger, then tighter, then earlier."""
    return (-len(members), translation_spread(poses, members), min(members))


def greedy_clusters(poses: Sequence[Pose], trans_thresh: float, rot_thresh: float) -> list[PoseCluster]:
    """Greedy max-neighbour clustering.

    Repeatedly seed a cluster at the unassigned candidate whose unassigned
    neighbourhood ranks first under :func:`cluster_key`, and assign that
    whole neighbourhood to it.
    """
    adj = neighbourhoods(poses, trans_thresh, rot_thresh)
    free = np.ones(len(poses), dtype=bool)
    clusters = []
    while free.any():
        seeds = np.flatnonzero(free)
        sizes = (adj[seeds] & free).sum(axis=1)
        best = None
        for s in seeds[sizes == sizes.max()]:
            members = tuple(int(i) for i in np.flatnonzero(adj[s] & free))
            key = cluster_key(poses, members) + (int(s),)
            if best is None or key < best[0]:
                best = (key, s, members)
        _, seed, members = best
        free[list(members)] = False
        clusters.append(PoseCluster(members, int(seed), dlb_blend([poses[i] for i in members])))
    return clusters


def fuse_window(window: SequenceWindow, trans_thresh: float = DEFAULT_TRANS_THRESH,
                rot_thresh: float = DEFAULT_ROT_THRESH) -> Optional[Pose]:
    """Fused pose of the window's last frame, or ``None`` if nothing was predicted."""
    if not (trans_thresh > 0 and rot_thresh > 0):
        raise ValueError("clustering thresholds must be positive")
    poses, _ = candidates(window)
    if not poses:
        return None
    clusters = greedy_clusters(poses, trans_thresh, rot_thresh)
    best = min(clusters, key=lambda c: cluster_key(poses, c.members))
    return best.centroid


def fuse_sequence(frames: Sequence[FrameRecord], s_delta: int, trans_thresh: float = DEFAULT_TRANS_THRESH,
                  rot_thresh: float = DEFAULT_ROT_THRESH) -> list[FrameRecord]:
    """Frames of a sequence with predictions replaced by their window's fused pose."""
    return [
        w.last.with_prediction(fuse_window(w, trans_thresh, rot_thresh))
        for w in build_windows(frames, s_delta)
    ]
