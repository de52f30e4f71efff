"""On-disk cache of rendered depth maps.

Entries are content addressed by (model hash, pose, intrinsics,
supersampling factor). Set ``RELOCBENCH_CACHE_DIR`` to enable the cache
from the command line.
"""
from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Intrinsics, Pose
from .render import SceneModel, render_depth

ENV_VAR = "RELOCBENCH_CACHE_DIR"


class DepthCache:
    def __init__(self, directory: Optional[os.PathLike] = None):
        self.directory = Path(directory) if directory else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @classmethod
    def from_env(cls) -> "DepthCache":
        return cls(os.environ.get(ENV_VAR) or None)

    @property
    def enabled(self) -> bool:
        return self.directory is not None

    @staticmethod
    def key(model: SceneModel, pose: Pose, k: Intrinsics, supersample: int = 1) -> str:
        h = hashlib.sha256(model.digest.encode())
        h.update(np.ascontiguousarray(pose.matrix()).tobytes())
        h.update(repr((k.width, k.height, k.fx, k.fy, k.cx, k.cy, supersample)).encode())
        return h.hexdigest()

    def depth(self, model: SceneModel, pose: Pose, k: Intrinsics, supersample: int = 1) -> np.ndarray:
        """Depth at ``k.scaled(supersample)``, rendered or read from the cache."""
        kr = k.scaled(supersample)
        if self.directory is None:
            return render_depth(model, pose, kr)
        path = self.directory / f"{self.key(model, pose, k, supersample)}.npy"
        if path.is_file():
            return np.load(path)
        depth = render_depth(model, pose, kr)
        # write-then-rename so concurrent readers never see a partial file
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            np.save(fh, depth)
        os.replace(tmp, path)
        return depth
