"""Sequence fusion on a noisy trajectory with gross outliers.

Prints the DCRE recall at 0.05 for single frames and for several window
lengths.
"""
import numpy as np

from relocbench.fusion import fuse_sequence
from relocbench.geometry import Intrinsics
from relocbench.metrics import FrameRecord, evaluate_frame, recall_dcre
from relocbench.synthetic import make_room, perturb, random_room_poses, room_trajectory


def main():
    rng = np.random.default_rng(3)
    room = make_room(subdivisions=10)
    k = Intrinsics(320, 240, 250, 250, 159.5, 119.5)
    gts = room_trajectory(80, turns=0.8)
    gross = random_room_poses(80, seed=4)
    frames = [
        FrameRecord(f"f{i:03d}", g, k, gross[i] if rng.random() < 0.25 else perturb(g, rng, 0.02, 2.0))
        for i, g in enumerate(gts)
    ]

    def score(records):
        return recall_dcre([evaluate_frame(room, r) for r in records], 0.05)

    print(f"single frame   E_f(0.05) = {score(frames):.3f}")
    for window in (2, 5, 10, 20):
        print(f"window {window:>2}      E_f(0.05) = {score(fuse_sequence(frames, window)):.3f}")


if __name__ == "__main__":
    main()
