"""Evaluate noisy predictions on a synthetic changed room and write a report.

    python demos/evaluate_synthetic.py [OUT_DIR]
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from relocbench.dataset import load_predictions, load_scene, write_predictions
from relocbench.metrics import build_report
from relocbench.pipeline import PipelineOptions, evaluate_scene
from relocbench.report import write_report
from relocbench.synthetic import perturb, write_fixture


def main(out):
    out = Path(out)
    manifest, test = write_fixture(out / "scene", n_train=12, n_test=20)
    rng = np.random.default_rng(0)
    # mostly small errors, a few gross ones, a few frames without an answer
    preds = {}
    for i, (frame_id, gt) in enumerate(test):
        if i % 7 == 3:
            preds[frame_id] = None
        elif i % 5 == 4:
            preds[frame_id] = perturb(gt, rng, 0.8, 40.0)
        else:
            preds[frame_id] = perturb(gt, rng, 0.02, 1.5)
    write_predictions(out / "noisy.txt", preds)

    scene = load_scene(manifest)
    predictions = load_predictions(out / "noisy.txt", [f for f, _ in test])
    results = evaluate_scene(scene, predictions, PipelineOptions(with_change=True, with_difficulty=True))
    report = build_report(results)
    write_report(report, out / "report", method="noisy")

    for key, value in report.headline().items():
        print(f"{key:>22}: {value}")
    print(f"report written to {out / 'report'}")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(sys.argv[1])
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(tmp)
