"""Command-line front end.

Exit codes: 0 success, 1 computation error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cache import DepthCache
from .change import scene_change_stats
from .dataset import DatasetError, MissingFileError, Scene, load_predictions, load_scene, write_predictions
from .difficulty import FilterPreset, apply_filter, frame_scores, get_preset
from .fusion import DEFAULT_ROT_THRESH, DEFAULT_TRANS_THRESH, DEFAULT_WINDOWS, fuse_sequence
from .metrics import DEFAULT_ABS_THRESHOLDS, DEFAULT_DCRE_THRESHOLDS, EvalConfig, build_report
from .pipeline import FrameError, PipelineOptions, evaluate_records, evaluate_scene
from .render import render
from .report import (
    ReportError,
    read_frames_csv,
    report_curves,
    summary_dict,
    write_report,
)

log = logging.getLogger("relocbench")

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2
_CHANGE_KEYS = {"rho_v", "zeta_s", "zeta_g"}
_DIFFICULTY_KEYS = {"sigma", "nu", "eta"}


class UsageError(Exception):
    """Bad flags, missing inputs or an invalid configuration."""


@dataclass
class RunConfig:
    manifests: list
    predictions: list = field(default_factory=list)  # of (method, path)
    eval: EvalConfig = field(default_factory=EvalConfig)
    preset: str = "no filter"
    windows: tuple = DEFAULT_WINDOWS
    out_dir: Optional[Path] = None
    workers: int = 1
    supersample: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if self.supersample < 1:
            raise UsageError("--supersample must be >= 1")
        if any(w < 1 for w in self.windows):
            raise UsageError("window sizes must be >= 1")


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------

def _grid(text: str) -> tuple:
    try:
        lo, hi, n = text.split(":")
        return tuple(np.linspace(float(lo), float(hi), int(n)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be LO:HI:N, got {text!r}") from None


def _pair(text: str) -> tuple:
    try:
        t, r = text.split(",")
        return float(t), float(r)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected METERS,DEGREES, got {text!r}") from None


def _named_path(text: str, default_name=lambda p: p.stem) -> tuple[str, Path]:
    if "=" in text:
        name, path = text.split("=", 1)
        return name, Path(path)
    return default_name(Path(text)), Path(text)


def _eval_config(args) -> EvalConfig:
    defaults = EvalConfig()
    try:
        return EvalConfig(
            abs_thresholds=tuple(args.abs_thresh or DEFAULT_ABS_THRESHOLDS),
            dcre_thresholds=tuple(args.dcre_thresh or DEFAULT_DCRE_THRESHOLDS),
            obj_threshold=args.obj_thresh,
            dcre_grid=args.dcre_grid or defaults.dcre_grid,
            translation_grid=args.trans_grid or defaults.translation_grid,
            rotation_grid=args.rot_grid or defaults.rotation_grid,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def _preset(name: str) -> FilterPreset:
    try:
        return get_preset(name)
    except KeyError as e:
        raise UsageError(e.args[0]) from None


def _load_scenes(paths: Sequence[Path]) -> list[Scene]:
    scenes = [load_scene(p) for p in paths]
    seen: dict = {}
    for s in scenes:
        for e in s.manifest.sequences:
            for fid, _ in s.trajectories[e.sequence_id]:
                if fid in seen and seen[fid] != s.manifest.scene_id:
                    raise UsageError(f"frame id {fid} appears in scenes {seen[fid]} and {s.manifest.scene_id}")
                seen[fid] = s.manifest.scene_id
    return scenes


def _options(args, preset: Optional[FilterPreset] = None, change=False, difficulty=False) -> PipelineOptions:
    keys = set(preset.bounds) if preset else set()
    return PipelineOptions(
        supersample=args.supersample,
        with_change=change or bool(keys & _CHANGE_KEYS),
        with_difficulty=difficulty or bool(keys & _DIFFICULTY_KEYS),
        obj_eps=getattr(args, "obj_thresh", 0.15),
        workers=args.workers,
        keep_going=args.keep_going,
    )


def _cache(args) -> DepthCache:
    return DepthCache() if getattr(args, "no_cache", False) else DepthCache.from_env()


def _print_table(summaries: dict) -> None:
    rows = []
    for method, s in summaries.items():
        t = s["headline"]
        med = t["median (dt, dtheta)"]
        cells = [method]
        for key in ("E_a(0.05m,5deg)", None, "E_f(0.05)", "E_f(0.15)", "N/A", "Ebar_a(0.5m,25deg)",
                    "Ebar_f(0.5)", "Obj."):
            if key is None:
                cells.append("-" if med[0] is None else f"{med[0]:.3f}m, {med[1]:.2f}deg")
            else:
                cells.append("-" if t[key] is None else f"{t[key]:.3f}")
        rows.append(cells)
    header = ["method", "E_a(5cm,5deg)", "median", "E_f(0.05)", "E_f(0.15)", "N/A", "Ebar_a(50cm,25deg)",
              "Ebar_f(0.5)", "Obj."]
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


def _emit(args, summaries: dict) -> None:
    if args.json:
        json.dump(summaries, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        _print_table(summaries)


def _filtered(results, preset: FilterPreset):
    kept, _ = apply_filter(results, preset, key=frame_scores)
    if not kept:
        raise UsageError(f"filter '{preset.name}' keeps no frames")
    return kept


def _write_methods(out: Path, per_method: dict, preset: FilterPreset, config: EvalConfig, svg: bool) -> dict:
    """Per-method report directories plus shared curves when there are several methods."""
    summaries, kept_by_method = {}, {}
    for method, results in per_method.items():
        kept = _filtered(results, preset)
        report = build_report(kept, config)
        # frames.csv keeps every frame so `report` can re-filter later
        report.per_frame = list(results)
        write_report(report, out / method, method, svg=svg, preset=preset.name)
        summaries[method] = summary_dict(report, method, preset.name)
        kept_by_method[method] = kept
    if len(per_method) > 1:
        report_curves(kept_by_method, out, config, svg=svg)
    return summaries


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    if not args.predictions:
        raise UsageError("evaluate needs at least one --predictions file")
    cfg = RunConfig(args.manifest, [_named_path(p) for p in args.predictions], _eval_config(args),
                    args.filter, out_dir=Path(args.out), workers=args.workers, supersample=args.supersample)
    preset = _preset(cfg.preset)
    for _, path in cfg.predictions:
        if not path.is_file():
            raise UsageError(f"{path}: predictions file not found")
    scenes = _load_scenes(cfg.manifests)
    frame_ids = [f for s in scenes for f in s.frame_ids(args.split)]
    opts = _options(args, preset, change=args.change, difficulty=args.difficulty)
    cache = _cache(args)
    per_method = {}
    for method, path in cfg.predictions:
        preds = load_predictions(path, frame_ids, method)
        results = []
        for scene in scenes:
            results.extend(evaluate_scene(scene, preds, opts, args.split, cache))
        per_method[method] = results
    summaries = _write_methods(cfg.out_dir, per_method, preset, cfg.eval, not args.no_svg)
    _emit(args, summaries)
    return EXIT_COMPUTE if _had_errors(per_method) else EXIT_OK


def _had_errors(per_method: dict) -> bool:
    return any("error" in r.extra for rs in per_method.values() for r in rs)


def cmd_report(args) -> int:
    config = _eval_config(args)
    preset = _preset(args.filter)
    per_method = {}
    for text in args.frames:
        name, path = _named_path(text, default_name=lambda p: p.parent.name or p.stem)
        if name in per_method:
            raise UsageError(f"method name {name!r} given twice; use NAME=PATH")
        if not path.is_file():
            raise UsageError(f"{path}: frames file not found")
        per_method[name] = read_frames_csv(path)
    if args.out:
        summaries = _write_methods(Path(args.out), per_method, preset, config, not args.no_svg)
    else:
        summaries = {}
        for method, results in per_method.items():
            summaries[method] = summary_dict(build_report(_filtered(results, preset), config), method, preset.name)
    _emit(args, summaries)
    return EXIT_OK


def _save_png(path: Path, array: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(array).save(path)


def depth_to_mm16(depth: np.ndarray) -> np.ndarray:
    """Depth in meters to 16-bit millimeters; 0 marks invalid, far values saturate."""
    mm = np.where(depth > 0, np.rint(depth.astype(np.float64) * 1000.0), 0.0)
    return np.clip(mm, 0, 65535).astype(np.uint16)


def cmd_render(args) -> int:
    (scene,) = _load_scenes([args.manifest])
    seq = args.sequence or scene.manifest.reference.sequence_id
    try:
        entry = scene.entry(seq)
    except KeyError:
        raise UsageError(f"unknown sequence {seq!r}") from None
    k = entry.intrinsics or next((e.intrinsics for e in scene.manifest.rescans if e.intrinsics), None)
    if k is None:
        raise UsageError("no intrinsics available for rendering")
    traj = dict(scene.trajectories[seq])
    wanted = args.frame or list(traj)
    missing = [f for f in wanted if f not in traj]
    if missing:
        raise UsageError(f"unknown frame(s) in sequence {seq}: {', '.join(missing)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = scene.reference_model if args.reference else scene.models[seq]
    for fid in wanted:
        views = render(model, traj[fid], k)
        _save_png(out / f"{fid}_color.png", views.color)
        _save_png(out / f"{fid}_depth.png", depth_to_mm16(views.depth))
        _save_png(out / f"{fid}_labels.png", np.clip(views.labels, 0, 65535).astype(np.uint16))
    print(f"rendered {len(wanted)} frame(s) to {out}")
    return EXIT_OK


def _csv_out(path: Optional[str]):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    return sys.stdout


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_change(args) -> int:
    scenes = _load_scenes(args.manifest)
    opts = _options(args, change=True)
    rows, scores = [], []
    for scene in scenes:
        results = evaluate_records(scene.frames(args.split), scene.models.__getitem__, opts,
                                   reference_model=scene.reference_model, cache=_cache(args),
                                   context=f"scene {scene.manifest.scene_id}")
        for r in results:
            c = r.change
            if c is None:
                rows.append([r.frame_id, "", "", "", "", "", "error"])
                continue
            scores.append(c)
            rows.append([r.frame_id, _fmt(c.rho_v), _fmt(c.zeta_v), _fmt(c.zeta_s), _fmt(c.zeta_g),
                         _fmt(c.valid_overlap), ";".join(sorted(c.flags))])
    fh = _csv_out(args.out)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["frame_id", "rho_v", "zeta_v", "zeta_s", "zeta_g", "valid_overlap", "flags"])
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
    if args.json and scores:
        stats = {k: (None if isinstance(v, float) and v != v else v) for k, v in scene_change_stats(scores).items()}
        json.dump(stats, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_COMPUTE if len(scores) < len(rows) else EXIT_OK


def cmd_difficulty(args) -> int:
    scenes = _load_scenes(args.manifest)
    preset = _preset(args.preset) if args.preset else None
    opts = _options(args, preset, difficulty=True)
    header = ["frame_id", "sigma", "nu", "eta", "nearest_train_frame"]
    if preset:
        header.append("passes")
    rows, n_pass, n_err = [], 0, 0
    for scene in scenes:
        train_ids = scene.train_frame_ids
        results = evaluate_records(scene.frames(args.split), scene.models.__getitem__, opts,
                                   reference_model=scene.reference_model, train_poses=scene.train_poses,
                                   cache=_cache(args), context=f"scene {scene.manifest.scene_id}")
        for r in results:
            d = r.difficulty
            if d is None:
                n_err += 1
                rows.append([r.frame_id, "", "", "", ""] + (["error"] if preset else []))
                continue
            nearest = train_ids[d.nearest_train] if d.nearest_train is not None else ""
            row = [r.frame_id, _fmt(d.vol), _fmt(d.context_volume), _fmt(d.pose_novelty), nearest]
            if preset:
                ok = preset.passes(frame_scores(r), r.frame_id)
                n_pass += ok
                row.append("pass" if ok else "fail")
            rows.append(row)
    fh = _csv_out(args.out)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
    if preset:
        msg = {"preset": preset.name, "frames": len(rows), "passing": n_pass}
        print(json.dumps(msg) if args.json else f"{preset.name}: {n_pass}/{len(rows)} frames pass",
              file=sys.stderr if not args.out else sys.stdout)
    return EXIT_COMPUTE if n_err else EXIT_OK


def cmd_fuse(args) -> int:
    windows = tuple(args.window or DEFAULT_WINDOWS)
    if any(w < 1 for w in windows):
        raise UsageError("--window must be >= 1")
    if not (args.trans_thresh > 0 and args.rot_thresh > 0):
        raise UsageError("clustering thresholds must be positive")
    method, path = _named_path(args.predictions)
    if not path.is_file():
        raise UsageError(f"{path}: predictions file not found")
    config = _eval_config(args)
    preset = _preset(args.filter)
    scenes = _load_scenes(args.manifest)
    frame_ids = [f for s in scenes for f in s.frame_ids(args.split)]
    preds = load_predictions(path, frame_ids, method)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = _options(args, preset)
    cache = _cache(args)
    per_method = {}
    for w in windows:
        fused: dict = {}
        results = []
        for scene in scenes:
            records = scene.frames(args.split, preds)
            fused_records = []
            for e in scene.manifest.rescans:
                seq = [r for r in records if r.sequence_id == e.sequence_id]
                if seq:
                    fused_records.extend(fuse_sequence(seq, w, args.trans_thresh, args.rot_thresh))
            fused.update({r.frame_id: r.prediction for r in fused_records})
            if not args.no_evaluate:
                results.extend(evaluate_records(
                    fused_records, scene.models.__getitem__, opts, reference_model=scene.reference_model,
                    train_poses=scene.train_poses, object_transforms=scene.object_transforms, cache=cache,
                    context=f"scene {scene.manifest.scene_id}"))
        write_predictions(out / f"{method}_fused_w{w}.txt", fused)
        per_method[f"{method}_w{w}"] = results
    if args.no_evaluate:
        print(f"wrote fused predictions for windows {', '.join(map(str, windows))} to {out}")
        return EXIT_OK
    summaries = _write_methods(out, per_method, preset, config, not args.no_svg)
    _emit(args, summaries)
    return EXIT_COMPUTE if _had_errors(per_method) else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, workers=True) -> None:
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p.add_argument("--split", nargs="+", default=["test"], help="sequence splits to use (default: test)")
    if workers:
        p.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("--supersample", type=int, default=1, help="render DCRE depth at this factor")
        p.add_argument("--keep-going", action="store_true", help="record frame errors and continue")
        p.add_argument("--no-cache", action="store_true", help="ignore RELOCBENCH_CACHE_DIR")


def _thresholds(p: argparse.ArgumentParser) -> None:
    p.add_argument("--abs-thresh", type=_pair, action="append", metavar="M,DEG",
                   help="absolute pose threshold pair; repeatable (default 0.05,5 and 0.5,25)")
    p.add_argument("--dcre-thresh", type=float, nargs="+", help="DCRE thresholds (default 0.05 0.15 0.5)")
    p.add_argument("--obj-thresh", type=float, default=0.15, help="DCRE threshold of the object check")
    p.add_argument("--dcre-grid", type=_grid, metavar="LO:HI:N", help="DCRE curve grid (default 0:1:200)")
    p.add_argument("--trans-grid", type=_grid, metavar="LO:HI:N", help="translation grid in m (default 0:1:200)")
    p.add_argument("--rot-grid", type=_grid, metavar="LO:HI:N", help="rotation grid in deg (default 0:60:200)")
    p.add_argument("--filter", default="no filter", help="filter preset applied before aggregation")
    p.add_argument("--no-svg", action="store_true", help="skip curves.svg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relocbench", description="Camera re-localization evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score prediction files against a scene")
    p.add_argument("manifest", nargs="+", type=Path, help="scene manifest.json file(s)")
    p.add_argument("-p", "--predictions", action="append", metavar="[NAME=]PATH",
                   help="prediction file; repeatable, one per method")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--change", action="store_true", help="also compute change measures")
    p.add_argument("--difficulty", action="store_true", help="also compute difficulty scores")
    _common(p)
    _thresholds(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-aggregate saved frames.csv files")
    p.add_argument("frames", nargs="+", metavar="[NAME=]FRAMES_CSV")
    p.add_argument("-o", "--out", help="output directory for summaries and curves")
    _common(p, workers=False)
    _thresholds(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("render", help="write color, depth and label PNGs")
    p.add_argument("manifest", type=Path)
    p.add_argument("--sequence", help="sequence id (default: reference)")
    p.add_argument("--frame", nargs="+", help="frame ids (default: all in the sequence)")
    p.add_argument("--reference", action="store_true", help="render the reference model instead")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("change", help="per-frame change measures against the reference")
    p.add_argument("manifest", nargs="+", type=Path)
    p.add_argument("-o", "--out", help="CSV path (default: stdout)")
    _common(p)
    p.set_defaults(func=cmd_change)

    p = sub.add_parser("difficulty", help="per-frame difficulty scores")
    p.add_argument("manifest", nargs="+", type=Path)
    p.add_argument("-o", "--out", help="CSV path (default: stdout)")
    p.add_argument("--preset", help="report pass/fail under this filter preset")
    _common(p)
    p.set_defaults(func=cmd_difficulty)

    p = sub.add_parser("fuse", help="sequence fusion of per-frame predictions")
    p.add_argument("manifest", nargs="+", type=Path)
    p.add_argument("-p", "--predictions", required=True, metavar="[NAME=]PATH")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--window", type=int, nargs="+", help="window sizes (default 10 30 100)")
    p.add_argument("--trans-thresh", type=float, default=DEFAULT_TRANS_THRESH, help="meters (default 0.10)")
    p.add_argument("--rot-thresh", type=float, default=DEFAULT_ROT_THRESH, help="degrees (default 10)")
    p.add_argument("--no-evaluate", action="store_true", help="only write fused prediction files")
    _common(p)
    _thresholds(p)
    p.set_defaults(func=cmd_fuse)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, MissingFileError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as e:
        # malformed manifest is configuration; malformed data is a computation error
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE if str(e.path).endswith(".json") else EXIT_COMPUTE
    except (FrameError, ReportError, KeyError, ValueError, ArithmeticError) as e:
        print(f"error: {e.args[0] if isinstance(e, KeyError) and e.args else e}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
