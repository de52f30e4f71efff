"""Report files: summary.json, frames.csv, cumulative curve CSVs and an SVG plot.

Floats are written with ``repr`` so re-reading a report gives back the
exact same numbers.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .change import ChangeScores
from .difficulty import DifficultyScores
from .metrics import (
    NO_PREDICTION,
    DcreResult,
    EvalConfig,
    EvaluationReport,
    FrameResult,
    aggregate,
    build_report,
    cumulative_curve,
)

FRAME_COLUMNS = (
    "sequence_id", "frame_id", "has_prediction", "translation_error", "rotation_error",
    "dcre", "dcre_pixels", "dcre_status", "valid_pixels", "obj_flag",
    "sigma", "nu", "eta", "nearest_train",
    "rho_v", "zeta_v", "zeta_s", "zeta_g", "valid_overlap", "change_flags", "error",
)

CURVE_METRICS = {
    "dcre": ("DCRE", "fraction of frames with DCRE < x"),
    "translation": ("translation error [m]", "fraction of frames with error < x"),
    "rotation": ("rotation error [deg]", "fraction of frames with error < x"),
}


class ReportError(ValueError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def _int(s: str) -> Optional[int]:
    return None if s == "" else int(s)


def _bool(s: str) -> Optional[bool]:
    return None if s == "" else s == "1"


def _row(r: FrameResult) -> list[str]:
    d, c = r.difficulty, r.change
    return [
        r.sequence_id, r.frame_id, _fmt(r.has_prediction),
        _fmt(r.translation_error), _fmt(r.rotation_error),
        _fmt(r.dcre.mean_normalized) if r.has_prediction else "",
        _fmt(r.dcre.mean_pixels_unclamped) if r.has_prediction else "",
        r.dcre.status, _fmt(r.dcre.valid_pixel_count), _fmt(r.obj_flag),
        _fmt(d.vol if d else None), _fmt(d.context_volume if d else None),
        _fmt(d.pose_novelty if d else None), _fmt(d.nearest_train if d else None),
        _fmt(c.rho_v if c else None), _fmt(c.zeta_v if c else None), _fmt(c.zeta_s if c else None),
        _fmt(c.zeta_g if c else None), _fmt(c.valid_overlap if c else None),
        ";".join(sorted(c.flags)) if c else "", r.extra.get("error", ""),
    ]


def write_frames_csv(path: os.PathLike, results: Sequence[FrameResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_COLUMNS)
        for r in results:
            w.writerow(_row(r))


def read_frames_csv(path: os.PathLike) -> list[FrameResult]:
    """Per-frame results from ``frames.csv``, exactly as they were written."""
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"{path}: no such file")
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FRAME_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ReportError(f"{path}:1: missing columns {', '.join(sorted(missing))}")
        for line, row in enumerate(reader, start=2):
            try:
                out.append(_parse_row(row))
            except ValueError as e:
                raise ReportError(f"{path}:{line}: {e}") from e
    return out


def _parse_row(row: Mapping[str, str]) -> FrameResult:
    has = row["has_prediction"] == "1"
    dcre = NO_PREDICTION
    if has:
        dcre = DcreResult(float(row["dcre"]), float(row["dcre_pixels"]), int(row["valid_pixels"]),
                          row["dcre_status"])
    difficulty = None
    if any(row[k] for k in ("sigma", "nu", "eta")):
        difficulty = DifficultyScores(_float(row["sigma"]), _float(row["nu"]), _float(row["eta"]),
                                      _int(row["nearest_train"]))
    change = None
    if row["rho_v"]:
        flags = frozenset(f for f in row["change_flags"].split(";") if f)
        change = ChangeScores(float(row["rho_v"]), float(row["zeta_v"]), float(row["zeta_s"]),
                              float(row["zeta_g"]), float(row["valid_overlap"]), flags)
    extra = {"error": row["error"]} if row["error"] else {}
    return FrameResult(row["frame_id"], row["sequence_id"], has, _float(row["translation_error"]),
                       _float(row["rotation_error"]), dcre, _bool(row["obj_flag"]), difficulty, change, extra)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def summary_dict(report: EvaluationReport, method: str = "", preset: str = "") -> dict:
    return _json_safe({
        "method": method,
        "filter": preset,
        "aggregates": report.aggregates,
        "headline": report.headline(),
    })


def read_summary(path: os.PathLike) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_curve_csv(path: os.PathLike, curves: Mapping[str, Mapping[str, tuple]]) -> None:
    """Long-format curve samples: ``metric, threshold, <method>...``.

    ``curves`` maps metric name to ``{method: (grid, values)}``; all methods
    of one metric share its grid.
    """
    methods = None
    rows = []
    for metric, per_method in curves.items():
        if methods is None:
            methods = list(per_method)
        grid = None
        for name, (g, _) in per_method.items():
            if grid is not None and not np.array_equal(g, grid):
                raise ReportError(f"curve {metric}: methods use different grids")
            grid = g
        for i, x in enumerate(grid):
            rows.append([metric, _fmt(x)] + [_fmt(per_method[m][1][i]) for m in methods])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "threshold"] + list(methods or []))
        w.writerows(rows)


def read_curve_csv(path: os.PathLike) -> dict[str, dict[str, tuple[np.ndarray, np.ndarray]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        methods = header[2:]
        data: dict = {}
        for row in reader:
            data.setdefault(row[0], []).append([float(v) for v in row[1:]])
    out = {}
    for metric, rows in data.items():
        a = np.array(rows)
        out[metric] = {m: (a[:, 0], a[:, 1 + j]) for j, m in enumerate(methods)}
    return out


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
_PANEL_W, _PANEL_H, _MARGIN = 320, 240, 50


def curves_svg(curves: Mapping[str, Mapping[str, tuple]]) -> str:
    """One panel per metric, one polyline per method, legend in input order.

    Each polyline carries its exact samples in ``data-x`` / ``data-y`` so the
    plot can be checked against the CSV.
    """
    panels = list(curves.items())
    methods = list(panels[0][1]) if panels else []
    width = len(panels) * (_PANEL_W + _MARGIN) + _MARGIN
    height = _PANEL_H + 2 * _MARGIN + 20 * len(methods)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for p, (metric, per_method) in enumerate(panels):
        x0, y0 = _MARGIN + p * (_PANEL_W + _MARGIN), _MARGIN
        xlabel, ylabel = CURVE_METRICS.get(metric, (metric, "fraction"))
        grid = np.asarray(next(iter(per_method.values()))[0], dtype=float)
        lo, hi = float(grid[0]), float(grid[-1])
        span = hi - lo if hi > lo else 1.0
        parts.append(f'<g class="panel" data-metric={quoteattr(metric)}>')
        parts.append(f'<rect x="{x0}" y="{y0}" width="{_PANEL_W}" height="{_PANEL_H}" '
                     f'fill="none" stroke="black"/>')
        for t in np.linspace(0, 1, 6):
            gx = x0 + t * _PANEL_W
            gy = y0 + _PANEL_H - t * _PANEL_H
            parts.append(f'<text x="{gx:.1f}" y="{y0 + _PANEL_H + 14}" text-anchor="middle">'
                         f'{lo + t * span:g}</text>')
            parts.append(f'<text x="{x0 - 6}" y="{gy + 4:.1f}" text-anchor="end">{t:g}</text>')
        parts.append(f'<text x="{x0 + _PANEL_W / 2}" y="{y0 + _PANEL_H + 30}" '
                     f'text-anchor="middle">{escape(xlabel)}</text>')
        parts.append(f'<text x="{x0}" y="{y0 - 8}">{escape(ylabel)}</text>')
        for m, name in enumerate(methods):
            g, v = per_method[name]
            g = np.asarray(g, dtype=float)
            v = np.asarray(v, dtype=float)
            pts = " ".join(f"{x0 + (a - lo) / span * _PANEL_W:.3f},{y0 + (1 - b) * _PANEL_H:.3f}"
                           for a, b in zip(g, v))
            parts.append(
                f'<polyline class="curve" data-method={quoteattr(name)} '
                f'data-x="{" ".join(_fmt(a) for a in g)}" data-y="{" ".join(_fmt(b) for b in v)}" '
                f'fill="none" stroke="{_COLORS[m % len(_COLORS)]}" stroke-width="1.5" points="{pts}"/>')
        parts.append("</g>")
    ly = _PANEL_H + 2 * _MARGIN
    for m, name in enumerate(methods):
        y = ly + 20 * m
        parts.append(f'<g class="legend-entry" data-method={quoteattr(name)}>'
                     f'<line x1="{_MARGIN}" y1="{y}" x2="{_MARGIN + 24}" y2="{y}" '
                     f'stroke="{_COLORS[m % len(_COLORS)]}" stroke-width="2"/>'
                     f'<text x="{_MARGIN + 30}" y="{y + 4}">{escape(name)}</text></g>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_svg_curves(path: os.PathLike) -> dict[str, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """The sample data embedded in an SVG written by :func:`curves_svg`."""
    import xml.etree.ElementTree as ET

    ns = "{http://www.w3.org/2000/svg}"
    out: dict = {}
    for panel in ET.parse(path).getroot().iter(f"{ns}g"):
        if panel.get("class") != "panel":
            continue
        metric = panel.get("data-metric")
        for line in panel.iter(f"{ns}polyline"):
            xs = np.array([float(t) for t in line.get("data-x").split()])
            ys = np.array([float(t) for t in line.get("data-y").split()])
            out.setdefault(metric, {})[line.get("data-method")] = (xs, ys)
    return out


# ---------------------------------------------------------------------------
# directories
# ---------------------------------------------------------------------------

def _prepare(out_dir: os.PathLike) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"{out}: cannot create output directory: {e.strerror}") from e
    if not os.access(out, os.W_OK):
        raise ReportError(f"{out}: output directory is not writable")
    return out


def _split_curves(curves: Mapping[str, Mapping[str, tuple]]):
    dcre = {k: v for k, v in curves.items() if k == "dcre"}
    absolute = {k: v for k, v in curves.items() if k != "dcre"}
    return dcre, absolute


def write_report(report: EvaluationReport, out_dir: os.PathLike, method: str = "method",
                 svg: bool = True, preset: str = "") -> dict[str, Path]:
    """Write every report file into ``out_dir``; returns their paths by name."""
    out = _prepare(out_dir)
    paths = {name: out / name for name in ("summary.json", "frames.csv", "curve_dcre.csv", "curve_abs.csv")}
    with open(paths["summary.json"], "w") as fh:
        json.dump(summary_dict(report, method, preset), fh, indent=2)
        fh.write("\n")
    write_frames_csv(paths["frames.csv"], report.per_frame)
    curves = {metric: {method: gv} for metric, gv in report.curves.items()}
    dcre, absolute = _split_curves(curves)
    write_curve_csv(paths["curve_dcre.csv"], dcre)
    write_curve_csv(paths["curve_abs.csv"], absolute)
    if svg:
        paths["curves.svg"] = out / "curves.svg"
        paths["curves.svg"].write_text(curves_svg(curves))
    return paths


def frame_set_difference(sets: Mapping[str, Sequence[FrameResult]]) -> Optional[str]:
    """Description of how the methods' frame sets differ, or ``None``."""
    keys = {m: [(r.sequence_id, r.frame_id) for r in rs] for m, rs in sets.items()}
    names = list(keys)
    base = set(keys[names[0]])
    msgs = []
    for m in names[1:]:
        other = set(keys[m])
        if other != base:
            only_a = sorted(base - other)
            only_b = sorted(other - base)
            fmt = lambda xs: ", ".join(f"{s}/{f}" if s else f for s, f in xs[:10]) + (" ..." if len(xs) > 10 else "")
            if only_a:
                msgs.append(f"only in {names[0]}: {fmt(only_a)}")
            if only_b:
                msgs.append(f"only in {m}: {fmt(only_b)}")
    return "; ".join(msgs) or None


def report_curves(methods: Mapping[str, Sequence[FrameResult]], out_dir: os.PathLike,
                  config: EvalConfig = EvalConfig(), svg: bool = True) -> dict[str, Path]:
    """Shared-axis cumulative curves for several methods.

    Methods must cover the same frames; legend and column order follow the
    input order.
    """
    if not methods:
        raise ReportError("no methods given")
    diff = frame_set_difference(methods)
    if diff:
        raise ReportError(f"methods cover different frames: {diff}")
    out = _prepare(out_dir)
    curves: dict = {}
    for metric, grid in (("dcre", config.dcre_grid), ("translation", config.translation_grid),
                         ("rotation", config.rotation_grid)):
        g = np.asarray(grid, dtype=float)
        curves[metric] = {m: (g, cumulative_curve(list(rs), metric, g)) for m, rs in methods.items()}
    dcre, absolute = _split_curves(curves)
    paths = {"curve_dcre.csv": out / "curve_dcre.csv", "curve_abs.csv": out / "curve_abs.csv"}
    write_curve_csv(paths["curve_dcre.csv"], dcre)
    write_curve_csv(paths["curve_abs.csv"], absolute)
    if svg:
        paths["curves.svg"] = out / "curves.svg"
        paths["curves.svg"].write_text(curves_svg(curves))
    return paths


def reaggregate(frames_csv: os.PathLike, config: EvalConfig = EvalConfig()) -> dict:
    """Aggregates recomputed from a saved ``frames.csv``."""
    return _json_safe(aggregate(read_frames_csv(frames_csv), config))


__all__ = [
    "FRAME_COLUMNS", "ReportError", "build_report", "curves_svg", "frame_set_difference", "read_curve_csv",
    "read_frames_csv", "read_summary", "read_svg_curves", "reaggregate", "report_curves", "summary_dict",
    "write_curve_csv", "write_frames_csv", "write_report",
]
