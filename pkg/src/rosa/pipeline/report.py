"""Human-readable run reports and dependency-free SVG figures.

Figures are plain XML built with the standard library so the package never
needs a plotting backend; every file is self-contained and deterministic."""
from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from ..metrics.ahi import SEVERITIES


class ReportError(RuntimeError):
    pass


def _fmt(x, digits: int = 3) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def render_text_report(report: dict) -> str:
    lines = [f"rosa run report (schema v{report['schema_version']})",
             "=" * 42, ""]
    cfg = report["config"]
    lines.append(f"cohort: {cfg['n_subjects']} subjects x {cfg['duration_s'] / 3600:.1f} h, "
                 f"{cfg['folds']}-fold cross-validation, seed {cfg['seed']}")
    lines.append(f"fusion weight omega = {cfg['omega']}")
    lines.append("")
    for block in report["folds"]:
        lines.append(f"fold {block['fold']}  (test: {', '.join(block['test_subjects'])})")
        lines.append(f"  AP radar {_fmt(block['ap']['overall'])}"
                     f"  fused {_fmt(block['ap_fused']['overall'])}")
        for gran, st in block["staging"].items():
            lines.append(f"  staging {gran}: acc {_fmt(st['accuracy'])}"
                         f"  kappa {_fmt(st['kappa'])}")
        for row in block["subjects"]:
            lines.append(f"    {row['subject']}: AHI {_fmt(row['est_ahi'], 1)}"
                         f" (true {_fmt(row['true_ahi'], 1)})"
                         f"  TST {_fmt(row['est_tst'], 2)} h"
                         f" (true {_fmt(row['true_tst'], 2)})"
                         f"  {row['est_severity']} / {row['true_severity']}")
        lines.append("")
    pooled = report["pooled"]
    lines.append("pooled")
    lines.append(f"  AP radar {_fmt(pooled['ap']['overall'])}"
                 f"  fused {_fmt(pooled['ap_fused']['overall'])}")
    for name in ("ap", "ap_fused"):
        per = pooled[name]["per_class"]
        cells = "  ".join(f"{k} {_fmt(v)}" for k, v in sorted(per.items()))
        lines.append(f"  {name} per-class: {cells}")
    for gran, st in pooled["staging"].items():
        lines.append(f"  staging {gran}: acc {_fmt(st['accuracy'])}"
                     f"  kappa {_fmt(st['kappa'])}")
    for label in ("ahi", "tst"):
        blk = pooled[label]
        ba = blk["bland_altman"] or {"mean": None, "loa_low": None,
                                     "loa_high": None}
        lines.append(f"  {label.upper()}: ICC {_fmt(blk['icc'])}"
                     f"  r {_fmt(blk['pearson_r'])}"
                     f"  bias {_fmt(ba['mean'])}"
                     f"  LoA [{_fmt(ba['loa_low'])}, {_fmt(ba['loa_high'])}]")
    for row in pooled["diagnostics"]:
        lines.append(f"  AHI >= {row['threshold']:g}: Se {_fmt(row['sensitivity'])}"
                     f"  Sp {_fmt(row['specificity'])}"
                     f"  acc {_fmt(row['accuracy'])}  kappa {_fmt(row['kappa'])}")
    lines.append("  severity confusion (rows true, cols estimated):")
    lines.append("    " + " ".join(f"{s:>8}" for s in [""] + SEVERITIES))
    for name, row in zip(SEVERITIES, pooled["severity_confusion"]):
        lines.append("    " + " ".join([f"{name:>8}"] + [f"{v:>8d}" for v in row]))
    lines.append("")
    return "\n".join(lines)


# -- SVG ---------------------------------------------------------------------

_W, _H, _PAD = 420, 420, 48


def _svg_root(width=_W, height=_H) -> ET.Element:
    return ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(width), height=str(height),
                      viewBox=f"0 0 {width} {height}")


def _axis_scale(values, lo=None, hi=None):
    values = [v for v in values if v is not None]
    vlo = min(values) if lo is None else lo
    vhi = max(values) if hi is None else hi
    if vhi - vlo < 1e-9:
        vlo, vhi = vlo - 1.0, vhi + 1.0
    span = vhi - vlo
    vlo -= 0.05 * span
    vhi += 0.05 * span
    return vlo, vhi


def _text(parent, x, y, s, size=11, anchor="start"):
    el = ET.SubElement(parent, "text",
                       {"x": f"{x:.1f}", "y": f"{y:.1f}",
                        "font-size": str(size), "text-anchor": anchor,
                        "font-family": "monospace"})
    el.text = s


def _line(parent, x1, y1, x2, y2, stroke="#444", width=1.0, dash=None):
    attrs = {"x1": f"{x1:.1f}", "y1": f"{y1:.1f}", "x2": f"{x2:.1f}",
             "y2": f"{y2:.1f}", "stroke": stroke, "stroke-width": f"{width:g}"}
    if dash:
        attrs["stroke-dasharray"] = dash
    ET.SubElement(parent, "line", attrs)


def _frame(root, title, xlabel, ylabel):
    _line(root, _PAD, _H - _PAD, _W - _PAD, _H - _PAD)
    _line(root, _PAD, _PAD, _PAD, _H - _PAD)
    _text(root, _W / 2, _PAD / 2, title, size=13, anchor="middle")
    _text(root, _W / 2, _H - 10, xlabel, anchor="middle")
    yl = ET.SubElement(root, "text",
                       {"x": "14", "y": f"{_H / 2}",
                        "font-size": "11", "text-anchor": "middle",
                        "font-family": "monospace",
                        "transform": f"rotate(-90 14 {_H / 2})"})
    yl.text = ylabel


def _to_px(v, vlo, vhi, axis):
    frac = (v - vlo) / (vhi - vlo)
    if axis == "x":
        return _PAD + frac * (_W - 2 * _PAD)
    return _H - _PAD - frac * (_H - 2 * _PAD)


def scatter_svg(true_vals, est_vals, title, unit,
                regression: bool = True) -> str:
    """True-vs-estimated scatter with the identity line and, when the data
    allow it, a least-squares regression line."""
    if len(true_vals) == 0:
        raise ReportError("nothing to plot")
    root = _svg_root()
    lo, hi = _axis_scale(list(true_vals) + list(est_vals))
    _frame(root, title, f"reference ({unit})", f"estimated ({unit})")
    for tick in np.linspace(lo, hi, 5):
        _text(root, _to_px(tick, lo, hi, "x"), _H - _PAD + 14, f"{tick:.1f}",
              size=9, anchor="middle")
        _text(root, _PAD - 4, _to_px(tick, lo, hi, "y") + 3, f"{tick:.1f}",
              size=9, anchor="end")
    _line(root, _to_px(lo, lo, hi, "x"), _to_px(lo, lo, hi, "y"),
          _to_px(hi, lo, hi, "x"), _to_px(hi, lo, hi, "y"),
          stroke="#999", dash="4 3")
    if regression and len(true_vals) >= 2 and np.std(true_vals) > 1e-12:
        slope, intercept = np.polyfit(true_vals, est_vals, 1)
        _line(root, _to_px(lo, lo, hi, "x"),
              _to_px(slope * lo + intercept, lo, hi, "y"),
              _to_px(hi, lo, hi, "x"),
              _to_px(slope * hi + intercept, lo, hi, "y"), stroke="#c33")
    for t, e in zip(true_vals, est_vals):
        ET.SubElement(root, "circle", cx=f"{_to_px(t, lo, hi, 'x'):.1f}",
                      cy=f"{_to_px(e, lo, hi, 'y'):.1f}", r="3.5",
                      fill="#2266aa", opacity="0.8")
    return ET.tostring(root, encoding="unicode")


def bland_altman_svg(true_vals, est_vals, title, unit) -> str:
    if len(true_vals) == 0:
        raise ReportError("nothing to plot")
    est = np.asarray(est_vals, dtype=float)
    true = np.asarray(true_vals, dtype=float)
    means = 0.5 * (est + true)
    diffs = est - true
    bias = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1)) if len(diffs) > 1 else 0.0
    root = _svg_root()
    xlo, xhi = _axis_scale(means)
    ylo, yhi = _axis_scale(list(diffs) + [bias - 1.96 * sd, bias + 1.96 * sd])
    _frame(root, title, f"mean of methods ({unit})", f"difference ({unit})")
    for level, label in ((bias, "bias"), (bias - 1.96 * sd, "-1.96 SD"),
                         (bias + 1.96 * sd, "+1.96 SD")):
        y = _to_px(level, ylo, yhi, "y")
        _line(root, _PAD, y, _W - _PAD, y, stroke="#c33",
              dash=None if label == "bias" else "4 3")
        _text(root, _W - _PAD + 2, y + 3, label, size=8)
    for m, d in zip(means, diffs):
        ET.SubElement(root, "circle", cx=f"{_to_px(m, xlo, xhi, 'x'):.1f}",
                      cy=f"{_to_px(d, ylo, yhi, 'y'):.1f}", r="3.5",
                      fill="#2266aa", opacity="0.8")
    return ET.tostring(root, encoding="unicode")


def severity_table_svg(confusion) -> str:
    conf = np.asarray(confusion, dtype=int)
    if conf.shape != (4, 4):
        raise ReportError("severity confusion must be 4x4")
    cell, off = 70, 90
    root = _svg_root(off + 4 * cell + 20, off + 4 * cell + 20)
    _text(root, off + 2 * cell, 20, "severity agreement", size=13, anchor="middle")
    _text(root, off + 2 * cell, 40, "(rows: reference, cols: estimated)",
          size=9, anchor="middle")
    peak = max(int(conf.max()), 1)
    for i, name in enumerate(SEVERITIES):
        _text(root, off - 6, off + i * cell + cell / 2 + 4, name, size=10,
              anchor="end")
        _text(root, off + i * cell + cell / 2, off - 8, name, size=10,
              anchor="middle")
        for j in range(4):
            shade = int(255 - 160 * conf[i, j] / peak)
            ET.SubElement(root, "rect", x=f"{off + j * cell}",
                          y=f"{off + i * cell}", width=str(cell),
                          height=str(cell), stroke="#666",
                          fill=f"rgb({shade},{shade},255)")
            _text(root, off + j * cell + cell / 2, off + i * cell + cell / 2 + 4,
                  str(conf[i, j]), size=12, anchor="middle")
    return ET.tostring(root, encoding="unicode")


def timeline_svg(subjects: list[dict], duration_s: float) -> str:
    """One row per subject: reference events above the line, detections below."""
    if not subjects:
        raise ReportError("nothing to plot")
    row_h, pad = 44, 70
    width = 860
    root = _svg_root(width, pad + row_h * len(subjects) + 20)
    _text(root, width / 2, 20, "event timelines (top: reference, bottom: detected)",
          size=13, anchor="middle")
    span = width - pad - 20

    def px(t):
        return pad + span * t / duration_s

    colors = {"CA": "#c0392b", "OA": "#2980b9", "MA": "#8e44ad", "HP": "#27ae60"}
    for k, sub in enumerate(subjects):
        base = pad + k * row_h
        _text(root, pad - 6, base + 18, sub["subject"], size=10, anchor="end")
        _line(root, pad, base + 16, width - 20, base + 16, stroke="#bbb")
        for ev in sub["true_events"]:
            ET.SubElement(root, "rect", x=f"{px(ev['t_start']):.1f}",
                          y=f"{base + 6}", height="9",
                          width=f"{max(px(ev['t_end']) - px(ev['t_start']), 1.0):.1f}",
                          fill=colors.get(ev["kind"], "#555"))
        for ev in sub["fused_segments"]:
            ET.SubElement(root, "rect", x=f"{px(ev['t_start']):.1f}",
                          y=f"{base + 18}", height="9",
                          width=f"{max(px(ev['t_end']) - px(ev['t_start']), 1.0):.1f}",
                          fill=colors.get(ev["kind"], "#555"), opacity="0.7")
    x = pad
    for kind, color in colors.items():
        ET.SubElement(root, "rect", x=f"{x}", y="30", width="10", height="10",
                      fill=color)
        _text(root, x + 14, 39, kind, size=10)
        x += 60
    return ET.tostring(root, encoding="unicode")


def write_report(report: dict, outdir: str | Path) -> list[Path]:
    """Emit text, JSON and SVG artifacts; returns the files written."""
    rows = [sub for f in report["folds"] for sub in f["subjects"]]
    if not rows:
        raise ReportError("empty cohort: nothing to report")
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ReportError(f"output directory not writable: {exc}") from exc

    written = []

    def emit(name: str, content: str):
        path = outdir / name
        path.write_text(content)
        written.append(path)

    emit("report.txt", render_text_report(report))
    emit("report.json", json.dumps(report, sort_keys=True, indent=1))
    true_ahi = [r["true_ahi"] for r in rows]
    est_ahi = [r["est_ahi"] for r in rows]
    emit("ahi_scatter.svg", scatter_svg(true_ahi, est_ahi,
                                        "apnea-hypopnea index", "events/h"))
    emit("ahi_bland_altman.svg", bland_altman_svg(true_ahi, est_ahi,
                                                  "AHI agreement", "events/h"))
    emit("tst_scatter.svg", scatter_svg([r["true_tst"] for r in rows],
                                        [r["est_tst"] for r in rows],
                                        "total sleep time", "h"))
    emit("severity_table.svg",
         severity_table_svg(report["pooled"]["severity_confusion"]))
    detail = [row for f in report["folds"] for row in f.get("detail", [])]
    if detail:
        emit("timelines.svg",
             timeline_svg(detail, report["config"]["duration_s"]))
    return written
