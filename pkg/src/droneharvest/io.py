"""Trace CSV, sweep CSV, plan JSON and static SVG plots.

Floats are written with ``repr`` so files are byte-identical across runs and
round-trip exactly. Every writer goes through a temporary file and a rename.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .geometry import energy, path_length

TRACE_FIXED_COLUMNS = ("step", "s", "length", "energy", "lambda", "residual", "merge_flag")
SWEEP_COLUMNS = ("s", "length", "path_defect", "energy", "energy_root", "lambda", "merged")


def _fmt(x):
    return repr(float(x))


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_header(J):
    cols = list(TRACE_FIXED_COLUMNS)
    for j in range(1, J + 1):
        cols += [f"u_{j}", f"v_{j}"]
    return cols


def trace_to_csv(trace):
    """Serialize a trace; ``residual`` is the residual relative to ``|grad f|``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_header(trace.problem.J))
    for step, smp in enumerate(trace.samples):
        row = [str(step), _fmt(smp.state.s), _fmt(smp.length), _fmt(smp.energy),
               _fmt(smp.state.lam), _fmt(smp.relative_residual), str(int(smp.merged))]
        for u, v in smp.state.vertices:
            row += [_fmt(u), _fmt(v)]
        writer.writerow(row)
    return buf.getvalue()


def write_trace_csv(trace, path):
    atomic_write_text(path, trace_to_csv(trace))


def read_trace_csv(path):
    """Read a trace CSV back into a dict of column arrays plus ``vertices``.

    ``vertices`` has shape ``(n_rows, J, 2)``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header[:len(TRACE_FIXED_COLUMNS)]) != TRACE_FIXED_COLUMNS:
        raise ValueError(f"unexpected trace header {header[:len(TRACE_FIXED_COLUMNS)]}")
    J = (len(header) - len(TRACE_FIXED_COLUMNS)) // 2
    if header != trace_header(J):
        raise ValueError("vertex columns do not follow u_1, v_1, ..., u_J, v_J")
    for k, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"row {k + 1} has {len(row)} fields, expected {len(header)}")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    out = {name: data[:, i] for i, name in enumerate(TRACE_FIXED_COLUMNS)}
    out["step"] = out["step"].astype(int)
    out["merge_flag"] = out["merge_flag"].astype(bool)
    out["vertices"] = data[:, len(TRACE_FIXED_COLUMNS):].reshape(len(body), J, 2)
    return out


def sweep_rows(trace):
    p = trace.problem.model.p
    for smp in trace.samples:
        yield (smp.state.s, smp.length, trace.tour_length - smp.length, smp.energy,
               smp.energy ** (1.0 / p), smp.state.lam, smp.merged)


def sweep_to_csv(trace):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for s, length, defect, e, root, lam, merged in sweep_rows(trace):
        writer.writerow([_fmt(s), _fmt(length), _fmt(defect), _fmt(e), _fmt(root),
                         _fmt(lam), str(int(merged))])
    return buf.getvalue()


def read_sweep_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != SWEEP_COLUMNS:
        raise ValueError(f"unexpected sweep header {rows[0]}")
    data = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(SWEEP_COLUMNS))
    out = {name: data[:, i] for i, name in enumerate(SWEEP_COLUMNS)}
    out["merged"] = out["merged"].astype(bool)
    return out


def plan_document(planner, target, lam, scenario=None):
    path = planner.path_at(target)
    doc = {
        "target_length": float(target),
        "tour_length": float(planner.tour_length_),
        "order": [int(i) for i in planner.order_],
        "ordered_heads": planner.problem_.heads.tolist(),
        "start": path.start.tolist(),
        "end": path.end.tolist(),
        "vertices": path.vertices.tolist(),
        "length": path_length(path),
        "energy": energy(path, planner.problem_.layout, planner.problem_.model),
        "lambda": float(lam),
        "p": float(planner.p),
        "terminated_reason": planner.termination_reason_,
    }
    if scenario is not None:
        doc["scenario"] = scenario.to_dict()
    return doc


def dumps_json(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- SVG

_W, _H, _PAD = 480, 360, 48


def _scaler(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda x: a + (x - lo) * (b - a) / span


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def path_svg(path, heads, title=""):
    """Heads as circles, the drone path as a polyline, start/end as squares."""
    pts = path.points()
    allp = np.vstack([pts, heads])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = max(hi - lo) or 1.0
    lo = lo - 0.05 * span
    hi = lo + 1.1 * span
    sx = _scaler(lo[0], hi[0], _PAD, _W - _PAD)
    sy = _scaler(lo[1], hi[1], _H - _PAD, _PAD)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           '<rect width="100%" height="100%" fill="white"/>']
    if title:
        out.append(f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="13">{escape(title)}</text>')
    tour = " ".join(f"{sx(x):.2f},{sy(y):.2f}"
                    for x, y in np.vstack([path.start, heads, path.end]))
    out.append(f'<polyline points="{tour}" fill="none" stroke="#bbbbbb" '
               'stroke-dasharray="4 3" stroke-width="1"/>')
    poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
    out.append(f'<polyline points="{poly}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for (hx, hy), (wx, wy) in zip(heads, path.vertices):
        out.append(f'<line x1="{sx(hx):.2f}" y1="{sy(hy):.2f}" x2="{sx(wx):.2f}" '
                   f'y2="{sy(wy):.2f}" stroke="#d62728" stroke-width="0.8"/>')
    for hx, hy in heads:
        out.append(f'<circle cx="{sx(hx):.2f}" cy="{sy(hy):.2f}" r="5" fill="#d62728"/>')
    for x, y in (path.start, path.end):
        out.append(f'<rect x="{sx(x) - 5:.2f}" y="{sy(y) - 5:.2f}" width="10" height="10" '
                   'fill="#2ca02c"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart_svg(xs, ys, xlabel, ylabel, title="", markers=()):
    """Minimal single-series line chart; ``markers`` are x positions to flag."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    sx = _scaler(x0, x1, _PAD + 10, _W - _PAD / 2)
    sy = _scaler(y0, y1, _H - _PAD, _PAD / 2 + 10)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           '<rect width="100%" height="100%" fill="white"/>']
    if title:
        out.append(f'<text x="{_W / 2:.1f}" y="16" text-anchor="middle" '
                   f'font-size="13">{escape(title)}</text>')
    bx, by = _PAD + 10, _H - _PAD
    out.append(f'<line x1="{bx}" y1="{by}" x2="{_W - _PAD / 2}" y2="{by}" stroke="black"/>')
    out.append(f'<line x1="{bx}" y1="{by}" x2="{bx}" y2="{_PAD / 2 + 10}" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{by + 14}" text-anchor="middle">{t:.3g}</text>')
    for t in _nice_ticks(y0, y1):
        out.append(f'<text x="{bx - 4}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{(bx + _W - _PAD / 2) / 2:.1f}" y="{_H - 10}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{_H / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_H / 2:.1f})">{escape(ylabel)}</text>')
    if xs.size:
        poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{poly}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    for mx in markers:
        out.append(f'<line x1="{sx(mx):.2f}" y1="{by}" x2="{sx(mx):.2f}" y2="{_PAD / 2 + 10}" '
                   'stroke="#d62728" stroke-dasharray="3 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
