"""CSV tables and small self-contained SVG charts."""

from __future__ import annotations

import csv
from html import escape
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .gates import CORNERS, GATES, GateCensus, Hierarchy
from .search import SearchResult


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def census_csv(census: GateCensus, path) -> None:
    rows = []
    for g in GATES:
        rows.append([g.id, g.name, *("T" if o else "F" for o in g.truth_row), census.counts[g]])
    write_csv(path, ["id", "gate", "FF", "FT", "TF", "TT", "count"], rows)


def matrix_csv(matrix: np.ndarray, path) -> None:
    n = matrix.shape[1]
    rows = [[a, *matrix[a].tolist()] for a in range(matrix.shape[0])]
    write_csv(path, ["input_a"] + [f"input_b={b}" for b in range(n)], rows)


def histogram_csv(hist: Sequence[Tuple[float, int]], path) -> None:
    write_csv(path, ["bin_start_s", "count"], [[_fmt(t), c] for t, c in hist])


def hierarchy_text(h: Hierarchy) -> str:
    lines = [str(h)]
    for g in h.order:
        lines.append(f"{g.short_name}\t{h.counts[g]}")
    if h.has_ties:
        lines.append("ties: " + "; ".join("{" + ", ".join(g.short_name for g in t) + "}"
                                          for t in h.ties))
    return "\n".join(lines) + "\n"


def search_csv(results: Sequence[SearchResult], path) -> None:
    header = ["gate", "input_a", "input_b", "output", "theta_discrete", "theta_continuous",
              "error_continuous", "error_discrete", "out_FF", "out_FT", "out_TF", "out_TT", "ok"]
    rows = []
    for r in results:
        a = r.allocation
        rows.append([r.gate.short_name, a.input_a, a.input_b, a.output,
                     " ".join(str(int(v)) for v in r.theta_discrete),
                     " ".join(_fmt(float(v)) for v in r.theta_continuous),
                     _fmt(r.error_continuous), _fmt(r.error_discrete),
                     *(_fmt(float(v)) for v in r.truth_outputs), int(r.ok)])
    write_csv(path, header, rows)


def _svg(width, height, body: List[str], title: str) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        *body, "</svg>", ""])


def bar_chart_svg(labels: Sequence[str], values: Sequence[float], title: str,
                  xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 320,
                  overlay: Sequence[float] = ()) -> str:
    """Vertical bars; ``overlay`` values (same length) are drawn as target ticks."""
    left, right, top, bottom = 50, 10, 28, 42
    pw, ph = width - left - right, height - top - bottom
    vals = np.asarray(values, dtype=float)
    ymax = max([1e-12, *vals.tolist(), *[float(v) for v in overlay]])
    n = max(len(vals), 1)
    bw = pw / n
    body = [f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
            f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for k in range(5):
        v = ymax * k / 4
        y = top + ph - ph * k / 4
        body.append(f'<text x="{left - 4}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    step = max(1, n // 12)
    for i, v in enumerate(vals):
        h = ph * v / ymax
        x = left + i * bw
        body.append(f'<rect x="{x + 1:.1f}" y="{top + ph - h:.1f}" width="{max(bw - 2, 1):.1f}" '
                    f'height="{h:.1f}" fill="#4a7ab5"/>')
        if i % step == 0:
            body.append(f'<text x="{x + bw / 2:.1f}" y="{top + ph + 13}" text-anchor="middle">'
                        f'{escape(str(labels[i]))}</text>')
    for i, v in enumerate(overlay):
        y = top + ph - ph * float(v) / ymax
        x = left + i * bw
        body.append(f'<line x1="{x + 1:.1f}" y1="{y:.1f}" x2="{x + bw - 1:.1f}" y2="{y:.1f}" '
                    f'stroke="#c0392b" stroke-width="2"/>')
    if xlabel:
        body.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">'
                    f'{escape(xlabel)}</text>')
    if ylabel:
        body.append(f'<text x="12" y="{top + ph / 2:.1f}" text-anchor="middle" '
                    f'transform="rotate(-90 12 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    return _svg(width, height, body, title)


def histogram_svg(hist: Sequence[Tuple[float, int]], path, title: str) -> None:
    labels = [f"{t:g}" for t, _ in hist]
    svg = bar_chart_svg(labels, [c for _, c in hist], title, "first seen (s)", "groups")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


def corner_svg(result: SearchResult, targets: Sequence[float], path) -> None:
    labels = ["".join("T" if v else "F" for v in c) for c in CORNERS]
    a = result.allocation
    title = (f"{result.gate.short_name} on pins {a.input_a},{a.input_b} -> {a.output}, "
             f"E = {result.error_discrete:.4g}")
    svg = bar_chart_svg(labels, result.truth_outputs, title, "inputs", "surrogate output",
                        width=360, height=260, overlay=targets)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
