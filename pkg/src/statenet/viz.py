"""Event-log analysis: exponential smoothing, SVG curve plots, confusion matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import DatasetError, ParameterError
from .trainer import TrainEvent

METRICS = ("loss", "accuracy")
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass
class Series:
    run: str
    metric: str
    split: str
    points: list[tuple[int, float]]

    @property
    def epochs(self):
        return [e for e, _ in self.points]

    @property
    def values(self):
        return [v for _, v in self.points]


def read_events(path) -> list[TrainEvent]:
    """Parse a JSON Lines event log, skipping header records."""
    events = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DatasetError(f"cannot read event log {path}: {e}") from None
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}:{n}: invalid JSON ({e})") from None
        if "header" in rec:
            continue
        events.append(TrainEvent(**rec))
    return events


def read_header(path) -> dict | None:
    with open(path) as f:
        first = f.readline()
    try:
        rec = json.loads(first)
    except json.JSONDecodeError:
        return None
    return rec.get("header") if isinstance(rec, dict) else None


def series_from_events(events, run: str, metric: str, split: str) -> Series:
    if metric not in METRICS:
        raise ParameterError(f"metric must be one of {METRICS}, got {metric!r}")
    pts = [(e.epoch, float(getattr(e, metric))) for e in events if e.split == split]
    return Series(run, metric, split, pts)


def ema(values, alpha: float) -> list[float]:
    """``y'[0] = y[0]``; ``y'[t] = alpha * y'[t-1] + (1 - alpha) * y[t]``."""
    if not 0.0 <= alpha < 1.0:
        raise ParameterError(f"smoothing weight must lie in [0, 1), got {alpha}")
    values = [float(v) for v in values]
    if not values:
        raise ParameterError("cannot smooth an empty series")
    out = [values[0]]
    for y in values[1:]:
        prev = out[-1]
        s = alpha * prev + (1.0 - alpha) * y
        # keep ulp-level rounding inside the convex hull of its two inputs
        out.append(min(max(s, min(prev, y)), max(prev, y)))
    return out


def smooth(s: Series, alpha: float = 0.5) -> Series:
    return Series(s.run, s.metric, s.split, list(zip(s.epochs, ema(s.values, alpha))))


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    ticks = np.arange(start, hi + step * 1e-9, step)
    return [float(t) for t in ticks]


def plot_svg(series_list, path=None, alpha: float = 0.5, title: str | None = None,
             width: int = 720, height: int = 420) -> str:
    """Render curves to SVG: each run drawn raw (faint) plus smoothed (solid).

    Returns the SVG text and writes it to ``path`` when given.
    """
    if not series_list:
        raise ParameterError("nothing to plot: no series given")
    metrics = {s.metric for s in series_list}
    if len(metrics) != 1:
        raise ParameterError(f"cannot mix metrics in one plot: {sorted(metrics)}")
    metric = metrics.pop()
    if any(not s.points for s in series_list):
        raise ParameterError("cannot plot an empty series")

    left, right, top, bottom = 64, 170, 40, 48
    pw, ph = width - left - right, height - top - bottom
    xs = [e for s in series_list for e in s.epochs]
    ys = [v for s in series_list for v in s.values]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = min(ys), max(ys)
    if metric == "accuracy":
        y0, y1 = min(y0, 0.0), max(y1, 1.0)
    if y1 == y0:
        y1 = y0 + 1.0
    yticks = _nice_ticks(y0, y1)
    y0, y1 = min(y0, yticks[0]), max(y1, yticks[-1])

    def px(e):
        return left + (e - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    def poly(points, color, opacity, w):
        pts = " ".join(f"{px(e):.2f},{py(v):.2f}" for e, v in points)
        return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="{w}" stroke-opacity="{opacity}"/>')

    title = title or f"{metric} (smoothing {alpha})"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{escape(title)}</text>',
        '<g class="axes" stroke="#444" font-family="sans-serif" font-size="11">',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/>',
    ]
    for t in yticks:
        y = py(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 7}" y="{y + 4:.2f}" text-anchor="end" stroke="none">{t:g}</text>')
    for t in _nice_ticks(x0, x1):
        if t < x0 or t > x1:
            continue
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 17}" text-anchor="middle" stroke="none">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" stroke="none">epoch</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" stroke="none" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(metric)}</text>')
    out.append("</g>")
    legend = ['<g class="legend" font-family="sans-serif" font-size="11">']
    for i, s in enumerate(series_list):
        color = PALETTE[i % len(PALETTE)]
        label = f"{s.run} ({s.split})"
        out.append(f'<g class="series" data-run="{escape(label, {chr(34): "&quot;"})}">')
        out.append(poly(s.points, color, 0.3, 1))
        out.append(poly(smooth(s, alpha).points, color, 1.0, 2))
        out.append("</g>")
        ly = top + 10 + 18 * i
        legend.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                      f'stroke="{color}" stroke-width="2"/>')
        legend.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{escape(label)}</text>')
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if path is not None:
        try:
            Path(path).write_text(svg)
        except OSError as e:
            raise ParameterError(f"cannot write {path}: {e}") from None
    return svg


def confusion(model, batch_iter, class_names, start: int = 0):
    """Return ``(counts, per_class_accuracy, overall_accuracy)``.

    ``counts[i, j]`` is the number of class-``i`` samples predicted as ``j``.
    """
    k = len(class_names)
    counts = np.zeros((k, k), dtype=np.int64)
    for batch in batch_iter:
        pred = model.forward(batch.x, training=False, start=start).argmax(axis=1)
        np.add.at(counts, (batch.y, pred), 1)
    total = int(counts.sum())
    if total == 0:
        raise DatasetError("confusion matrix needs at least one sample")
    rows = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, np.diag(counts) / np.maximum(rows, 1), np.nan)
    return counts, per_class, int(np.trace(counts)) / total


def format_confusion(counts, class_names, per_class=None) -> str:
    names = [str(c) for c in class_names]
    width = max(6, max(len(n) for n in names) + 1)
    cell = max(5, len(str(int(counts.max()))) + 1)
    lines = [" " * width + "".join(f"{i:>{cell}d}" for i in range(len(names)))
             + ("   acc" if per_class is not None else "")]
    for i, n in enumerate(names):
        row = f"{n:<{width}}" + "".join(f"{int(v):>{cell}d}" for v in counts[i])
        if per_class is not None:
            row += f"  {per_class[i]:.3f}" if np.isfinite(per_class[i]) else "     -"
        lines.append(row)
    return "\n".join(lines)


def confusion_csv(counts, class_names) -> str:
    lines = ["true\\pred," + ",".join(class_names)]
    for name, row in zip(class_names, counts):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"
