"""Minimal SVG writers for line plots, scatter plots and ball covers."""
from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 480, 360, 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


class _Frame:
    def __init__(self, xlim, ylim, logx=False, logy=False, equal=False):
        self.logx, self.logy = logx, logy
        x0, x1 = (np.log10(v) for v in xlim) if logx else xlim
        y0, y1 = (np.log10(v) for v in ylim) if logy else ylim
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        if equal:
            span = max(x1 - x0, y1 - y0)
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            x0, x1, y0, y1 = cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.sx = (W - 2 * PAD) / (x1 - x0)
        self.sy = (H - 2 * PAD) / (y1 - y0)

    def px(self, x):
        x = np.log10(x) if self.logx else x
        return PAD + (x - self.x0) * self.sx

    def py(self, y):
        y = np.log10(y) if self.logy else y
        return H - PAD - (y - self.y0) * self.sy


def _doc(body, title, xlabel, ylabel, frame, comment):
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
    ]
    if comment:
        head.append(f"<!-- {escape(comment)} -->")
    head += [
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
        'fill="none" stroke="black"/>',
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
    ]
    for v, lab in ((frame.x0, "lo"), (frame.x1, "hi")):
        val = 10 ** v if frame.logx else v
        x = PAD if lab == "lo" else W - PAD
        head.append(f'<text x="{x}" y="{H - PAD + 14}" text-anchor="middle" '
                    f'font-size="10">{val:.3g}</text>')
    for v, lab in ((frame.y0, "lo"), (frame.y1, "hi")):
        val = 10 ** v if frame.logy else v
        y = H - PAD if lab == "lo" else PAD
        head.append(f'<text x="{PAD - 4}" y="{y}" text-anchor="end" font-size="10">{val:.3g}</text>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _lims(arrs, log=False):
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrs])
    vals = vals[np.isfinite(vals)]
    if log:
        vals = vals[vals > 0]
    if vals.size == 0:
        return (1.0, 10.0) if log else (0.0, 1.0)
    return float(vals.min()), float(vals.max())


def line_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False, comment=""):
    """``series``: list of (label, x, y)."""
    frame = _Frame(_lims([s[1] for s in series], logx), _lims([s[2] for s in series], logy),
                   logx, logy)
    body = []
    for i, (label, x, y) in enumerate(series):
        col = COLORS[i % len(COLORS)]
        pts = " ".join(f"{frame.px(a):.2f},{frame.py(b):.2f}" for a, b in zip(x, y)
                       if np.isfinite(b) and (not logy or b > 0))
        body.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        body.append(f'<text x="{W - PAD - 4}" y="{PAD + 14 * (i + 1)}" text-anchor="end" '
                    f'font-size="10" fill="{col}">{escape(str(label))}</text>')
    _write(path, _doc(body, title, xlabel, ylabel, frame, comment))


def scatter_plot(path, points, title="", comment="", circles=None, lim=None):
    """2-D scatter of ``points`` (first two coordinates); optional circles (c, r, kind)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))[:, :2] if len(points) else np.zeros((0, 2))
    if lim is None:
        xs = [pts[:, 0]] + ([np.array([c[0] - r, c[0] + r]) for c, r, _ in circles] if circles else [])
        ys = [pts[:, 1]] + ([np.array([c[1] - r, c[1] + r]) for c, r, _ in circles] if circles else [])
        xl, yl = _lims(xs), _lims(ys)
    else:
        xl = yl = lim
    frame = _Frame(xl, yl, equal=True)
    body = []
    kinds = {"good": COLORS[2], "bad": COLORS[1], "terminal": COLORS[0]}
    for c, r, kind in circles or []:
        body.append(f'<circle cx="{frame.px(c[0]):.2f}" cy="{frame.py(c[1]):.2f}" '
                    f'r="{r * frame.sx:.2f}" fill="none" stroke="{kinds.get(kind, "gray")}"/>')
    for x, y in pts:
        body.append(f'<circle cx="{frame.px(x):.2f}" cy="{frame.py(y):.2f}" r="1.5" fill="black"/>')
    _write(path, _doc(body, title, "x1", "x2", frame, comment))


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
