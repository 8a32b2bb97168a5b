"""Self-contained SVG line plots (no plotting dependency).

Log-scaled y axis with decade ticks, one polyline per series, optional
translucent percentile band per series, and a legend.  Values at or
below zero are clipped to a tiny positive floor so exact hits stay
drawable on the log axis.
"""

import math

WIDTH, HEIGHT = 720, 460
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 160, 40, 55
FLOOR = 1e-17

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
]


class Series:
    """One plotted line: x values, y values, optional (lo, hi) band."""

    def __init__(self, name, xs, ys, band=None):
        self.name = name
        self.xs = list(xs)
        self.ys = [max(float(y), FLOOR) for y in ys]
        if band is not None:
            lo, hi = band
            self.band = ([max(float(v), FLOOR) for v in lo],
                         [max(float(v), FLOOR) for v in hi])
        else:
            self.band = None


def _ticks_log(lo, hi):
    first = math.floor(math.log10(lo))
    last = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(first, last + 1)]


def _fmt_pow(value):
    e = round(math.log10(value))
    return f"1e{e:+03d}" if abs(e) > 3 else f"{value:g}"


def render(series, path, xlabel="k", ylabel="mean relative error", title=""):
    """Write an SVG plot of the series list; empty input yields bare axes."""
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    xs_all = [x for s in series for x in s.xs]
    ys_all = [y for s in series for y in s.ys]
    for s in series:
        if s.band:
            ys_all.extend(s.band[0])
            ys_all.extend(s.band[1])
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (1e-3, 1.0)
    if y_lo == y_hi:
        y_lo, y_hi = y_lo / 10.0, y_hi * 10.0

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        t = (math.log10(y) - math.log10(y_lo)) / (
            math.log10(y_hi) - math.log10(y_lo))
        return MARGIN_T + (1.0 - t) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>')

    # decade ticks on the log y axis
    for tick in _ticks_log(y_lo, y_hi):
        if tick < y_lo * (1 - 1e-12) or tick > y_hi * (1 + 1e-12):
            continue
        y = py(tick)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{y:.2f}" x2="{MARGIN_L + plot_w}" '
            f'y2="{y:.2f}" stroke="#ddd"/>')
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt_pow(tick)}</text>')

    # a handful of x ticks at data values
    xticks = sorted(set(xs_all))
    if len(xticks) > 8:
        step = max(1, len(xticks) // 8)
        xticks = xticks[::step] + [xticks[-1]]
    for tick in xticks:
        x = px(tick)
        parts.append(
            f'<line x1="{x:.2f}" y1="{MARGIN_T + plot_h}" x2="{x:.2f}" '
            f'y2="{MARGIN_T + plot_h + 5}" stroke="#333"/>')
        parts.append(
            f'<text x="{x:.2f}" y="{MARGIN_T + plot_h + 18}" '
            f'text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{tick:g}</text>')

    parts.append(
        f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 14}" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'font-size="13">{xlabel}</text>')
    parts.append(
        f'<text x="20" y="{MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" transform="rotate(-90 20 '
        f'{MARGIN_T + plot_h / 2:.1f})">{ylabel}</text>')

    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        if s.band and len(s.xs) > 1:
            lo, hi = s.band
            pts = [f"{px(x):.2f},{py(h):.2f}" for x, h in zip(s.xs, hi)]
            pts += [f"{px(x):.2f},{py(l):.2f}"
                    for x, l in zip(reversed(s.xs), reversed(lo))]
            parts.append(
                f'<polygon points="{" ".join(pts)}" fill="{color}" '
                f'fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.8"/>')
        ly = MARGIN_T + 16 + 18 * idx
        lx = MARGIN_L + plot_w + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{s.name}</text>')

    parts.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SVG {path}: {exc}") from exc


def render_result(result, path, xlabel="matvec units", title=""):
    """Plot mean relative error vs budget for every series in a result."""
    series = []
    for (est, fn), cells in result.series().items():
        xs = [c.matvec_units for c in cells]
        ys = [c.summary.mean_rel_err for c in cells]
        band = ([c.summary.p05 for c in cells], [c.summary.p95 for c in cells])
        label = est if len({k[1] for k in result.series()}) == 1 else f"{est} [{fn}]"
        series.append(Series(label, xs, ys, band))
    render(series, path, xlabel=xlabel, title=title)
