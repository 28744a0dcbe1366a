"""Tiny deterministic SVG 1.1 line charts.

CSV files are the authoritative artifacts; these charts are a convenience
for eyeballing convergence and sweeps without a plotting stack.  The output
is fully determined by the inputs: fixed palette, fixed fonts, fixed
coordinate formatting, and deliberately no timestamps or generated ids —
re-running a command must reproduce the bytes.
"""

import math

PALETTE = ("#1f6fb2", "#d9541e", "#3a8c3f", "#8351a8", "#b0218d", "#6b6e76")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 34, 46


def _fmt(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, target=5):
    """Tick positions at 1/2/5 x 10^k covering [lo, hi]."""
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks or [lo, hi]


def _log_ticks(lo, hi):
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)]


def _tick_label(v):
    if v == 0:
        return "0"
    a = abs(v)
    if 1e-3 <= a < 1e4:
        s = f"{v:.6g}"
    else:
        s = f"{v:.1e}"
    return s


def line_chart(series, title="", xlabel="", ylabel="", width=720, height=440,
               logy=False):
    """Render labelled (xs, ys) series as one SVG string.

    ``series`` is a sequence of ``(label, xs, ys)`` triples.  Non-finite and
    (for log axes) non-positive points are dropped per series.
    """
    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    cleaned = []
    for label, xs, ys in series:
        pts = [
            (float(x), float(y))
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y) and (not logy or y > 0)
        ]
        cleaned.append((str(label), pts))

    all_pts = [p for _, pts in cleaned for p in pts]
    if all_pts:
        x_lo, x_hi = min(p[0] for p in all_pts), max(p[0] for p in all_pts)
        y_lo, y_hi = min(p[1] for p in all_pts), max(p[1] for p in all_pts)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if logy:
        y_ticks = _log_ticks(max(y_lo, 1e-300), max(y_hi, 1e-299))
        y_lo, y_hi = y_ticks[0], y_ticks[-1]
        if y_hi == y_lo:
            y_hi = y_lo * 10.0

        def y_pos(v):
            f = (math.log10(v) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
            return _MARGIN_T + plot_h * (1.0 - f)
    else:
        if y_hi == y_lo:
            y_hi = y_lo + (abs(y_lo) if y_lo else 1.0)
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad
        y_ticks = _nice_ticks(y_lo, y_hi)

        def y_pos(v):
            return _MARGIN_T + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo))

    x_ticks = _nice_ticks(x_lo, x_hi)

    def x_pos(v):
        return _MARGIN_L + plot_w * (v - x_lo) / (x_hi - x_lo)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    )
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>')
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444444" stroke-width="1"/>'
    )
    if title:
        out.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{_esc(title)}</text>'
        )

    for t in x_ticks:
        if t < x_lo - 1e-12 or t > x_hi + 1e-12:
            continue
        px = x_pos(t)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{_MARGIN_T + plot_h}" x2="{_fmt(px)}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="#444444" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(px)}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_esc(_tick_label(t))}</text>'
        )
    for t in y_ticks:
        if t < min(y_lo, y_ticks[0]) or t > max(y_hi, y_ticks[-1]):
            continue
        py = y_pos(t)
        out.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{_fmt(py)}" x2="{_MARGIN_L}" '
            f'y2="{_fmt(py)}" stroke="#444444" stroke-width="1"/>'
        )
        out.append(
            f'<line x1="{_MARGIN_L}" y1="{_fmt(py)}" x2="{_MARGIN_L + plot_w}" '
            f'y2="{_fmt(py)}" stroke="#dddddd" stroke-width="0.5"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L - 8}" y="{_fmt(py + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_esc(_tick_label(t))}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{height - 10}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">'
            f'{_esc(xlabel)}</text>'
        )
    if ylabel:
        cx, cy = 16, _MARGIN_T + plot_h / 2
        out.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{_esc(ylabel)}</text>'
        )

    for idx, (label, pts) in enumerate(cleaned):
        color = PALETTE[idx % len(PALETTE)]
        if pts:
            coords = " ".join(f"{_fmt(x_pos(x))},{_fmt(y_pos(y))}" for x, y in pts)
            out.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
            for x, y in pts:
                out.append(
                    f'<circle cx="{_fmt(x_pos(x))}" cy="{_fmt(y_pos(y))}" r="2.2" '
                    f'fill="{color}"/>'
                )
        ly = _MARGIN_T + 14 + 16 * idx
        lx = _MARGIN_L + plot_w - 150
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{_esc(label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text):
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
