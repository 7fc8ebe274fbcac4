"""Interpretable renderings of fuzzy-rule policies.

Produces a plain-text view (ASCII membership profiles, one block per
rule) and a standalone SVG with one Gaussian plot per rule and input
dimension.  Both renderings are deterministic given the same policy,
labels, and sample states, so they can be diffed across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fuzzy import FuzzyPolicyParams, memberships, policy_output

# Height levels for the ASCII profile, blank through densest.
_LEVELS = " .:-=+*#@"
_PROFILE_COLS = 41
_SVG_SAMPLES = 100

_CELL_W = 190
_CELL_H = 96
_MARGIN = 18
_HEADER_H = 34
_SAMPLE_ROW_H = 16


@dataclass(frozen=True)
class Rendering:
    """Text and SVG views of one policy."""

    text: str
    svg: str


def _plot_ranges(params: FuzzyPolicyParams) -> list[tuple[float, float]]:
    """Per-dimension plot range covering every rule's center +/- 3 sigma."""
    lows = np.min(params.centers - 3.0 * params.widths, axis=0)
    highs = np.max(params.centers + 3.0 * params.widths, axis=0)
    out = []
    for lo, hi in zip(lows, highs):
        if hi - lo < 1e-9:
            lo, hi = lo - 0.5, hi + 0.5
        out.append((float(lo), float(hi)))
    return out


def _ascii_profile(center: float, width: float, lo: float, hi: float) -> str:
    xs = np.linspace(lo, hi, _PROFILE_COLS)
    m = np.exp(-((xs - center) ** 2) / (2.0 * width**2))
    idx = np.minimum((m * (len(_LEVELS) - 1)).astype(int), len(_LEVELS) - 1)
    return "".join(_LEVELS[i] for i in idx)


def _fmt(x: float) -> str:
    return f"{x:+.4f}"


def render_text(
    params: FuzzyPolicyParams,
    labels: tuple[str, ...],
    samples: list[np.ndarray],
) -> str:
    d = params.state_dim
    ranges = _plot_ranges(params)
    label_w = max(len(name) for name in labels)
    lines = [
        f"fuzzy policy: C={params.rule_count} rules, D={d} inputs, "
        f"scale={params.action_scale:g}, alpha={params.alpha:.4f}"
        + (", symmetric" if params.symmetric else "")
    ]
    for i in range(params.rule_count):
        lines.append(f"rule {i + 1}: o = {_fmt(float(params.outputs[i]))}")
        for j in range(d):
            lo, hi = ranges[j]
            profile = _ascii_profile(
                float(params.centers[i, j]), float(params.widths[i, j]), lo, hi
            )
            lines.append(
                f"  {labels[j]:<{label_w}}  c={_fmt(float(params.centers[i, j]))}"
                f"  sigma={float(params.widths[i, j]):.4f}  |{profile}|"
            )
    for s in samples:
        grades = memberships(params, np.asarray(s, dtype=float))
        action = policy_output(params, np.asarray(s, dtype=float))
        coords = ", ".join(_fmt(float(v)) for v in s)
        lines.append(f"sample s = ({coords})")
        for i, g in enumerate(grades):
            lines.append(f"  rule {i + 1} activation: {g:.4f}")
        lines.append(f"  action: {_fmt(float(action))}")
    return "\n".join(lines) + "\n"


def _svg_cell(
    x0: float,
    y0: float,
    center: float,
    width: float,
    lo: float,
    hi: float,
    label: str,
) -> list[str]:
    """One Gaussian profile plot; curve drawn as a polyline."""
    pad = 6
    plot_w = _CELL_W - 2 * pad
    plot_h = _CELL_H - 2 * pad - 14
    xs = np.linspace(lo, hi, _SVG_SAMPLES)
    ms = np.exp(-((xs - center) ** 2) / (2.0 * width**2))
    pts = []
    for x, m in zip(xs, ms):
        px = x0 + pad + (x - lo) / (hi - lo) * plot_w
        py = y0 + pad + (1.0 - m) * plot_h
        pts.append(f"{px:.1f},{py:.1f}")
    cx = x0 + pad + (center - lo) / (hi - lo) * plot_w
    cx = min(max(cx, x0 + pad), x0 + pad + plot_w)
    parts = [
        f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{_CELL_W}" height="{_CELL_H}" '
        'fill="white" stroke="#999"/>',
        f'<polyline points="{" ".join(pts)}" fill="none" stroke="#1f6fb2" '
        'stroke-width="1.5"/>',
        f'<line x1="{cx:.1f}" y1="{y0 + pad:.1f}" x2="{cx:.1f}" '
        f'y2="{y0 + pad + plot_h:.1f}" stroke="#c44" stroke-dasharray="3,2"/>',
        f'<text x="{x0 + pad:.1f}" y="{y0 + _CELL_H - pad:.1f}" '
        f'font-size="10" font-family="monospace">{label} c={center:.3f} '
        f"s={width:.3f}</text>",
    ]
    return parts


def render_svg(
    params: FuzzyPolicyParams,
    labels: tuple[str, ...],
    samples: list[np.ndarray],
) -> str:
    d = params.state_dim
    c = params.rule_count
    ranges = _plot_ranges(params)
    width = 2 * _MARGIN + d * _CELL_W + (d - 1) * 8
    height = (
        _HEADER_H
        + c * (_CELL_H + 22)
        + len(samples) * _SAMPLE_ROW_H
        + 2 * _MARGIN
    )
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#fafafa"/>',
        f'<text x="{_MARGIN}" y="{_MARGIN + 4}" font-size="12" '
        f'font-family="monospace">fuzzy policy: C={c} D={d} '
        f"scale={params.action_scale:g} alpha={params.alpha:.4f}</text>",
    ]
    y = float(_HEADER_H)
    for i in range(c):
        parts.append(
            f'<text x="{_MARGIN}" y="{y + 10:.1f}" font-size="11" '
            f'font-family="monospace">rule {i + 1}: '
            f"o = {float(params.outputs[i]):+.4f}</text>"
        )
        y += 14
        for j in range(d):
            lo, hi = ranges[j]
            x0 = _MARGIN + j * (_CELL_W + 8)
            parts.extend(
                _svg_cell(
                    x0,
                    y,
                    float(params.centers[i, j]),
                    float(params.widths[i, j]),
                    lo,
                    hi,
                    labels[j],
                )
            )
        y += _CELL_H + 8
    for s in samples:
        action = policy_output(params, np.asarray(s, dtype=float))
        coords = ", ".join(f"{float(v):+.3f}" for v in s)
        parts.append(
            f'<text x="{_MARGIN}" y="{y + 11:.1f}" font-size="10" '
            f'font-family="monospace">s=({coords}) -&gt; '
            f"action {float(action):+.4f}</text>"
        )
        y += _SAMPLE_ROW_H
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_rules(
    params: FuzzyPolicyParams,
    labels: tuple[str, ...],
    samples: list[np.ndarray] | None = None,
) -> Rendering:
    """Render a policy as text and SVG.

    ``labels`` must name each input dimension.  ``samples`` is an
    optional list of states; each contributes a row showing per-rule
    activation grades and the defuzzified action.
    """
    if len(labels) != params.state_dim:
        raise ConfigurationError(
            f"expected {params.state_dim} labels, got {len(labels)}"
        )
    samples = samples if samples is not None else []
    samples = [np.asarray(s, dtype=float) for s in samples]
    for s in samples:
        if s.shape != (params.state_dim,):
            raise ConfigurationError(
                f"sample shape {s.shape} does not match state dim "
                f"{params.state_dim}"
            )
    return Rendering(
        text=render_text(params, labels, samples),
        svg=render_svg(params, labels, samples),
    )
