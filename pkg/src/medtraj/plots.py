"""Deterministic standalone SVG emitters for the pipeline reports.

No timestamps, no randomness: identical inputs give byte-identical files.
The 8-color palette is keyed to the combined-alphabet state index.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .cluster import ClusterPartition
from .descriptives import StateDistribution, TransitionMatrix

PALETTE = (
    "#d9d9d9",  # 0: no therapy
    "#1b9e77",
    "#d95f02",
    "#7570b3",
    "#e7298a",
    "#66a61e",
    "#e6ab02",
    "#a6761d",
)


def _color(index: int) -> str:
    return PALETTE[index % len(PALETTE)]


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _notice_svg(message: str) -> str:
    body = [
        '<rect x="0" y="0" width="400" height="120" fill="#ffffff" stroke="#999999"/>',
        f'<text x="200" y="64" font-size="14" text-anchor="middle" fill="#555555">{message}</text>',
    ]
    return _svg(400, 120, body)


def _legend(labels: Sequence[str], x: float, y: float) -> list[str]:
    parts = []
    for i, label in enumerate(labels):
        ly = y + 18 * i
        parts.append(
            f'<rect x="{x:.2f}" y="{ly:.2f}" width="12" height="12" fill="{_color(i)}"/>'
        )
        parts.append(
            f'<text x="{x + 16:.2f}" y="{ly + 10:.2f}" font-size="11">{label}</text>'
        )
    return parts


def state_distribution_svg(dist: StateDistribution) -> str:
    """Stacked per-week state-frequency bands."""
    if dist.freq.size == 0:
        return _notice_svg("no sequence data")
    weeks, n_states = dist.freq.shape
    margin, plot_w, plot_h = 50, 720, 360
    width = margin * 2 + plot_w + 150
    height = margin * 2 + plot_h
    bar_w = plot_w / weeks
    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    for t in range(weeks):
        x = margin + t * bar_w
        y = margin + plot_h
        for a in range(n_states):
            frac = float(dist.freq[t, a])
            if frac <= 0.0:
                continue
            h = frac * plot_h
            y -= h
            body.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
                f'fill="{_color(a)}"/>'
            )
    body.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="#000000"/>'
    )
    body.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{margin + plot_h}" stroke="#000000"/>'
    )
    for w in range(0, weeks + 1, 4):
        x = margin + w * bar_w
        body.append(
            f'<text x="{x:.2f}" y="{margin + plot_h + 16}" font-size="10" '
            f'text-anchor="middle">{w}</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = margin + plot_h * (1 - frac)
        body.append(
            f'<text x="{margin - 6}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{frac:.2f}</text>'
        )
    body.append(
        f'<text x="{margin + plot_w / 2:.2f}" y="{height - 8}" font-size="12" '
        f'text-anchor="middle">week</text>'
    )
    body.extend(_legend(dist.labels, margin + plot_w + 20, margin))
    return _svg(width, height, body)


def sequence_index_svg(
    states: np.ndarray,
    labels: Sequence[str],
    partition: ClusterPartition | None = None,
) -> str:
    """One row per subject colored by weekly state, rows sorted by cluster."""
    if states.size == 0:
        return _notice_svg("no sequence data")
    n, weeks = states.shape
    if partition is not None:
        order = sorted(range(n), key=lambda i: (int(partition.labels[i]), i))
    else:
        order = list(range(n))
    margin, plot_w = 50, 720
    row_h = max(1.0, min(8.0, 600.0 / n))
    plot_h = row_h * n
    width = margin * 2 + plot_w + 150
    height = int(margin * 2 + plot_h)
    cell_w = plot_w / weeks
    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    for r, i in enumerate(order):
        y = margin + r * row_h
        t = 0
        while t < weeks:
            state = int(states[i, t])
            run = t
            while run < weeks and int(states[i, run]) == state:
                run += 1
            x = margin + t * cell_w
            body.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{(run - t) * cell_w:.2f}" '
                f'height="{row_h:.2f}" fill="{_color(state)}"/>'
            )
            t = run
    if partition is not None:
        boundary = margin
        for g in range(1, partition.k + 1):
            size = int((partition.labels == g).sum())
            body.append(
                f'<text x="{margin - 6}" y="{boundary + size * row_h / 2 + 4:.2f}" '
                f'font-size="10" text-anchor="end">c{g}</text>'
            )
            boundary += size * row_h
            body.append(
                f'<line x1="{margin}" y1="{boundary:.2f}" x2="{margin + plot_w}" '
                f'y2="{boundary:.2f}" stroke="#ffffff" stroke-width="0.8"/>'
            )
    body.extend(_legend(labels, margin + plot_w + 20, margin))
    return _svg(width, height, body)


def _shade(value: float) -> str:
    """White -> dark blue ramp for rates in [0, 1]."""
    v = min(max(value, 0.0), 1.0)
    r = round(255 - 205 * v)
    g = round(255 - 165 * v)
    b = round(255 - 103 * v)
    return f"#{r:02x}{g:02x}{b:02x}"


def transition_heatmap_svg(tm: TransitionMatrix) -> str:
    """Transition-rate matrix with shaded cells and printed rates."""
    n = len(tm.labels)
    if n == 0:
        return _notice_svg("no transition data")
    cell = 58
    margin = 110
    width = margin + n * cell + 30
    height = margin + n * cell + 30
    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    for i in range(n):
        for j in range(n):
            rate = float(tm.probs[i, j])
            x = margin + j * cell
            y = margin + i * cell
            body.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_shade(rate)}" stroke="#ffffff"/>'
            )
            text_fill = "#ffffff" if rate > 0.6 else "#333333"
            body.append(
                f'<text x="{x + cell / 2:.2f}" y="{y + cell / 2 + 4:.2f}" font-size="11" '
                f'text-anchor="middle" fill="{text_fill}">{rate:.2f}</text>'
            )
    for i, label in enumerate(tm.labels):
        body.append(
            f'<text x="{margin - 8}" y="{margin + i * cell + cell / 2 + 4:.2f}" '
            f'font-size="11" text-anchor="end">{label}</text>'
        )
        body.append(
            f'<text x="{margin + i * cell + cell / 2:.2f}" y="{margin - 10}" font-size="11" '
            f'text-anchor="middle" transform="rotate(-45 {margin + i * cell + cell / 2:.2f} {margin - 10})">{label}</text>'
        )
    return _svg(width, height, body)


def hr_forest_svg(covariates: Sequence[Mapping]) -> str:
    """Hazard ratios with 95% CIs on a log scale, one row per covariate,
    with a unity reference line."""
    if not covariates:
        return _notice_svg("no model fit")
    margin_left, margin = 150, 40
    plot_w, row_h = 520, 26
    plot_h = row_h * len(covariates)
    width = margin_left + plot_w + margin + 120
    height = margin * 2 + plot_h + 20

    lo = min(min(float(c["ci_low"]) for c in covariates), 1.0)
    hi = max(max(float(c["ci_high"]) for c in covariates), 1.0)
    log_lo, log_hi = np.log(lo) - 0.15, np.log(hi) + 0.15

    def x_of(v: float) -> float:
        return margin_left + (np.log(v) - log_lo) / (log_hi - log_lo) * plot_w

    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    unity_x = x_of(1.0)
    body.append(
        f'<line x1="{unity_x:.2f}" y1="{margin}" x2="{unity_x:.2f}" '
        f'y2="{margin + plot_h}" stroke="#bbbbbb" stroke-dasharray="4 3"/>'
    )
    body.append(
        f'<text x="{unity_x:.2f}" y="{margin + plot_h + 16}" font-size="10" '
        f'text-anchor="middle">HR = 1</text>'
    )
    for r, cov in enumerate(covariates):
        y = margin + r * row_h + row_h / 2
        x_low, x_high = x_of(float(cov["ci_low"])), x_of(float(cov["ci_high"]))
        x_mid = x_of(float(cov["hr"]))
        body.append(
            f'<text x="{margin_left - 8}" y="{y + 4:.2f}" font-size="11" '
            f'text-anchor="end">{cov["name"]}</text>'
        )
        body.append(
            f'<line x1="{x_low:.2f}" y1="{y:.2f}" x2="{x_high:.2f}" y2="{y:.2f}" '
            f'stroke="#333333" stroke-width="1.5"/>'
        )
        body.append(f'<circle cx="{x_mid:.2f}" cy="{y:.2f}" r="3.5" fill="#1f78b4"/>')
        label = f'{float(cov["hr"]):.2f} [{float(cov["ci_low"]):.2f}, {float(cov["ci_high"]):.2f}]'
        body.append(
            f'<text x="{margin_left + plot_w + 10}" y="{y + 4:.2f}" font-size="10">{label}</text>'
        )
    return _svg(width, height, body)
