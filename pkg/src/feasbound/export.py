"""Curve export: versioned CSV, JSON sidecars and a minimal SVG overlay.

Numbers are written with 17 significant digits so that a CSV round-trips
every double exactly and reruns with the same inputs are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .pfsystem import LimitFlag
from .tracer import BoundaryCurve

SCHEMA_VERSION = 1
BASE_COLUMNS = ("step", "lambda1", "lambda2")
TAIL_COLUMNS = ("sigma_min", "residual_inf", "radius", "tau", "active_limits", "corrector_iters")


def fmt(x: float) -> str:
    return "%.17g" % x


def active_tags(flags: dict) -> str:
    """``"14:Lower;10:Upper"`` style tag list, sorted by bus id."""
    tags = []
    for bus in sorted(flags):
        f = flags[bus]
        if f == LimitFlag.AT_UPPER:
            tags.append(f"{bus}:Upper")
        elif f == LimitFlag.AT_LOWER:
            tags.append(f"{bus}:Lower")
    return ";".join(tags)


def curve_header(fixed_names: Sequence[str]) -> list[str]:
    return [*BASE_COLUMNS, *fixed_names, *TAIL_COLUMNS]


def curve_rows(sys, curve: BoundaryCurve) -> list[list[str]]:
    """One row per step.  ``sys`` supplies the parameter layout of the curve points."""
    rows = []
    for k, st in enumerate(curve.steps):
        lam = sys.full_params(st.z)
        rows.append([
            str(k),
            *(fmt(v) for v in lam),
            fmt(st.sigma_min),
            fmt(st.residual_inf),
            fmt(st.radius_used),
            fmt(st.curvature_tau),
            active_tags(st.flags),
            str(st.corrector_iters),
        ])
    return rows


def curve_csv(sys, curve: BoundaryCurve) -> str:
    names = [b.label() for b in sys.params.bindings[2:]]
    lines = [",".join(curve_header(names))]
    lines += [",".join(r) for r in curve_rows(sys, curve)]
    return "\n".join(lines) + "\n"


def curve_sidecar(curve: BoundaryCurve, config: dict, csv_name: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "csv": csv_name,
        "termination": curve.termination.value,
        "stalled": curve.termination.value == "Stalled",
        "seed_origin": curve.seed_origin,
        "label": curve.label,
        "steps": len(curve),
        "pc_cycles": curve.pc_cycles,
        "reversions": curve.reversions,
        "radius_halvings": curve.radius_halvings,
        "switch_steps": list(curve.switches),
        "config": config,
    }


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def svg_overlay(polylines: Sequence[np.ndarray], labels: Sequence[str] = (), axis_names=("lambda1", "lambda2"),
                size: int = 600, margin: int = 50, points: np.ndarray | None = None) -> str:
    """Polylines (each ``(m, 2)``) in one plot with a frame and tick labels.

    ``points`` (optional ``(k, 2)``) are drawn as small grey dots, e.g. an
    oracle boundary.
    """
    clouds = [np.asarray(p, dtype=float).reshape(-1, 2) for p in polylines if len(p)]
    if points is not None and len(points):
        clouds.append(np.asarray(points, dtype=float))
    if clouds:
        allp = np.vstack(clouds)
        lo, hi = allp.min(0), allp.max(0)
    else:
        lo, hi = np.zeros(2), np.ones(2)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * margin

    def xy(p):
        u = margin + (p[:, 0] - lo[0]) / span[0] * inner
        v = size - margin - (p[:, 1] - lo[1]) / span[1] * inner
        return u, v

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="black"/>']
    for k, val in enumerate(np.linspace(lo[0], hi[0], 5)):
        x = margin + k * inner / 4
        out.append(f'<text x="{x:.2f}" y="{size - margin + 18}" font-size="11" '
                   f'text-anchor="middle">{val:.3g}</text>')
    for k, val in enumerate(np.linspace(lo[1], hi[1], 5)):
        y = size - margin - k * inner / 4
        out.append(f'<text x="{margin - 6}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{val:.3g}</text>')
    out.append(f'<text x="{size / 2}" y="{size - 10}" font-size="13" text-anchor="middle">{axis_names[0]}</text>')
    out.append(f'<text x="14" y="{size / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 14 {size / 2})">{axis_names[1]}</text>')
    if points is not None and len(points):
        u, v = xy(np.asarray(points, dtype=float))
        out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1" fill="#999999"/>' for a, b in zip(u, v)]
    for k, p in enumerate(polylines):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        if not len(p):
            continue
        u, v = xy(p)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(u, v))
        color = PALETTE[k % len(PALETTE)]
        title = f"<title>{labels[k]}</title>" if k < len(labels) else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">{title}</polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
