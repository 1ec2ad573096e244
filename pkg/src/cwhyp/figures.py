"""Deterministic SVG figures.

All figures use a 1000 x 1000 viewport with the unit square [0, 1]^2 mapped
onto it (y up).  Coordinates are printed with a fixed number of decimals, so
the same input gives the same bytes.
"""
from __future__ import annotations

from typing import Iterable, List, Sequence

import numpy as np

from . import spaces

SIZE = 1000
PAD = 40
KINDS = ("foliation", "shadow_trace", "leaf_intersections")
COLORS = {"stable": "#1f77b4", "unstable": "#d62728", "pseudo": "#7f7f7f", "shadow": "#2ca02c",
          "witness": "#ff7f0e", "singular": "#000000"}


class MissingGeometry(KeyError):
    pass


def _xy(p) -> str:
    s = SIZE - 2 * PAD
    return f"{PAD + s * float(p[0]):.2f},{PAD + s * (1.0 - float(p[1])):.2f}"


def _pieces(V: np.ndarray, chart: str) -> List[np.ndarray]:
    """Cut a lift polyline where it leaves the unit square; each piece reduced."""
    V = np.asarray(V, dtype=float)
    if not len(V):
        return []
    cell = np.floor(V)
    cut = np.flatnonzero(np.any(cell[1:] != cell[:-1], axis=1)) + 1
    out = []
    for part, c in zip(np.split(V, cut), np.split(cell, cut)):
        out.append(part - c[0])
    if chart == spaces.SPHERE:
        # the antipodal copy shows the leaf on the double cover
        out = out + [spaces.reduce_arr(-p) for p in out]
    return out


def _polyline(P: np.ndarray, color: str, width: float = 1.5) -> str:
    pts = " ".join(_xy(p) for p in P)
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def _cross(p, color: str, r: float = 9.0, width: float = 2.5) -> str:
    x, y = map(float, _xy(p).split(","))
    return (f'<path d="M{x - r:.2f},{y - r:.2f}L{x + r:.2f},{y + r:.2f}'
            f'M{x - r:.2f},{y + r:.2f}L{x + r:.2f},{y - r:.2f}" stroke="{color}" '
            f'stroke-width="{width}"/>')


def _dot(p, color: str, r: float = 2.0) -> str:
    x, y = _xy(p).split(",")
    return f'<circle cx="{x}" cy="{y}" r="{r:.1f}" fill="{color}"/>'


def _doc(title: str, body: Iterable[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">')
    frame = (f'<rect x="{PAD}" y="{PAD}" width="{SIZE - 2 * PAD}" height="{SIZE - 2 * PAD}" '
             f'fill="white" stroke="black" stroke-width="1"/>')
    label = f'<text x="{PAD}" y="{PAD - 12}" font-family="monospace" font-size="16">{title}</text>'
    return "\n".join([head, f"<title>{title}</title>", frame, label, *body, "</svg>"]) + "\n"


def _singulars(chart: str) -> List[str]:
    """One cross per singular class, at its representative in [0, 1/2]^2."""
    if chart != spaces.SPHERE:
        return []
    return [_cross(s, COLORS["singular"]) for s in spaces.SINGULAR]


def _leaves(leaves: Sequence[dict], chart: str) -> List[str]:
    body = []
    for lf in leaves:
        color = COLORS.get(lf.get("kind", "stable"), "#444444")
        for piece in _pieces(np.array(lf["vertices"], dtype=float), chart):
            if len(piece) >= 2:
                body.append(_polyline(piece, color, 1.2))
    return body


def _results(artifact: dict) -> dict:
    return artifact.get("results", artifact)


def foliation_svg(artifact: dict) -> str:
    res = _results(artifact)
    if "leaves" not in res:
        raise MissingGeometry("artifact has no leaves")
    chart = res.get("chart", spaces.TORUS)
    body = _leaves(res["leaves"], chart) + _singulars(chart)
    return _doc(f"stable/unstable leaves ({chart})", body)


def shadow_trace_svg(artifact: dict, max_points: int = 400) -> str:
    res = _results(artifact)
    runs = res.get("runs")
    if not runs or "pseudo_orbit" not in runs[0] or "shadow_orbit" not in runs[0]:
        raise MissingGeometry("artifact has no pseudo-orbit/shadow-orbit pair")
    chart = res.get("chart", spaces.TORUS)
    run = runs[0]
    P = np.array(run["pseudo_orbit"], dtype=float)[:max_points]
    S = np.array(run["shadow_orbit"], dtype=float)[:max_points]
    body = [_dot(p, COLORS["pseudo"], 3.0) for p in P]
    body += [_dot(s, COLORS["shadow"], 1.6) for s in spaces.project_arr(S, chart)]
    body += _singulars(chart)
    return _doc(f"pseudo-orbit (grey) and shadow orbit (green), first {len(P)} points", body)


def leaf_intersections_svg(artifact: dict, max_witnesses: int = 60) -> str:
    res = _results(artifact)
    if "witness_points" not in res:
        raise MissingGeometry("artifact has no witnesses")
    chart = res.get("chart", spaces.TORUS)
    body = _leaves(res.get("leaves", []), chart)
    for w in res["witness_points"][:max_witnesses]:
        p = w["point"]
        if len(p) != 2:
            raise MissingGeometry("leaf_intersections is drawn for single factors only")
        body.append(_dot(p, COLORS["witness"], 3.5))
        for z in w["set"]["points"]:
            body.append(_dot(z, COLORS["unstable"], 2.0))
    body += _singulars(chart)
    return _doc(f"self-intersections, max count {res.get('max_count', '?')} ({chart})", body)


def emit_figure(artifact: dict, kind: str) -> str:
    if kind == "foliation":
        return foliation_svg(artifact)
    if kind == "shadow_trace":
        return shadow_trace_svg(artifact)
    if kind == "leaf_intersections":
        return leaf_intersections_svg(artifact)
    raise ValueError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
