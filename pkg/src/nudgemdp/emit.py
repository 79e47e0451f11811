"""CSV tables, JSON manifests and standalone SVG plots."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional
from xml.sax.saxutils import escape

from .interventions import ACTIVE_KINDS

__all__ = [
    "CSV_SCHEMA",
    "MANIFEST_SCHEMA",
    "MANIFEST_SCHEMA_VERSION",
    "columns",
    "csv_text",
    "write_csv",
    "config_hash",
    "write_manifest",
    "policy_map_svg",
    "effectiveness_svg",
]

MANIFEST_SCHEMA_VERSION = "1.0"


def _load(name: str) -> dict:
    return json.loads(resources.files("nudgemdp").joinpath("schemas", name).read_text())


CSV_SCHEMA = _load("csv_columns.json")
MANIFEST_SCHEMA = _load("manifest.schema.json")


def columns(table: str) -> list[str]:
    return list(CSV_SCHEMA["tables"][table]["columns"])


def _cell(value) -> str:
    if value is None:
        return CSV_SCHEMA["missing_value"]
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(table: str, rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    cols = columns(table)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in cols])
    return buf.getvalue()


def write_csv(out_dir: Path, table: str, rows: Iterable[Mapping]) -> Path:
    path = Path(out_dir) / CSV_SCHEMA["tables"][table]["file"]
    path.write_text(csv_text(table, rows))
    return path


def config_hash(config: Mapping) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    config: Mapping,
    outputs: list[str],
    results: Mapping,
    version: str,
) -> Path:
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "toolkit_version": version,
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "outputs": sorted(outputs),
        "results": results,
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- SVG -----------------------------------------------------------------------

_WINDOW_COLORS = {
    "window1": "#4c78a8",
    "window2": "#f58518",
    "window3": "#54a24b",
    "default_act": "#bab0ac",
    "hopeless": "#222222",
}
_KIND_COLORS = {"B": "#4c78a8", "D": "#e45756", "gamma": "#f58518", "p": "#54a24b"}


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def policy_map_svg(rows: list[Mapping]) -> str:
    """One strip per preset; a cell per progress state coloured by window."""
    presets: dict[str, list[Mapping]] = {}
    for r in rows:
        if r["state"] not in ("goal", "disengaged"):
            presets.setdefault(r["preset"], []).append(r)
    cell, left, top = 56, 120, 24
    n_cols = max((len(v) for v in presets.values()), default=0)
    width = left + cell * n_cols + 20
    height = top + 40 * len(presets) + 40
    body = []
    for i, (preset, cells) in enumerate(presets.items()):
        y = top + 40 * i
        body.append(f'<text x="8" y="{y + 22}">{escape(preset)}</text>')
        for j, r in enumerate(cells):
            x = left + cell * j
            color = _WINDOW_COLORS.get(r["window"], "#ffffff")
            label = escape(r["chosen"] if r["window"] != "hopeless" else "-")
            body.append(f'<rect x="{x}" y="{y}" width="{cell - 2}" height="32" fill="{color}"/>')
            body.append(f'<text x="{x + 4}" y="{y + 20}" fill="white">{r["state"]}:{label}</text>')
    y = top + 40 * len(presets) + 14
    for j, (name, color) in enumerate(_WINDOW_COLORS.items()):
        x = left + 100 * j
        body.append(f'<rect x="{x}" y="{y}" width="10" height="10" fill="{color}"/>')
        body.append(f'<text x="{x + 14}" y="{y + 10}">{name}</text>')
    return _svg(width, height, body)


def effectiveness_svg(rows: list[Mapping], preset: str, title: Optional[str] = None) -> str:
    """Minimum effectiveness against state, one polyline per intervention."""
    mine = [r for r in rows if r["preset"] == preset]
    states = sorted({int(r["state"]) for r in mine})
    width, height, pad = 420, 300, 44
    if not states:
        return _svg(width, height, [])
    lo_w, hi_w = states[0], states[-1]

    def sx(w: int) -> float:
        span = max(hi_w - lo_w, 1)
        return pad + (width - 2 * pad) * (w - lo_w) / span

    def sy(v: float) -> float:
        return height - pad - (height - 2 * pad) * v / 100.0

    body = [
        f'<text x="{pad}" y="20">{escape(title or preset)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2 - 10}" y="{height - 10}">w</text>',
        f'<text x="4" y="{pad}">100%</text>',
        f'<text x="16" y="{height - pad}">0%</text>',
    ]
    for w in states:
        body.append(f'<text x="{sx(w) - 4:.1f}" y="{height - pad + 16}">{w}</text>')
    for k, kind in enumerate(ACTIVE_KINDS):
        pts = [
            (sx(int(r["state"])), sy(float(r["min_effectiveness"])))
            for r in mine
            if r["kind"] == kind.value and r["min_effectiveness"] != "NA"
        ]
        color = _KIND_COLORS[kind.value]
        if pts:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{width - pad + 4}" y="{pad + 14 * k}" fill="{color}">{kind.value}</text>')
    return _svg(width, height, body)
