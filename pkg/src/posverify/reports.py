"""Rendering report records as aligned text, CSV or JSON lines.

Records are plain dicts with a ``type`` key. Output is a pure function of
the records, so equal runs give byte-identical text.
"""

from __future__ import annotations

import csv
import io
import json

FORMATS = ("table", "csv", "jsonl")


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def _columns(records: list[dict]) -> list[str]:
    cols: list[str] = []
    for rec in records:
        for k in rec:
            if k not in cols:
                cols.append(k)
    return cols


def _groups(records: list[dict]) -> list[list[dict]]:
    """Consecutive runs of records sharing a type."""
    out: list[list[dict]] = []
    for rec in records:
        if out and out[-1][0].get("type") == rec.get("type"):
            out[-1].append(rec)
        else:
            out.append([rec])
    return out


def to_jsonl(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def to_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    for k, group in enumerate(_groups(records)):
        if k:
            buf.write("\n")
        cols = _columns(group)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for rec in group:
            writer.writerow([_cell(rec.get(c)) if c in rec else "" for c in cols])
    return buf.getvalue()


def to_table(records: list[dict], columns: dict[str, list[str]] | None = None) -> str:
    """Aligned text; ``columns`` optionally picks the columns shown per record type."""
    blocks = []
    for group in _groups(records):
        kind = group[0].get("type")
        cols = (columns or {}).get(kind) or [c for c in _columns(group) if c != "type"]
        rows = [cols] + [[_cell(rec.get(c)) for c in cols] for rec in group]
        widths = [max(len(r[k]) for r in rows) for k in range(len(cols))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


ROUND_COLUMNS = [
    "round", "verified", "reason", "T_j", "completion_time", "region_diameter",
    "expected_in_region", "true_in_region", "timing_ball_uncertainty", "latency_uncertainty",
]


def render(records: list[dict], fmt: str) -> str:
    if fmt == "jsonl":
        return to_jsonl(records)
    if fmt == "csv":
        return to_csv(records)
    if fmt == "table":
        return to_table(records, {"round": ROUND_COLUMNS})
    raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
