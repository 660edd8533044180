"""Canonical serialization helpers shared by the CLI and report writers.

Reports must be byte-reproducible: same dict -> same text, across the
engine's report files and the standalone scoring command.
"""

from __future__ import annotations

import json


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def jsonl_line(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def text_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)),
             "  ".join("-" * w for w in widths)]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
