"""Self-describing CSV and JSON outputs.

CSV files start with ``#`` comment lines carrying the schema tag, the full
run configuration (as JSON) and a creation timestamp, followed by a header
row.  Floats are written with 17 significant digits so that reading a file
back recovers every value exactly.  The timestamp is the only field that
may differ between two runs of the same configuration.
"""

from __future__ import annotations

import csv
import io
import json
import math
from datetime import datetime, timezone
from typing import Iterable, Sequence

SCHEMA_VERSION = 1


def schema_tag(kind: str) -> str:
    return f"srwalk.{kind}/{SCHEMA_VERSION}"


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def parse(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def csv_text(kind: str, columns: Sequence[str], rows: Iterable[dict], config: dict,
             created: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema_tag(kind)}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    buf.write(f"# created: {created or timestamp()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> tuple[dict, list[dict]]:
    """Parse a CSV written by :func:`csv_text`; returns ``(header, rows)``.

    ``header`` holds ``schema``, ``config`` and ``created`` when present.
    Plain CSV files without comment lines are accepted as well.
    """
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            val = val.strip()
            header[key.strip()] = json.loads(val) if key.strip() == "config" else val
        elif line.strip():
            body.append(line)
    rows = [{k: parse(v) for k, v in r.items()} for r in csv.DictReader(body)]
    return header, rows


def json_text(kind: str, payload: dict, config: dict, created: str | None = None) -> str:
    doc = {"schema": schema_tag(kind), "config": config, "created": created or timestamp()}
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def without_timestamp(text: str) -> str:
    """Drop the creation timestamp from CSV or JSON text (for determinism checks)."""
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        doc.pop("created", None)
        return json.dumps(doc, sort_keys=True)
    return "\n".join(l for l in text.splitlines() if not l.startswith("# created:"))
