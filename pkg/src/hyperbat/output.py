"""Deterministic CSV / JSON serialization of result tables."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .config import SCHEMA

_FLOAT_FORMAT = ".12e"


@dataclass
class Table:
    """Named columns of numbers plus a free-form metadata header."""

    name: str
    columns: list
    units: dict
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return format(float(x), _FLOAT_FORMAT)


def _json_value(x):
    if isinstance(x, float):
        if math.isnan(x):
            return None
        return float(format(x, _FLOAT_FORMAT))
    return x


def to_csv(table: Table, config_json: str) -> str:
    lines = [
        f"# schema: {SCHEMA}",
        f"# table: {table.name}",
        f"# config: {config_json}",
        "# columns: " + ",".join(table.columns),
        "# units: " + "; ".join(f"{c}={table.units.get(c, '')}" for c in table.columns),
    ]
    for key in sorted(table.meta):
        lines.append(f"# {key}: {json.dumps(table.meta[key], sort_keys=True)}")
    for row in table.rows:
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def to_json(table: Table, config: dict) -> str:
    doc = {
        "schema": SCHEMA,
        "table": table.name,
        "config": config,
        "columns": list(table.columns),
        "units": {c: table.units.get(c, "") for c in table.columns},
        "meta": table.meta,
        "data": [[_json_value(x) for x in row] for row in table.rows],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def render(table: Table, config, fmt: str) -> str:
    if fmt == "json":
        return to_json(table, config.to_dict())
    return to_csv(table, config.to_json())


def read_csv(text: str):
    """Parse a file produced by ``to_csv`` back into (columns, rows)."""
    columns, rows = None, []
    for line in text.splitlines():
        if line.startswith("# columns: "):
            columns = line[len("# columns: "):].split(",")
        elif line and not line.startswith("#"):
            rows.append([float(x) for x in line.split(",")])
    return columns, rows
