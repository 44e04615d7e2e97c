"""Versioned CSV tables with lossless float formatting.

The first line is a tag `# softpinn-csv <major> kind=<kind> key=value ...`,
the second the column names. Floats are written with `repr`, which is the
shortest text that parses back to the identical double.
"""

import csv
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from softpinn.errors import UnsupportedFileVersionError
from softpinn.util.schema import SCHEMA_MAJOR

MAGIC = "# softpinn-csv"


@dataclass
class CsvTable:
    kind: str
    """What the table holds, e.g. `dataset` or `trajectory`"""
    columns: List[str]
    data: np.ndarray
    """(rows, columns) float64"""
    meta: Dict[str, str] = field(default_factory=dict)
    """Extra key=value pairs carried on the tag line; no whitespace or `=`
    in keys, no whitespace in values
    """

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def format_float(value: float) -> str:
    return repr(float(value))


def write_table(path: str, table: CsvTable) -> None:
    if table.data.ndim != 2 or table.data.shape[1] != len(table.columns):
        raise ValueError(
            f"table has {len(table.columns)} columns but data shape {table.data.shape}"
        )
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    tag = " ".join(
        [MAGIC, str(SCHEMA_MAJOR), f"kind={table.kind}"]
        + [f"{k}={v}" for k, v in table.meta.items()]
    )
    with open(path, "w", newline="") as f:
        f.write(tag + "\n")
        writer = csv.writer(f)
        writer.writerow(table.columns)
        for row in table.data:
            writer.writerow([format_float(v) for v in row])


def read_table(path: str, /, *, kind: Optional[str] = None) -> CsvTable:
    with open(path, "r", newline="") as f:
        tag = f.readline().strip()
        parts = tag.split()
        if len(parts) < 3 or " ".join(parts[:2]) != MAGIC:
            raise ValueError(f"{path} is not a softpinn csv table")
        if parts[2] != str(SCHEMA_MAJOR):
            raise UnsupportedFileVersionError(
                f"{path} has csv schema version {parts[2]}, only {SCHEMA_MAJOR} is supported"
            )
        meta: Dict[str, str] = {}
        for item in parts[3:]:
            key, _, value = item.partition("=")
            meta[key] = value
        table_kind = meta.pop("kind", "")
        if kind is not None and table_kind != kind:
            raise ValueError(f"{path} holds a {table_kind!r} table, expected {kind!r}")
        reader = csv.reader(f)
        columns = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return CsvTable(kind=table_kind, columns=columns, data=data, meta=meta)
