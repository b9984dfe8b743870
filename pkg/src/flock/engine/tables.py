"""In-memory columnar tables and CSV ingestion.

Column types are inferred over the whole column with the fallback chain
INT -> DOUBLE -> TEXT; empty CSV fields become NULL.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..errors import IoError, RaggedRow


@dataclass
class Table:
    name: str
    columns: list[tuple[str, str]]  # (name, declared type)
    data: list[list]  # one value vector per column

    def __post_init__(self):
        lengths = {len(col) for col in self.data}
        if len(lengths) > 1:
            raise ValueError("column vectors must share one length")
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")

    @property
    def row_count(self) -> int:
        return len(self.data[0]) if self.data else 0

    @property
    def column_names(self) -> list[str]:
        return [n for n, _ in self.columns]

    def rows(self) -> list[list]:
        return [list(r) for r in zip(*self.data)] if self.data else []


@dataclass
class QueryResult:
    columns: list[tuple[str, str]]
    rows: list[list]
    stats: dict = field(default_factory=dict)  # node_id -> runtime annotations

    @property
    def column_names(self) -> list[str]:
        return [n for n, _ in self.columns]


def infer_value_type(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bool):
        return "BOOL"
    if isinstance(value, int):
        return "INT"
    if isinstance(value, float):
        return "DOUBLE"
    if isinstance(value, str):
        return "TEXT"
    if isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
        return "DOUBLE_ARRAY"
    return "JSON"


def infer_column_type(values: list) -> str:
    types = {infer_value_type(v) for v in values}
    types.discard(None)
    if not types:
        return "TEXT"
    if types <= {"INT"}:
        return "INT"
    if types <= {"INT", "DOUBLE"}:
        return "DOUBLE"
    if len(types) == 1:
        return next(iter(types))
    return "TEXT"


def _convert_column(raw: list[Optional[str]]) -> tuple[str, list]:
    """INT -> DOUBLE -> TEXT fallback over the full column."""
    non_null = [v for v in raw if v is not None]
    try:
        return "INT", [int(v) if v is not None else None for v in raw]
    except ValueError:
        pass
    try:
        return "DOUBLE", [float(v) if v is not None else None for v in raw]
    except ValueError:
        pass
    if not non_null:
        return "TEXT", list(raw)
    return "TEXT", list(raw)


def load_csv(path: Union[str, Path], table_name: str) -> Table:
    path = Path(path)
    if not path.exists():
        raise IoError(f"no such file: {path}")
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise IoError(f"{path}: empty file, expected a header row")
            raw_columns: list[list[Optional[str]]] = [[] for _ in header]
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise RaggedRow(
                        f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}"
                    )
                for col, value in zip(raw_columns, row):
                    col.append(value if value != "" else None)
    except OSError as e:
        raise IoError(str(e))
    columns = []
    data = []
    for name, raw in zip(header, raw_columns):
        type_name, values = _convert_column(raw)
        columns.append((name, type_name))
        data.append(values)
    return Table(name=table_name, columns=columns, data=data)
