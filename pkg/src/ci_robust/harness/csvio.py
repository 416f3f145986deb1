"""CSV ingestion into a :class:`~ci_robust.models.Dataset`."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, EmptyFile, MissingColumn, NonNumericCell
from ..models import Dataset


def _names(value) -> list[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v).strip() for v in value]


@dataclass(frozen=True)
class ColumnSpec:
    x_cols: tuple
    y_cols: tuple
    z_cols: tuple

    @classmethod
    def of(cls, x_cols, y_cols, z_cols) -> "ColumnSpec":
        spec = cls(tuple(_names(x_cols)), tuple(_names(y_cols)), tuple(_names(z_cols)))
        for role in ("x_cols", "y_cols", "z_cols"):
            if not getattr(spec, role):
                raise ConfigError("at least one column is required", f"dgp.{role}")
        seen = {}
        for role in ("x_cols", "y_cols", "z_cols"):
            for name in getattr(spec, role):
                if name in seen:
                    raise ConfigError(f"column {name!r} listed in both {seen[name]} and {role}",
                                      f"dgp.{role}")
                seen[name] = role
        return spec


def load_csv(path, column_spec: ColumnSpec) -> Dataset:
    """Read selected numeric columns; rows keep file order."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        index = {name: i for i, name in enumerate(header)}
        blocks = []
        for role in ("x_cols", "y_cols", "z_cols"):
            cols = getattr(column_spec, role)
            missing = [c for c in cols if c not in index]
            if missing:
                raise MissingColumn(f"columns {missing} not in header {header}", f"dgp.{role}")
            blocks.append([index[c] for c in cols])
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for block in blocks:
                for i in block:
                    cell = row[i].strip() if i < len(row) else ""
                    try:
                        v = float(cell)
                    except ValueError:
                        raise NonNumericCell(line_no, header[i], cell) from None
                    if not math.isfinite(v):
                        raise NonNumericCell(line_no, header[i], cell)
                    values.append(v)
            rows.append(values)
    if not rows:
        raise EmptyFile(f"{path} has a header but no data rows")
    a = np.array(rows, dtype=float)
    dx, dy = len(column_spec.x_cols), len(column_spec.y_cols)
    return Dataset(a[:, :dx], a[:, dx:dx + dy], a[:, dx + dy:])
