# pcsracing/utils/csv_io.py
#
# Small CSV helpers shared by the progress logs, race logs and plot-data exports.

import csv
import os
from typing import Any, Dict, Iterable, List, Sequence


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item") and callable(value.item):
        return _cell(value.item())
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Writes a header and rows; floats keep full precision. Returns the row count."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
            count += 1
    return count


def append_row(path: str, header: Sequence[str], row: Sequence[Any]) -> None:
    """Appends one row, writing the header first if the file is new or empty."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new:
            writer.writerow(header)
        writer.writerow([_cell(v) for v in row])


def read_rows(path: str) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
