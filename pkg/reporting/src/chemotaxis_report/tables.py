"""Read-only access to the laboratory's emitted artifacts.

Everything here consumes the documented on-disk formats — float CSVs
written at full round-trip (`repr`) precision and the per-directory
``manifest.json`` — and nothing here ever writes into an input
directory. Numbers are taken verbatim: parsing a value and re-rendering
it with `repr` reproduces the original bytes, which is what lets the
summaries downstream be compared byte-for-byte against the producer's.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class MissingColumnError(KeyError):
    """A figure or summary referenced a column the CSV does not carry."""

    def __init__(self, column: str, source) -> None:
        super().__init__(column)
        self.column = column
        self.source = str(source)

    def __str__(self) -> str:
        return f"column {self.column!r} missing from {self.source}"


@dataclass(frozen=True)
class Table:
    """One CSV file: a header tuple and float rows in file order."""

    source: Path
    columns: tuple
    rows: tuple

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        if name not in self.columns:
            raise MissingColumnError(name, self.source)
        j = self.columns.index(name)
        return [row[j] for row in self.rows]


def read_table(path) -> Table:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0]:
        raise ValueError(f"{path} has no header row")
    columns = tuple(lines[0].split(","))
    rows = []
    for k, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(columns):
            raise ValueError(
                f"{path} line {k}: {len(parts)} fields, header has {len(columns)}"
            )
        try:
            rows.append(tuple(float(p) for p in parts))
        except ValueError as exc:
            raise ValueError(f"{path} line {k}: {exc}") from None
    return Table(source=path, columns=columns, rows=tuple(rows))


def read_manifest(directory) -> dict:
    """Load ``manifest.json``; its presence is what marks data as reportable."""
    path = Path(directory) / "manifest.json"
    if not path.is_file():
        raise ValueError(
            f"no manifest.json in {directory}: refusing to report on data "
            "without provenance"
        )
    return json.loads(path.read_text())
