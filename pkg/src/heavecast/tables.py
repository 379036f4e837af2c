"""Tiny CSV table helpers so every artifact is written and read one way."""

from __future__ import annotations

from .errors import DataError


def write_table(path, header: list[str], rows) -> None:
    """Write a CSV with shortest-round-trip float formatting."""
    def cell(v) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(float(v))  # builtin repr round-trips; numpy scalars do not
        return str(v)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise DataError(f"row width {len(row)} does not match header width {len(header)}")
            fh.write(",".join(cell(v) for v in row) + "\n")


def read_table(path) -> dict[str, list[str]]:
    """Read a CSV back into per-column string lists keyed by header name."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline().strip()
        if not header_line:
            raise DataError(f"{path}: empty table")
        names = header_line.split(",")
        columns: dict[str, list[str]] = {name: [] for name in names}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise DataError(f"{path}:{lineno}: row width {len(parts)} does not match header")
            for name, part in zip(names, parts):
                columns[name].append(part)
    return columns
