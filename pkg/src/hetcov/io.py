"""Tidy CSV writers and the flat key-value run manifest."""
from __future__ import annotations

import csv
import hashlib
import platform
from pathlib import Path
from typing import Iterable, Mapping


def write_csv(path, columns: list, rows: Iterable[Mapping]) -> Path:
    """Write ``rows`` with a fixed column order.

    Floats are written with ``repr`` so reruns are byte-identical and values
    round-trip exactly.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])
    return path


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _escape(value) -> str:
    return str(value).replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(value: str) -> str:
    out, i = [], 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({"n": "\n", "r": "\r"}.get(nxt, nxt))
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def write_manifest(path, entries: Mapping) -> Path:
    """One ``key = value`` line per entry; line breaks in values are escaped."""
    path = Path(path)
    lines = [f"{k} = {_escape(v)}" for k, v in entries.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().split("\n"):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ValueError(f"malformed manifest line: {line!r}")
        out[key.strip()] = _unescape(value)
    return out


def library_versions() -> dict:
    import numpy
    import scipy
    import sklearn

    from . import __version__

    return {
        "version_python": platform.python_version(),
        "version_numpy": numpy.__version__,
        "version_scipy": scipy.__version__,
        "version_sklearn": sklearn.__version__,
        "version_hetcov": __version__,
    }
