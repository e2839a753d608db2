"""Deterministic artifact IO.

Every file this package writes carries a commented metadata header (CSV) or
a "meta" object (JSON) holding the package version, the relevant seeds, and
a hash of the generating configuration — enough to reproduce the file.
Timestamps are deliberately excluded so reruns with the same master seed
are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ._version import __version__


def jsonable(obj: Any) -> Any:
    """Recursively convert numpy containers/scalars and dataclasses."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    # non-finite floats pass through; json emits Infinity/NaN literals,
    # which json.loads round-trips
    return obj


def canonical_json(doc: Any) -> str:
    """Key-sorted, whitespace-free JSON used for hashing."""
    return json.dumps(jsonable(doc), sort_keys=True, separators=(",", ":"))


def config_hash(doc: Any) -> str:
    """Short stable digest of a configuration document."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()[:12]


def standard_meta(**fields: Any) -> dict:
    """Header skeleton: version first, then caller fields in given order."""
    meta = {"package": f"glvdisc {__version__}"}
    meta.update({k: v for k, v in fields.items() if v is not None})
    return meta


def write_csv(path: str | Path, columns: Sequence[str],
              rows: Iterable[Sequence[Any]],
              meta: Mapping[str, Any] | None = None) -> None:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of write_csv; meta values come back as strings."""
    meta: dict[str, str] = {}
    body: list[str] = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def write_json(path: str | Path, doc: Mapping[str, Any],
               meta: Mapping[str, Any] | None = None) -> None:
    full = {"meta": jsonable(meta or {})}
    full.update(jsonable(doc))
    Path(path).write_text(json.dumps(full, indent=2) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
