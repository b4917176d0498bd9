"""Raw float64 + JSON sidecar serialization shared by volumes, stacks and chains."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def write_raw(path: str | Path, values: np.ndarray, meta: dict[str, Any]) -> tuple[Path, Path]:
    """Write ``values`` as little-endian float64 to ``<path>.f64raw`` plus ``<path>.json``.

    ``path`` is the stem; any suffix is replaced.
    """
    stem = Path(path).with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    raw = stem.with_suffix(".f64raw")
    side = stem.with_suffix(".json")
    np.ascontiguousarray(values, dtype="<f8").tofile(raw)
    meta = dict(meta)
    meta.setdefault("dtype", "float64")
    meta.setdefault("byte_order", "little")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return raw, side


def read_raw(path: str | Path) -> tuple[np.ndarray, dict[str, Any]]:
    stem = Path(path).with_suffix("")
    meta = json.loads(stem.with_suffix(".json").read_text())
    values = np.fromfile(stem.with_suffix(".f64raw"), dtype="<f8")
    return values.astype(np.float64), meta


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _fmt(v: Any) -> Any:
    # repr round-trips floats exactly
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
