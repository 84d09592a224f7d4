"""CSV and key-value report emission.

Floats are written with ``repr`` (shortest round-trip form), so output is
byte-stable for bit-identical inputs.  Non-finite numbers are rejected.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericalError
from .series import TimeSeries

UNITS = "# units: energies in units of the coupling, hbar = 1, times in inverse energy units"


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if not math.isfinite(v):
        raise NumericalError(f"refusing to write non-finite value {v!r}")
    return repr(v)


def write_csv(path: str | os.PathLike, columns: Mapping[str, Sequence], comment: str | None = None) -> Path:
    """Write equal-length columns; scalar entries are broadcast."""
    path = Path(path)
    lengths = {len(v) for v in columns.values() if not np.isscalar(v) and not isinstance(v, str)}
    if len(lengths) > 1:
        raise ValueError(f"column lengths differ: {sorted(lengths)}")
    n = lengths.pop() if lengths else 1
    cols = []
    for v in columns.values():
        if np.isscalar(v) or isinstance(v, str):
            cell = _cell(v)
            cols.append([cell] * n)
        else:
            cols.append([_cell(x) for x in np.asarray(v).tolist()] if not isinstance(v, list) else [_cell(x) for x in v])
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(UNITS + "\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(columns))
        w.writerows(zip(*cols))
    return path


def read_csv(path: str | os.PathLike) -> dict[str, list[str]]:
    with Path(path).open(encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    return {h: [r[k] for r in body] for k, h in enumerate(header)}


def write_series(path, series: TimeSeries, L: int, model: str, seed: int, comment: str | None = None) -> Path:
    return write_csv(
        path,
        {
            "t": series.times,
            "value": series.values,
            "provenance": series.provenance,
            "L": int(L),
            "model": model,
            "seed": int(seed),
        },
        comment,
    )


def write_report(path: str | os.PathLike, entries: Mapping[str, object]) -> Path:
    """One ``key = value`` line per entry, in insertion order."""
    lines = []
    for key, value in entries.items():
        if isinstance(value, float) or isinstance(value, np.floating):
            text = repr(float(value))
        elif isinstance(value, (list, tuple)):
            text = " ".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_toy_series(path, series: TimeSeries) -> Path:
    meta = series.metadata
    return write_csv(
        path,
        {
            "t": series.times,
            "dA": series.values,
            "envelope": series.reference,
            "abs_error": np.abs(series.values - series.reference),
        },
        f"N = {meta.get('N')}, tau = {meta.get('tau')!r}, delta_max = {meta.get('delta_max')!r}, seed = {meta.get('seed')}",
    )


def write_convergence_table(path, rows) -> Path:
    """Rows of ``(N, seed, sup_error, horizon)``; a missing horizon column is left out."""
    cols = {"N": [r.N for r in rows], "seed": [r.seed for r in rows], "sup_error": [r.sup_error for r in rows]}
    if rows and all(r.horizon is not None for r in rows):
        cols["T_N"] = [r.horizon for r in rows]
    return write_csv(path, cols)
