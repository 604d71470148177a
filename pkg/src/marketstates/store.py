"""Binary epoch-matrix store.

One file per run, little-endian:

    header:  magic "EPCM", version u32, N u32, epoch_count u32, kind u8
    epoch:   epoch_id u32, start i32, end i32 (days since 1970-01-01),
             then N(N-1)/2 float64 strictly-upper-triangle values
             in row-major order

A JSON sidecar (``<file>.json``) records tickers, calendar dates, and the
epoch spec so the store is self-describing.
"""

from __future__ import annotations

import json
import struct
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .correlation import EpochCorrelation, EpochSpec, upper_triangle
from .errors import DataError

MAGIC = b"EPCM"
VERSION = 1
KIND_CODES = {"pearson": 0, "relative": 1}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

_EPOCH_DAY = date(1970, 1, 1)


def _to_days(d: date) -> int:
    return (d - _EPOCH_DAY).days


def _from_days(days: int) -> date:
    return _EPOCH_DAY + timedelta(days=int(days))


def write_epoch_store(path, matrices: list[EpochCorrelation], tickers,
                      spec: EpochSpec) -> None:
    """Write epoch matrices of one kind plus a JSON sidecar manifest."""
    if not matrices:
        raise DataError("no matrices to store")
    kinds = {m.kind for m in matrices}
    if len(kinds) != 1:
        raise DataError(f"mixed matrix kinds in one store: {sorted(kinds)}")
    kind = kinds.pop()
    n = matrices[0].matrix.shape[0]

    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIB", VERSION, n, len(matrices), KIND_CODES[kind]))
        for m in matrices:
            if m.matrix.shape[0] != n:
                raise DataError("inconsistent matrix dimension in store")
            fh.write(struct.pack("<Iii", m.epoch_id,
                                 _to_days(m.window[0]), _to_days(m.window[1])))
            fh.write(upper_triangle(m.matrix).astype("<f8").tobytes())

    sidecar = {
        "tickers": list(tickers),
        "kind": kind,
        "epoch_length": spec.length,
        "epoch_shift": spec.shift,
        "epochs": [
            {"epoch_id": m.epoch_id,
             "start": m.window[0].isoformat(),
             "end": m.window[1].isoformat(),
             "degenerate_tickers": sorted(m.degenerate_tickers)}
            for m in matrices
        ],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def read_epoch_store(path) -> tuple[list[EpochCorrelation], dict]:
    """Read a store file back into full symmetric matrices plus its sidecar."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"epoch store not found: {path}")
    sidecar_path = Path(str(path) + ".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.is_file() else {}
    degenerate = {
        e["epoch_id"]: frozenset(e.get("degenerate_tickers", []))
        for e in sidecar.get("epochs", [])
    }

    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise DataError(f"{path}: bad magic, not an epoch store")
        version, n, count, kind_code = struct.unpack("<IIIB", fh.read(13))
        if version != VERSION:
            raise DataError(f"{path}: unsupported store version {version}")
        if kind_code not in KIND_NAMES:
            raise DataError(f"{path}: unknown kind code {kind_code}")
        kind = KIND_NAMES[kind_code]
        n_upper = n * (n - 1) // 2
        iu = np.triu_indices(n, k=1)

        matrices = []
        for _ in range(count):
            blob = fh.read(12 + 8 * n_upper)
            if len(blob) != 12 + 8 * n_upper:
                raise DataError(f"{path}: truncated store")
            epoch_id, start_days, end_days = struct.unpack("<Iii", blob[:12])
            values = np.frombuffer(blob[12:], dtype="<f8")
            matrix = np.eye(n)
            matrix[iu] = values
            matrix.T[iu] = values
            matrices.append(EpochCorrelation(
                epoch_id=epoch_id,
                window=(_from_days(start_days), _from_days(end_days)),
                kind=kind,
                matrix=matrix,
                degenerate_tickers=degenerate.get(epoch_id, frozenset()),
            ))
    return matrices, sidecar
