"""Binary checkpoints and CSV series.

Checkpoint layout, all little-endian: 8-byte magic ``SUFLOW01``; u64 ``nx, ny, k``;
f64 ``L, alpha, r_scale, t, cumulative_dissipation``; then ``nx*ny*k`` f64 field
values in row-major node order with components innermost.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..flow import SERIES_COLUMNS, FlowParams, FlowRun, FlowState
from ..geometry import MapField, TorusGrid

MAGIC = b"SUFLOW01"
_HEADER = struct.Struct("<8s3Q5d")
MAX_VALUES = 1 << 31


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    state: FlowState
    alpha: float
    r_scale: float


def write_checkpoint(state: FlowState, params: FlowParams | None = None, alpha: float | None = None,
                     r_scale: float | None = None) -> bytes:
    if params is not None:
        alpha, r_scale = params.alpha, params.r_scale
    if alpha is None:
        raise ValueError("alpha required (pass params or alpha)")
    r_scale = 1.0 if r_scale is None else r_scale
    g = state.grid
    head = _HEADER.pack(MAGIC, g.nx, g.ny, state.field.k, g.side_length, alpha, r_scale,
                        state.t, state.cumulative_dissipation)
    return head + state.field.values.astype("<f8", copy=False).tobytes(order="C")


def read_checkpoint(data: bytes) -> Checkpoint:
    """Inverse of :func:`write_checkpoint`.  The step counter is not stored and
    restarts at 0."""
    if len(data) < 8 or data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint")
    if len(data) < _HEADER.size:
        raise CheckpointError(f"truncated header: {len(data)} of {_HEADER.size} bytes")
    _, nx, ny, k, L, alpha, r_scale, t, diss = _HEADER.unpack_from(data)
    if max(nx, ny, k) >= MAX_VALUES or nx * ny * k >= MAX_VALUES:
        raise CheckpointError(f"dimension overflow: {nx} x {ny} x {k}")
    n = nx * ny * k
    got = (len(data) - _HEADER.size) // 8
    if got != n or (len(data) - _HEADER.size) % 8:
        raise CheckpointError(f"expected {n} values, got {got}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(nx, ny, k).astype(np.float64)
    grid = TorusGrid(int(nx), L, ny=int(ny))
    return Checkpoint(FlowState(t, MapField(grid, values), 0, diss), alpha, r_scale)


def save_checkpoint(path, state: FlowState, params: FlowParams) -> Path:
    path = Path(path)
    path.write_bytes(write_checkpoint(state, params))
    return path


def load_checkpoint(path) -> Checkpoint:
    return read_checkpoint(Path(path).read_bytes())


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def series_csv(run: FlowRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    cols = [run.series[c] for c in SERIES_COLUMNS]
    for row in zip(*cols):
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def read_series_csv(text: str) -> dict:
    """Column name -> list of the exact cell strings."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty CSV")
    head, body = rows[0], rows[1:]
    missing = [c for c in ("t", "E", "E_alpha") if c not in head]
    if missing:
        raise ValueError(f"CSV lacks columns {missing}")
    return {c: [r[i] for r in body] for i, c in enumerate(head)}
