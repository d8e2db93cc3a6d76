"""Binary flow file: ``DCFW`` header, i16 ``(dy, dx)`` pairs, then three f64 energies."""

import struct
from pathlib import Path

import numpy as np

from densecorr._fileutil import atomic_write_bytes
from densecorr.flow.bp import EnergyBreakdown, FlowField
from densecorr.gridgeom import BadMagicError, GridFormatError, TruncatedPayloadError

FLOW_MAGIC = b"DCFW"
FLOW_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_ENERGY = struct.Struct("<ddd")


def write_flow(path, flow: FlowField, energy: EnergyBreakdown) -> None:
    header = _HEADER.pack(FLOW_MAGIC, FLOW_VERSION, flow.height, flow.width, flow.label_radius)
    body = np.ascontiguousarray(flow.w, dtype="<i2").tobytes()
    tail = _ENERGY.pack(energy.data_term, energy.smoothness_term, energy.total)
    atomic_write_bytes(path, header + body + tail)


def read_flow(path) -> tuple[FlowField, EnergyBreakdown]:
    raw = Path(path).read_bytes()
    if raw[:4] != FLOW_MAGIC:
        raise BadMagicError(f"{path}: not a flow file")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, h, w, radius = _HEADER.unpack_from(raw)
    if version != FLOW_VERSION:
        raise GridFormatError(f"{path}: unsupported version {version}")
    n = h * w * 2
    need = _HEADER.size + 2 * n + _ENERGY.size
    if len(raw) < need:
        raise TruncatedPayloadError(f"{path}: expected {need} bytes, got {len(raw)}")
    w_arr = np.frombuffer(raw, dtype="<i2", count=n, offset=_HEADER.size).reshape(h, w, 2)
    data, smooth, total = _ENERGY.unpack_from(raw, _HEADER.size + 2 * n)
    return FlowField(w_arr.astype(np.int64), radius), EnergyBreakdown(data, smooth, total)
