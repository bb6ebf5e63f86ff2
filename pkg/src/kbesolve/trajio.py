"""Binary trajectory persistence with byte-exact round trips.

Layout: a fixed little-endian header

    magic "KBE1" | version u16 | n_k u32 | n_steps u32 | dt f64
    | bands u8 (= 2) | flags u8

followed by the lesser then the greater tensor as 8-byte little-endian
real/imag pairs, axes ordered (k, band, band, t, t') slowest to fastest.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import TrajectoryFormatError
from .state import TwoTimeGF

MAGIC = b"KBE1"
VERSION = 1
_HEADER = struct.Struct("<4sHIIdBB")
_BANDS = 2


def write_trajectory(path: str, state: TwoTimeGF) -> None:
    """Serialize the propagated block [0..frontier]^2 of both components."""
    n = state.frontier
    header = _HEADER.pack(
        MAGIC, VERSION, state.n_k_local, n, state.dt, _BANDS, 0
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.lesser[:, :, :, : n + 1, : n + 1]).astype("<c16", copy=False).tobytes())
        fh.write(np.ascontiguousarray(state.greater[:, :, :, : n + 1, : n + 1]).astype("<c16", copy=False).tobytes())


def read_header(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise TrajectoryFormatError(f"{path}: truncated header")
    magic, version, n_k, n_steps, dt, bands, flags = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise TrajectoryFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TrajectoryFormatError(f"{path}: unsupported version {version}")
    if bands != _BANDS:
        raise TrajectoryFormatError(f"{path}: unsupported band count {bands}")
    return {
        "magic": magic.decode("ascii"),
        "version": version,
        "n_k": n_k,
        "n_steps": n_steps,
        "dt": dt,
        "bands": bands,
        "flags": flags,
    }


def read_trajectory(path: str) -> TwoTimeGF:
    """Exact inverse of the writer; validates magic, version, and size."""
    header = read_header(path)
    n_k = header["n_k"]
    n = header["n_steps"]
    shape = (n_k, _BANDS, _BANDS, n + 1, n + 1)
    count = int(np.prod(shape))
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        body = fh.read()
    expected = 2 * count * 16
    if len(body) != expected:
        raise TrajectoryFormatError(
            f"{path}: body has {len(body)} bytes, expected {expected}"
        )
    data = np.frombuffer(body, dtype="<c16")
    lesser = data[:count].reshape(shape).astype(complex)
    greater = data[count:].reshape(shape).astype(complex)
    return TwoTimeGF(
        n_k_local=n_k,
        k_offset=0,
        n_steps=n,
        dt=header["dt"],
        lesser=lesser,
        greater=greater,
        frontier=n,
    )
