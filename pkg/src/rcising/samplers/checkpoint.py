"""Binary chain checkpoints.

Layout (all little-endian)::

    offset  size  field
    0       4     magic b"RCLB"
    4       4     u32 format version (3)
    8       32    sha256 of the config + geometry fingerprint
    40      8     u64 next segment (RNG counter)
    48      8     u64 measurements recorded
    56      8     f64 phi4 proposal width
    64      8     u64 Wolff clusters per measured sweep (0 until calibrated)
    72      32    4 x u64 diagnostics (accepts, proposals, clusters, flipped)
    104     1     u8 state dtype (0: int8 spins, 1: float64 field)
    105     8     u64 number of sites V
    113     ...   state array (V bytes or 8V bytes)
            4     u32 batches B
            8     u64 accumulator width K
            8BK   f64 batch sums, row-major
            8B    i64 batch counts
            4     u32 number of scalars
            per scalar: u16 name length, utf-8 name, 8B f64 sums
            32    sha256 of everything above
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RCLB"
VERSION = 3
DIGEST = 32


class CheckpointError(ValueError):
    pass


@dataclass
class ChainState:
    config_hash: bytes
    segment: int
    measured: int
    width: float
    clusters_per_sweep: int
    diag: np.ndarray  # uint64[4]
    state: np.ndarray  # int8 spins or float64 field
    sums: np.ndarray
    counts: np.ndarray
    scalars: dict


def encode(cs: ChainState) -> bytes:
    if len(cs.config_hash) != 32:
        raise CheckpointError("config hash must be 32 bytes")
    parts = [MAGIC, struct.pack("<I", VERSION), cs.config_hash]
    parts.append(struct.pack("<QQdQ", cs.segment, cs.measured, cs.width, cs.clusters_per_sweep))
    parts.append(np.asarray(cs.diag, dtype="<u8").tobytes())
    if cs.state.dtype == np.int8:
        code, arr = 0, cs.state.astype("<i1")
    else:
        code, arr = 1, cs.state.astype("<f8")
    parts.append(struct.pack("<BQ", code, len(arr)))
    parts.append(arr.tobytes())
    B, K = cs.sums.shape
    parts.append(struct.pack("<IQ", B, K))
    parts.append(np.ascontiguousarray(cs.sums, dtype="<f8").tobytes())
    parts.append(np.asarray(cs.counts, dtype="<i8").tobytes())
    parts.append(struct.pack("<I", len(cs.scalars)))
    for name in sorted(cs.scalars):
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(np.asarray(cs.scalars[name], dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def decode(blob: bytes) -> ChainState:
    if len(blob) < 113 + DIGEST:
        raise CheckpointError("checkpoint is truncated")
    if bytes(blob[:4]) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body = blob[:-DIGEST]
    if hashlib.sha256(body).digest() != bytes(blob[-DIGEST:]):
        raise CheckpointError("checkpoint checksum mismatch (corrupt or truncated)")
    try:
        return _decode_body(memoryview(body))
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint: {exc}") from None


def _decode_body(mv) -> ChainState:
    if bytes(mv[:4]) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    (ver,) = struct.unpack_from("<I", mv, 4)
    if ver != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {ver}")
    chash = bytes(mv[8:40])
    seg, measured, width, cps = struct.unpack_from("<QQdQ", mv, 40)
    diag = np.frombuffer(mv, dtype="<u8", count=4, offset=72).astype(np.uint64)
    code, V = struct.unpack_from("<BQ", mv, 104)
    off = 113
    if code == 0:
        state = np.frombuffer(mv, dtype="<i1", count=V, offset=off).astype(np.int8)
        off += V
    elif code == 1:
        state = np.frombuffer(mv, dtype="<f8", count=V, offset=off).astype(np.float64)
        off += 8 * V
    else:
        raise CheckpointError(f"bad state dtype code {code}")
    B, K = struct.unpack_from("<IQ", mv, off)
    off += 12
    sums = np.frombuffer(mv, dtype="<f8", count=B * K, offset=off).reshape(B, K).astype(np.float64)
    off += 8 * B * K
    counts = np.frombuffer(mv, dtype="<i8", count=B, offset=off).astype(np.int64)
    off += 8 * B
    (ns,) = struct.unpack_from("<I", mv, off)
    off += 4
    scalars = {}
    for _ in range(ns):
        (ln,) = struct.unpack_from("<H", mv, off)
        off += 2
        name = bytes(mv[off : off + ln]).decode()
        off += ln
        scalars[name] = np.frombuffer(mv, dtype="<f8", count=B, offset=off).astype(np.float64)
        off += 8 * B
    if off != len(mv):
        raise CheckpointError("trailing bytes in checkpoint")
    return ChainState(chash, seg, measured, width, cps, diag, state, sums, counts, scalars)


def save(path, cs: ChainState) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(cs))
    os.replace(tmp, path)


def load(path) -> ChainState:
    return decode(Path(path).read_bytes())
