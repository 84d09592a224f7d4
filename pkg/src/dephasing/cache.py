"""Binary eigensystem cache.

Layout (all little-endian)::

    b"EQDS" | version u32 | L u32 | dim u64 | shift f64
    energies: dim x f64
    transform: dim*dim x (re f64, im f64), column-major
    checksum: 8-byte BLAKE2b digest of every preceding byte
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CacheCorruptionError, CacheVersionError
from .spectral import EigenSystem

MAGIC = b"EQDS"
VERSION = 1
_HEADER = struct.Struct("<4sIIQd")
_CHECKSUM_SIZE = 8


def _digest(*chunks: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=_CHECKSUM_SIZE)
    for chunk in chunks:
        h.update(chunk)
    return h.digest()


def cache_store(es: EigenSystem, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(MAGIC, VERSION, es.L, es.dim, es.shift)
    energies = np.ascontiguousarray(es.energies, dtype="<f8").tobytes()
    transform = np.asarray(es.transform, dtype="<c16").tobytes(order="F")
    checksum = _digest(header, energies, transform)
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "wb") as fh:
        for chunk in (header, energies, transform, checksum):
            fh.write(chunk)
    os.replace(tmp, path)
    return path


def cache_load(path: str | os.PathLike) -> EigenSystem:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CacheCorruptionError(f"cannot read cache file {path}: {exc}") from exc
    if len(raw) < _HEADER.size + _CHECKSUM_SIZE:
        raise CacheCorruptionError(f"{path}: file too short ({len(raw)} bytes)")
    magic, version, L, dim, shift = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CacheCorruptionError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CacheVersionError(f"{path}: format version {version}, this reader understands {VERSION}")
    if dim != 1 << L:
        raise CacheCorruptionError(f"{path}: dim {dim} inconsistent with L={L}")
    expected = _HEADER.size + 8 * dim + 16 * dim * dim + _CHECKSUM_SIZE
    if len(raw) != expected:
        raise CacheCorruptionError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = memoryview(raw)[: expected - _CHECKSUM_SIZE]
    if _digest(body) != raw[-_CHECKSUM_SIZE:]:
        raise CacheCorruptionError(f"{path}: checksum mismatch")
    off = _HEADER.size
    energies = np.frombuffer(raw, dtype="<f8", count=dim, offset=off).astype(np.float64)
    off += 8 * dim
    flat = np.frombuffer(raw, dtype="<c16", count=dim * dim, offset=off)
    transform = flat.reshape((dim, dim), order="F")
    # Real eigenvectors are stored with zero imaginary parts; recover them exactly.
    if not transform.imag.any():
        transform = np.ascontiguousarray(transform.real)
    else:
        transform = np.ascontiguousarray(transform, dtype=np.complex128)
    return EigenSystem(energies, transform, float(shift), int(L))


def cache_verify(path: str | os.PathLike) -> dict:
    es = cache_load(path)
    return {"path": str(path), "L": es.L, "dim": es.dim, "shift": es.shift, "version": VERSION}
