"""Binary netpbm I/O: P4 for motion bitmaps, P5 (8-bit) for gray frames."""
from __future__ import annotations

import os
import re

import numpy as np

from .core import MotionBitmap


class NetpbmError(ValueError):
    pass


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(data: bytes, ntokens: int, where: str) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    for _ in range(ntokens):
        m = _TOKEN.match(data, pos)
        if not m:
            raise NetpbmError(f"{where}: truncated header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise NetpbmError(f"{where}: missing raster")
    return tokens, pos + 1


def _int_token(tok: bytes, where: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise NetpbmError(f"{where}: bad header value {tok!r}") from None


def decode_pgm(data: bytes, where: str = "<bytes>") -> np.ndarray:
    magic = data[:2]
    if magic != b"P5":
        raise NetpbmError(f"{where}: expected binary PGM (P5), got {magic!r}")
    (_, w, h, maxval), start = _read_header(data, 4, where)
    width, height, maxval = (_int_token(t, where) for t in (w, h, maxval))
    if maxval != 255:
        raise NetpbmError(f"{where}: only 8-bit PGM supported (maxval {maxval})")
    n = width * height
    raster = data[start : start + n]
    if len(raster) != n:
        raise NetpbmError(f"{where}: truncated pixel payload ({len(raster)} of {n} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(pixels: np.ndarray) -> bytes:
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise NetpbmError("PGM pixels must be a 2-D array of 0..255")
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.astype(np.uint8).tobytes()


def decode_pbm(data: bytes, where: str = "<bytes>") -> MotionBitmap:
    magic = data[:2]
    if magic != b"P4":
        raise NetpbmError(f"{where}: expected binary PBM (P4), got {magic!r}")
    (_, w, h), start = _read_header(data, 3, where)
    width, height = _int_token(w, where), _int_token(h, where)
    stride = (width + 7) // 8
    raster = data[start : start + stride * height]
    if len(raster) != stride * height:
        raise NetpbmError(f"{where}: truncated bit payload")
    packed = np.frombuffer(raster, dtype=np.uint8).reshape(height, stride)
    bits = np.unpackbits(packed, axis=1)[:, :width]
    return MotionBitmap.with_dims(bits)


def encode_pbm(bm: MotionBitmap) -> bytes:
    packed = np.packbits(bm.bits, axis=1)  # MSB-first, rows padded to a byte
    return b"P4\n%d %d\n" % (bm.cols, bm.rows) + packed.tobytes()


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pgm(f.read(), os.fspath(path))


def write_pgm(path, pixels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(pixels))


def read_pbm(path) -> MotionBitmap:
    with open(path, "rb") as f:
        return decode_pbm(f.read(), os.fspath(path))


def write_pbm(path, bm: MotionBitmap) -> None:
    with open(path, "wb") as f:
        f.write(encode_pbm(bm))
