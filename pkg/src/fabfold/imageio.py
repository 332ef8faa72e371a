"""Minimal PGM/PBM image I/O for observations and debugging dumps.

Depth images are written as 16-bit binary PGM (P5, big-endian sample order
per the netpbm spec); masks as binary PBM (P4, rows padded to whole bytes).
"""
from __future__ import annotations

import re

import numpy as np


class ImageFormatError(Exception):
    pass


def write_pgm16(depth: np.ndarray, path) -> None:
    """Write a [0,1] float image as 16-bit PGM."""
    arr = np.clip(np.asarray(depth, dtype=np.float64), 0.0, 1.0)
    samples = np.round(arr * 65535.0).astype(">u2")
    h, w = samples.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(samples.tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a 16-bit PGM back to a [0,1] float32 image."""
    with open(path, "rb") as f:
        raw = f.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise ImageFormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(m.group(i)) for i in (1, 2, 3))
    if maxval != 65535:
        raise ImageFormatError(f"{path}: expected 16-bit PGM, maxval={maxval}")
    data = raw[m.end():]
    if len(data) < w * h * 2:
        raise ImageFormatError(f"{path}: truncated PGM body")
    samples = np.frombuffer(data[: w * h * 2], dtype=">u2").reshape(h, w)
    return (samples.astype(np.float32) / 65535.0)


def write_pbm(mask: np.ndarray, path) -> None:
    """Write a binary mask as PBM (1 = foreground)."""
    arr = (np.asarray(mask) != 0).astype(np.uint8)
    h, w = arr.shape
    packed = np.packbits(arr, axis=1)
    with open(path, "wb") as f:
        f.write(f"P4\n{w} {h}\n".encode())
        f.write(packed.tobytes())


def read_pbm(path) -> np.ndarray:
    """Read a PBM mask back to uint8 {0,1}."""
    with open(path, "rb") as f:
        raw = f.read()
    m = re.match(rb"P4\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise ImageFormatError(f"{path}: not a binary PBM")
    w, h = int(m.group(1)), int(m.group(2))
    row_bytes = (w + 7) // 8
    data = raw[m.end():]
    if len(data) < row_bytes * h:
        raise ImageFormatError(f"{path}: truncated PBM body")
    rows = np.frombuffer(data[: row_bytes * h], dtype=np.uint8).reshape(h, row_bytes)
    bits = np.unpackbits(rows, axis=1)[:, :w]
    return bits.astype(np.uint8)
