"""Binary checkpoint format for network parameters.

Layout: magic "FNET", version u16, out_channels u16, n_tensors u32; then per
tensor: name_len u16, name bytes, rank u8, dims u32 x rank, float32 data.
All integers little-endian. A JSON sidecar (path + ".meta.json") carries
run metadata: {kind, sigma_px, image_px, trained_steps, val_mse}.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FNET"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(params: dict, out_channels: int, path, meta: dict | None = None) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HHI", VERSION, out_channels, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())
    if meta is not None:
        with open(str(path) + ".meta.json", "w") as f:
            json.dump(meta, f)


def load_checkpoint(path):
    """Returns (params, out_channels, meta)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a network checkpoint")
    version, out_channels, n_tensors = struct.unpack("<HHI", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    params = {}
    try:
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode()
            off += name_len
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
            off += 4 * count
            params[name] = arr.reshape(dims).copy()
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"{path}: truncated checkpoint ({e})") from e
    if len(params) != n_tensors:
        raise CheckpointError(f"{path}: expected {n_tensors} tensors, got {len(params)}")
    meta = None
    meta_path = Path(str(path) + ".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    return params, out_channels, meta
