"""Binary checkpoints.

Layout (little-endian)::

    magic        4s   b"MIXW"
    version      u32
    config_len   u32
    config       config_len bytes of UTF-8 JSON (model config)
    count        u32  number of parameter blobs
    count times:
        name_len u16
        name     name_len bytes UTF-8
        rank     u8
        dims     rank x u32
        data     prod(dims) x f32
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .models import ModelConfig, build_model

MAGIC = b"MIXW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model) -> None:
    cfg = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    params = model.state_dict()
    parts = [struct.pack("<4sII", MAGIC, VERSION, len(cfg)), cfg, struct.pack("<I", len(params))]
    for name, arr in params.items():
        raw = name.encode()
        parts.append(struct.pack(f"<H{len(raw)}sB", len(raw), raw, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    try:
        magic, version, clen = struct.unpack_from("<4sII", raw, 0)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        off = 12
        cfg = ModelConfig.from_dict(json.loads(raw[off : off + clen].decode()))
        off += clen
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + nlen].decode()
            off += nlen
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if off + 4 * size > len(raw):
                raise CheckpointError(f"{path}: truncated blob {name!r}")
            params[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(dims)
            off += 4 * size
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated ({exc})") from None
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return cfg, params


def load_checkpoint(path: str | Path):
    """Rebuild the model described by the checkpoint and load its weights."""
    cfg, params = read_checkpoint(path)
    model = build_model(cfg)
    model.load_state_dict({k: v.astype(cfg.dtype) for k, v in params.items()})
    return model
