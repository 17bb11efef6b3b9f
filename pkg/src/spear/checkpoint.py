"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SPEARCKP"                 magic
    u16  version                currently 1
    u16  flags                  bit 0: frozen tensors embedded
    u32  n                      length of the config JSON
    n bytes                     ModelConfig as canonical JSON (sorted keys, no spaces)
    u32  count                  number of tensors that follow
    per tensor:
        u16 name length, name (UTF-8), u8 ndim, ndim x u32 dims,
        prod(dims) x f32 values
    u32  crc32                  over every byte from ``version`` up to here

Without the embedded flag only the trainable tensors (prompts, head) are
stored and the frozen ones are rebuilt from the seed in the config.
"""
from __future__ import annotations

import io
import json
import struct
import zlib

import numpy as np

from spear.errors import FormatError
from spear.model import ModelConfig, SpearModel, init_model

MAGIC = b"SPEARCKP"
VERSION = 1
FLAG_EMBEDDED = 1
TRAINABLE = ("prompts", "head_w", "head_b")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dumps(model: SpearModel, embed_frozen: bool = False) -> bytes:
    body = io.BytesIO()
    body.write(struct.pack("<HH", VERSION, FLAG_EMBEDDED if embed_frozen else 0))
    cfg = canonical_json(model.config.to_dict())
    body.write(struct.pack("<I", len(cfg)))
    body.write(cfg)
    tensors = model.named_tensors()
    if not embed_frozen:
        keep = set(TRAINABLE) | ({"embedding"} if model.config.train_embeddings else set())
        tensors = [(n, a) for n, a in tensors if n in keep]
    body.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        body.write(struct.pack("<H", len(raw)))
        body.write(raw)
        body.write(struct.pack("<B", arr.ndim))
        body.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.write(arr.tobytes())
    payload = body.getvalue()
    return MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def loads(blob: bytes, dtype=np.float32) -> SpearModel:
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise FormatError("magic: not a SPEAR checkpoint")
    payload, (crc,) = blob[len(MAGIC):-4], struct.unpack("<I", blob[-4:])
    version = struct.unpack_from("<H", payload, 0)[0]
    if version != VERSION:
        raise FormatError(f"version: unsupported checkpoint version {version} (expected {VERSION})")
    if zlib.crc32(payload) != crc:
        raise FormatError("crc32: checksum mismatch (truncated or corrupted file)")
    pos = 2
    (flags,) = struct.unpack_from("<H", payload, pos)
    pos += 2
    (n,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    try:
        config = ModelConfig.from_dict(json.loads(payload[pos:pos + n].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"config: {exc}") from None
    pos += n
    model = init_model(config, dtype)
    (count,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    expected = {name: arr.shape for name, arr in model.named_tensors()}
    seen = set()
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", payload, pos)
        pos += 2
        name = payload[pos:pos + ln].decode("utf-8")
        pos += ln
        (ndim,) = struct.unpack_from("<B", payload, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", payload, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(payload, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        if name not in expected or tuple(expected[name]) != tuple(shape):
            raise FormatError(f"tensor {name!r}: unexpected name or shape {shape}")
        model.set_tensor(name, data.astype(dtype))
        seen.add(name)
    if pos != len(payload):
        raise FormatError("payload: trailing bytes after the last tensor")
    missing = set(TRAINABLE) - seen
    if missing:
        raise FormatError(f"tensors: missing {sorted(missing)}")
    if flags & FLAG_EMBEDDED and seen != set(expected):
        raise FormatError(f"tensors: embedded checkpoint lacks {sorted(set(expected) - seen)}")
    return model


def save_artifact(path, model: SpearModel, embed_frozen: bool = False) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model, embed_frozen))


def load_artifact(path, dtype=np.float32) -> SpearModel:
    with open(path, "rb") as fh:
        return loads(fh.read(), dtype)
