"""Single-file binary checkpoint: versioned header, named float32 tensors,
JSON trailer carrying the model configs.

Layout (all integers little-endian):

    magic   b"SEMCKP" + u16 version (currently 1)
    u32     tensor count
    per tensor:
        u16 name length, name (utf-8)
        u8  ndim, ndim * u32 dims
        row-major float32 payload
    u32     trailer length, trailer (utf-8 JSON)

The trailer holds the encoder/fusion configs plus the vocab size, label-id
count, and subword chunk size needed to rebuild the tokenizer side.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from .encoder import EncoderConfig
from .errors import DataError
from .fusion import EntailmentModel, FusionConfig

MAGIC = b"SEMCKP"
VERSION = 1


def save_checkpoint(path, model: EntailmentModel, extra: dict | None = None) -> None:
    """Write the model's named parameters and configs to `path`."""
    named = list(model.named_parameters())
    trailer = {
        "encoder": model.encoder_cfg.to_json_dict(),
        "fusion": model.fusion_cfg.to_json_dict(),
        "vocab_size": model.encoder.vocab_size,
        "num_label_ids": model.semantics.num_label_ids,
    }
    if extra:
        trailer.update(extra)
    trailer_bytes = json.dumps(trailer, ensure_ascii=False).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(named)))
        for name, param in named:
            payload = param.detach().cpu().to(torch.float32).numpy()
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", payload.ndim))
            fh.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
            fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(trailer_bytes)))
        fh.write(trailer_bytes)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path, dtype=torch.float32):
    """Rebuild the model from `path`; returns (model, trailer dict)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise DataError(f"{path} is not a checkpoint (bad magic)")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "shape"))
            numel = int(np.prod(shape)) if ndim else 1
            raw = _read_exact(fh, 4 * numel, f"tensor {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        (trailer_len,) = struct.unpack("<I", _read_exact(fh, 4, "trailer length"))
        trailer = json.loads(_read_exact(fh, trailer_len, "trailer").decode("utf-8"))

    try:
        encoder_cfg = EncoderConfig(**trailer["encoder"])
        fusion_cfg = FusionConfig(**trailer["fusion"])
        vocab_size = int(trailer["vocab_size"])
        num_label_ids = int(trailer["num_label_ids"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint trailer is malformed: {exc}") from None

    model = EntailmentModel(vocab_size, num_label_ids, encoder_cfg, fusion_cfg, dtype=dtype)
    expected = dict(model.named_parameters())
    unknown = sorted(set(tensors) - set(expected))
    missing = sorted(set(expected) - set(tensors))
    if unknown or missing:
        raise DataError(
            f"checkpoint tensors do not match the model: unknown={unknown}, "
            f"missing={missing}"
        )
    with torch.no_grad():
        for name, param in expected.items():
            arr = tensors[name]
            if tuple(arr.shape) != tuple(param.shape):
                raise DataError(
                    f"tensor {name!r} has shape {tuple(arr.shape)}, "
                    f"expected {tuple(param.shape)}"
                )
            param.copy_(torch.from_numpy(arr).to(dtype))
    return model, trailer
