"""Binary model checkpoints.

Layout: a 4-byte magic, a version byte, an 8-byte little-endian header
length, a JSON header, then raw tensor bytes. The header carries the model
and training configs, the vocabulary, and a tensor manifest (name, dtype,
shape, offset, byte count), so a checkpoint is self-describing. Saving the
same model twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError
from .model import ModelConfig, SpanTagger
from .training import TrainConfig
from .vocab import Vocabulary

MAGIC = b"SPTG"
FORMAT_VERSION = 1

_DTYPES = {
    "float64": np.float64,
    "float32": np.float32,
    "int64": np.int64,
}


def _dtype_name(t: torch.Tensor) -> str:
    name = str(t.dtype).removeprefix("torch.")
    if name not in _DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {name}")
    return name


@dataclass
class LoadedCheckpoint:
    model: SpanTagger
    train_config: TrainConfig | None
    header: dict


def save_checkpoint(
    model: SpanTagger,
    path: str | Path,
    train_config: TrainConfig | None = None,
    extra: dict | None = None,
) -> None:
    """Write the model, its configs, and its vocabulary to one binary file."""
    state = model.state_dict()
    manifest = []
    payloads = []
    offset = 0
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        raw = tensor.numpy().tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": _dtype_name(tensor),
                "shape": list(tensor.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payloads.append(raw)
        offset += len(raw)

    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "vocab": {"tokens": model.vocab.tokens, "lowercase": model.vocab.lowercase},
        "tensors": manifest,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in payloads:
            fh.write(raw)


def read_header(path: str | Path) -> dict:
    """Parse and return just the JSON header of a checkpoint."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 1 + 8:
        raise CheckpointError("file too short to be a checkpoint")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = data[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<Q", data, len(MAGIC) + 1)
    start = len(MAGIC) + 1 + 8
    if len(data) < start + header_len:
        raise CheckpointError("truncated checkpoint: header cut off")
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    return header


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    """Rebuild a model from a checkpoint file.

    The reconstructed model is bit-identical to the saved one: saving it
    again produces the same bytes.
    """
    data = Path(path).read_bytes()
    header = read_header(path)
    (header_len,) = struct.unpack_from("<Q", data, len(MAGIC) + 1)
    payload = data[len(MAGIC) + 1 + 8 + header_len :]

    vocab_info = header.get("vocab")
    if not vocab_info or "tokens" not in vocab_info:
        raise CheckpointError("checkpoint header is missing the vocabulary")
    vocab = Vocabulary(vocab_info["tokens"], lowercase=vocab_info.get("lowercase", True))
    config = ModelConfig.from_dict(header["model_config"])
    model = SpanTagger(vocab, config)

    expected = model.state_dict()
    manifest = {entry["name"]: entry for entry in header.get("tensors", [])}
    missing = sorted(set(expected) - set(manifest))
    unexpected = sorted(set(manifest) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"tensor set mismatch: missing {missing}, unexpected {unexpected}"
        )

    state = {}
    for name, entry in manifest.items():
        dtype = entry["dtype"]
        if dtype not in _DTYPES:
            raise CheckpointError(f"tensor {name}: unsupported dtype {dtype}")
        shape = tuple(entry["shape"])
        want = tuple(expected[name].shape)
        if shape != want:
            raise CheckpointError(
                f"tensor {name}: expected shape {list(want)}, found {list(shape)}"
            )
        end = entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise CheckpointError(
                f"truncated checkpoint: tensor {name} needs bytes up to {end}, "
                f"payload has {len(payload)}"
            )
        arr = np.frombuffer(
            payload,
            dtype=_DTYPES[dtype],
            count=int(np.prod(shape, dtype=np.int64)),
            offset=entry["offset"],
        ).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())

    model.load_state_dict(state, strict=True)
    model.eval()

    train_cfg = None
    if header.get("train_config"):
        train_cfg = TrainConfig.from_dict(header["train_config"])
    return LoadedCheckpoint(model=model, train_config=train_cfg, header=header)
