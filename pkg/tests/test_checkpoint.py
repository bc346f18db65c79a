"""Checkpoint format: byte-exact round trips and corruption diagnostics."""

import hashlib
import json
import struct

import pytest
import torch

from spantag.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    load_checkpoint,
    read_header,
    save_checkpoint,
)
from spantag.errors import CheckpointError
from spantag.model import SpanTagger
from spantag.training import TrainConfig

from conftest import tiny_model_config


def sha(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def saved(tmp_path, tiny_model):
    path = tmp_path / "model.ckpt"
    save_checkpoint(tiny_model, path, train_config=TrainConfig(seed=4), extra={"note": "t"})
    return path


def test_file_layout(saved):
    data = saved.read_bytes()
    assert data[:4] == MAGIC
    assert data[4] == FORMAT_VERSION
    (header_len,) = struct.unpack_from("<Q", data, 5)
    header = json.loads(data[13 : 13 + header_len])
    assert header["format_version"] == FORMAT_VERSION
    assert header["extra"] == {"note": "t"}
    names = [t["name"] for t in header["tensors"]]
    assert names == sorted(names)
    total = sum(t["nbytes"] for t in header["tensors"])
    assert len(data) == 13 + header_len + total


def test_round_trip_restores_everything(saved, tiny_model):
    loaded = load_checkpoint(saved)
    sa = tiny_model.state_dict()
    sb = loaded.model.state_dict()
    assert sa.keys() == sb.keys()
    for key in sa:
        assert torch.equal(sa[key], sb[key]), key
    assert loaded.model.vocab.tokens == tiny_model.vocab.tokens
    assert loaded.model.config == tiny_model.config
    assert loaded.train_config == TrainConfig(seed=4)
    assert not loaded.model.training


def test_save_is_byte_deterministic(tmp_path, tiny_model):
    a = tmp_path / "a.ckpt"
    b = tmp_path / "b.ckpt"
    save_checkpoint(tiny_model, a, train_config=TrainConfig())
    save_checkpoint(tiny_model, b, train_config=TrainConfig())
    assert sha(a) == sha(b)


def test_load_save_reproduces_bytes(saved, tmp_path):
    """Save(load(x)) must equal x byte for byte."""
    loaded = load_checkpoint(saved)
    again = tmp_path / "again.ckpt"
    save_checkpoint(loaded.model, again, train_config=loaded.train_config, extra={"note": "t"})
    assert sha(saved) == sha(again)


def test_read_header_only(saved):
    header = read_header(saved)
    assert "model_config" in header and "vocab" in header


def test_rejects_wrong_magic(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(CheckpointError, match="magic"):
        read_header(bad)


def test_rejects_short_file(tmp_path):
    bad = tmp_path / "short.ckpt"
    bad.write_bytes(b"SP")
    with pytest.raises(CheckpointError, match="too short"):
        read_header(bad)


def test_rejects_unknown_version(saved, tmp_path):
    data = bytearray(saved.read_bytes())
    data[4] = 99
    bad = tmp_path / "v99.ckpt"
    bad.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        read_header(bad)


def test_rejects_truncated_header(saved, tmp_path):
    bad = tmp_path / "cut.ckpt"
    bad.write_bytes(saved.read_bytes()[:20])
    with pytest.raises(CheckpointError, match="header"):
        read_header(bad)


def test_rejects_corrupt_header_json(saved, tmp_path):
    data = bytearray(saved.read_bytes())
    data[13] = ord("!")  # break the JSON open brace
    bad = tmp_path / "garbled.ckpt"
    bad.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="corrupt"):
        read_header(bad)


def test_rejects_truncated_payload(saved, tmp_path):
    bad = tmp_path / "trunc.ckpt"
    bad.write_bytes(saved.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(bad)


def rewrite_header(saved, tmp_path, mutate):
    """Apply ``mutate`` to the parsed header and write a patched checkpoint."""
    data = saved.read_bytes()
    (header_len,) = struct.unpack_from("<Q", data, 5)
    header = json.loads(data[13 : 13 + header_len])
    mutate(header)
    new_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    out = tmp_path / "patched.ckpt"
    out.write_bytes(
        data[:5] + struct.pack("<Q", len(new_header)) + new_header + data[13 + header_len :]
    )
    return out


def test_rejects_missing_tensor(saved, tmp_path):
    bad = rewrite_header(saved, tmp_path, lambda h: h["tensors"].pop())
    with pytest.raises(CheckpointError, match="missing"):
        load_checkpoint(bad)


def test_rejects_shape_mismatch(saved, tmp_path):
    def mutate(h):
        h["tensors"][0]["shape"] = [1, 1]

    bad = rewrite_header(saved, tmp_path, mutate)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(bad)


def test_rejects_unknown_dtype(saved, tmp_path):
    def mutate(h):
        h["tensors"][0]["dtype"] = "float16"

    bad = rewrite_header(saved, tmp_path, mutate)
    with pytest.raises(CheckpointError, match="dtype"):
        load_checkpoint(bad)


def test_rejects_missing_vocab(saved, tmp_path):
    bad = rewrite_header(saved, tmp_path, lambda h: h.pop("vocab"))
    with pytest.raises(CheckpointError, match="vocab"):
        load_checkpoint(bad)


def test_loaded_model_predicts_like_saved(saved, tiny_model, toy_descriptions):
    from spantag.decoding import DecodingConfig, tag_sentence

    loaded = load_checkpoint(saved).model
    cfg = DecodingConfig(gamma=-3.0)
    tokens = ["the", "furry", "cat", "sat"]
    for mode in ("few-shot", "zero-shot"):
        a = tag_sentence(tiny_model, tokens, toy_descriptions, mode, cfg)
        b = tag_sentence(loaded, tokens, toy_descriptions, mode, cfg)
        assert a == b


def test_no_train_config_round_trips_as_none(tmp_path, tiny_model):
    path = tmp_path / "bare.ckpt"
    save_checkpoint(tiny_model, path)
    loaded = load_checkpoint(path)
    assert loaded.train_config is None
