"""Context encoder: masking, padding invariance, and the frozen copy."""

import pytest
import torch

from spantag.encoder import EncoderConfig, NeighborMix, TokenEncoder, freeze, frozen_copy
from spantag.errors import ConfigError, DataError
from spantag.vocab import PAD_ID

from conftest import tiny_encoder_config


def make_encoder(**overrides) -> TokenEncoder:
    torch.manual_seed(0)
    return TokenEncoder(vocab_size=24, cfg=tiny_encoder_config(**overrides)).double()


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_encoder_config(embed_dim=0).validate()
    with pytest.raises(ConfigError):
        tiny_encoder_config(embed_dim=16, n_heads=3).validate()
    with pytest.raises(ConfigError):
        tiny_encoder_config(dropout=1.5).validate()
    tiny_encoder_config().validate()


def test_config_dict_round_trip():
    cfg = tiny_encoder_config(embed_dim=8, n_heads=2)
    assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


def test_output_shape_and_dtype():
    enc = make_encoder()
    ids = torch.tensor([[2, 3, 4, 5]])
    out = enc(ids)
    assert out.shape == (1, 4, 16)
    assert out.dtype == torch.float64


def test_padding_does_not_change_real_token_embeddings():
    """Masked positions must not leak into real ones through attention."""
    enc = make_encoder()
    enc.eval()
    short = torch.tensor([[2, 3, 4]])
    padded = torch.tensor([[2, 3, 4, PAD_ID, PAD_ID]])
    mask = torch.tensor([[True, True, True, False, False]])
    a = enc(short)
    b = enc(padded, mask)
    assert torch.allclose(a[0], b[0, :3], atol=1e-12)


def test_position_changes_representation():
    enc = make_encoder()
    enc.eval()
    out = enc(torch.tensor([[2, 2]]))
    assert not torch.allclose(out[0, 0], out[0, 1])


def test_rejects_out_of_range_ids_and_overlong_input():
    enc = make_encoder()
    with pytest.raises(DataError):
        enc(torch.tensor([[99]]))
    with pytest.raises(DataError):
        enc(torch.tensor([[2] * 33]))


def test_encode_one_matches_batched_forward():
    enc = make_encoder()
    enc.eval()
    ids = [2, 5, 7]
    single = enc.encode_one(ids)
    batched = enc(torch.tensor([ids]))[0]
    assert torch.allclose(single, batched)
    with pytest.raises(DataError):
        enc.encode_one([])


def test_neighbor_mix_reads_adjacent_positions():
    torch.manual_seed(0)
    mix = NeighborMix(dim=4, init_std=0.1).double()
    x = torch.randn(1, 3, 4, dtype=torch.float64)
    mask = torch.ones(1, 3, dtype=torch.bool)
    out = mix(x, mask)
    # middle position: residual plus linear reads of both neighbors
    expected = x[0, 1] + mix.left(x[0, 0]) + mix.right(x[0, 2])
    assert torch.allclose(out[0, 1], expected)
    # first position has no left neighbor; that read contributes only bias-free zero input
    expected_first = x[0, 0] + mix.left(torch.zeros(4, dtype=torch.float64)) + mix.right(x[0, 1])
    assert torch.allclose(out[0, 0], expected_first)


def test_neighbor_mix_treats_padding_as_absent():
    torch.manual_seed(0)
    mix = NeighborMix(dim=4, init_std=0.1).double()
    x = torch.randn(1, 3, 4, dtype=torch.float64)
    full = torch.ones(1, 3, dtype=torch.bool)
    cut = torch.tensor([[True, True, False]])
    with_pad = mix(x, cut)
    # last real position must look like having no right neighbor at all
    truncated = mix(x[:, :2], full[:, :2])
    assert torch.allclose(with_pad[0, 1], truncated[0, 1])


def test_freeze_disables_grads_and_training_mode():
    enc = make_encoder()
    freeze(enc)
    assert not enc.training
    assert all(not p.requires_grad for p in enc.parameters())


def test_frozen_copy_is_detached_from_source():
    enc = make_encoder()
    copy = frozen_copy(enc)
    assert all(not p.requires_grad for p in copy.parameters())
    ids = torch.tensor([[2, 3]])
    enc.eval()
    before = copy(ids).clone()
    with torch.no_grad():
        enc.embed.weight += 1.0
    after = copy(ids)
    assert torch.allclose(before, after)
    assert not torch.allclose(enc(ids), after)


def test_pad_embedding_row_is_zero():
    enc = make_encoder()
    assert torch.all(enc.embed.weight[PAD_ID] == 0)
