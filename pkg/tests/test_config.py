import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from latentfuzz.config import CampaignConfig, ConfigError, derive_seed, parse_config


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg == CampaignConfig()
    assert (cfg.map_size, cfg.latent_dim, cfg.k, cfg.learning_rate) == (1024, 16, 5000, 1e-4)
    assert (cfg.batch_size, cfg.steps_per_pass, cfg.input_noise_sigma) == (64, 100, 0.1)
    assert parse_config(None) == cfg


def test_single_key():
    cfg = parse_config('{"k": 100}')
    assert cfg.k == 100 and cfg.replace(k=5000) == CampaignConfig()


def test_overrides_win_and_dashes_accepted():
    cfg = parse_config('{"k": 100, "seed": 3}', [("k", "200"), ("learning-rate", "0.5")])
    assert (cfg.k, cfg.seed, cfg.learning_rate) == (200, 3, 0.5)


@pytest.mark.parametrize("doc, field", [
    ('{"map_size": 1000}', "map_size"),
    ('{"k": 1}', "k"),
    ('{"str_len_max": 256}', "str_len_max"),
    ('{"dict_size": 128}', "dict_size"),
    ('{"batch_size": 0}', "batch_size"),
    ('{"learning_rate": -1}', "learning_rate"),
    ('{"profile": "huge"}', "profile"),
    ('{"target": "pdf"}', "target"),
    ('{"batch_norm": "maybe"}', "batch_norm"),
    ('{"k": 2.5}', "k"),
])
def test_invariant_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(doc)


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config('{"bogus": 1}')


def test_malformed_json():
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_full_scale_profile():
    cfg = parse_config('{"profile": "paper"}')
    assert (cfg.map_size, cfg.deconv_blocks, cfg.batch_norm) == (65536, 42, True)
    assert cfg.str_len_max == 512 and cfg.dict_size == 129
    assert parse_config('{"profile": "paper", "map_size": 4096}').map_size == 4096


def test_echo_roundtrip():
    cfg = parse_config('{"target": "csub", "vae_hidden": [256, 64], "mse_weight": 0}')
    assert parse_config(cfg.to_json()) == cfg
    assert json.loads(cfg.to_json())["vae_hidden"] == [256, 64]


def test_hidden_from_string():
    assert parse_config(None, [("vae_hidden", "64,32")]).vae_hidden == (64, 32)


@given(st.integers(0, 2**63), st.text(max_size=10), st.text(max_size=10))
def test_derive_seed(seed, a, b):
    s = derive_seed(seed, a)
    assert 0 <= s < 2**64 and s == derive_seed(seed, a)
    if a != b:
        assert s != derive_seed(seed, b)
