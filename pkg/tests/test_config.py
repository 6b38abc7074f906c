import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2wat.errors import ConfigurationError, FormatError
from s2wat.config import RunConfig, load_config, parse_config_text, preset


def test_presets():
    full, desk = preset("full"), preset("desk")
    assert full.embed_dim == 96 and full.heads == (3, 6, 12) and full.warmup == 1000
    assert desk.embed_dim == 16 and desk.crop_size == 32
    with pytest.raises(ConfigurationError):
        preset("huge")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigurationError, match="unknown config key"):
        parse_config_text("learning_rate = 1")
    with pytest.raises(FormatError):
        parse_config_text("just words")
    with pytest.raises(ConfigurationError):
        parse_config_text("iters = many")


def test_text_parsing_and_preset_line():
    cfg = parse_config_text("preset = desk  # small\nheads = 1,1,1\nattn_merge_softmax = yes\n\nlr = 0.5\n")
    assert cfg.embed_dim == 16 and cfg.heads == (1, 1, 1) and cfg.attn_merge_softmax and cfg.lr == 0.5


def test_override_order_and_seed_env(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 3\niters = 7\n")
    cfg = load_config(path, "desk", {"iters": "9"}, environ={})
    assert (cfg.seed, cfg.iters) == (3, 9)
    assert load_config(path, "desk", {"seed": "4"}, environ={"S2WAT_SEED": "11"}).seed == 11
    with pytest.raises(FormatError):
        load_config(tmp_path / "nope.cfg", environ={})


@pytest.mark.parametrize("key,value", [("iters", "0"), ("lr", "-1"), ("warmup", "-2"), ("dtype", "float16"),
                                       ("attention", "shifted"), ("lambda_style", "-1")])
def test_validation(key, value):
    with pytest.raises(ConfigurationError):
        preset("desk").with_overrides({key: value}).validate()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 64), st.floats(1e-6, 1.0), st.booleans(), st.sampled_from(["full", "desk"]))
def test_text_roundtrip(dim, lr, softmax, name):
    cfg = preset(name).with_overrides({"embed_dim": dim, "lr": lr, "attn_merge_softmax": softmax})
    assert parse_config_text(cfg.to_text()) == cfg


def test_model_config_and_dtype():
    cfg = preset("desk").with_overrides({"dtype": "float64"})
    assert cfg.np_dtype == np.float64
    assert cfg.model_config().encoder.embed_dim == 16
    assert cfg.loss_weights().id1 == 50.0
    assert RunConfig().validate().iters == 40000
