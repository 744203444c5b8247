"""Experiment-config parsing, validation, and echo rendering."""

import pytest

from spkfilter.config import ExperimentConfig, parse_config, render_config
from spkfilter.errors import ConfigError


def test_defaults_cover_every_key():
    cfg = ExperimentConfig.defaults()
    assert cfg.get("train", "lr_voicefilter") == 1e-5
    assert cfg.get("train", "lr_attention") == 1e-6
    assert cfg.get("train", "snr_low") == 1.0
    assert cfg.get("train", "snr_high") == 10.0
    assert cfg.get("train", "dropout_prob") == 0.25
    assert cfg.get("eval", "snrs") == (-5.0, 0.0, 5.0)
    assert cfg.get("gate", "threshold") == 0.5


def test_parse_file_and_overrides(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[train]\nsteps = 7\nlr_voicefilter = 2e-3\n"
                    "[model]\nstrategy = averaging\n")
    cfg = parse_config(path, overrides=["train.seed=5", "model.num_slots=4"])
    assert cfg.get("train", "steps") == 7
    assert cfg.get("train", "lr_voicefilter") == 2e-3
    assert cfg.get("model", "strategy") == "averaging"
    assert cfg.get("train", "seed") == 5
    assert cfg.get("model", "num_slots") == 4


def test_unknown_key_rejected_by_name(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[train]\nstepz = 7\n")
    with pytest.raises(ConfigError, match="stepz"):
        parse_config(path)


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[训练]\nsteps = 7\n")
    with pytest.raises(ConfigError):
        parse_config(path)


def test_missing_file_names_path():
    with pytest.raises(ConfigError, match="missing.ini"):
        parse_config("missing.ini")


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[train]\nsteps = many\n")
    with pytest.raises(ConfigError, match="steps"):
        parse_config(path)


def test_bad_override_shape():
    with pytest.raises(ConfigError):
        parse_config(None, overrides=["train.steps"])
    with pytest.raises(ConfigError):
        parse_config(None, overrides=["steps=3"])


def test_render_round_trips(tmp_path):
    cfg = parse_config(None, overrides=["train.steps=42",
                                        "eval.snrs=-5,0",
                                        "model.top_k=2"])
    text = render_config(cfg)
    path = tmp_path / "echo.ini"
    path.write_text(text)
    back = parse_config(path)
    assert back.values == cfg.values


def test_render_is_stable():
    cfg = ExperimentConfig.defaults()
    assert render_config(cfg) == render_config(cfg)


def test_train_config_builder():
    cfg = parse_config(None, overrides=["model.topology=desk_scale",
                                        "model.num_slots=4",
                                        "model.strategy=concat_top_k",
                                        "model.top_k=2"])
    tc = cfg.train_config()
    assert tc.num_slots == 4
    assert tc.model_config().top_k == 2
    assert tc.model_config().feat_dim == 48


def test_eval_conditions():
    cfg = parse_config(None, overrides=["eval.noise_kinds=none,speech",
                                        "eval.snrs=-5,5"])
    labels = [c.label() for c in cfg.eval_conditions()]
    assert labels == ["none", "speech@-5dB", "speech@5dB"]
