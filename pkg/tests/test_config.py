import json

import pytest

from ssdpt.augment import MaskSpec
from ssdpt.config import CONFIG_SCHEMA, ConfigError, RunConfig, from_dict, load_config, override


def test_defaults_match_reported_settings():
    cfg = load_config()
    assert (cfg.features.window_size, cfg.features.hop, cfg.features.n_mels) == (1024, 512, 128)
    assert (cfg.segmentation.frame_length, cfg.segmentation.hop_train, cfg.segmentation.hop_test) == (64, 8, 1)
    assert cfg.training.alpha == 0.001 and cfg.scoring.beta == 0.001
    assert cfg.training.learning_rate == 1e-4 and cfg.training.weight_decay == 0.01
    assert cfg.training.epochs == 100 and cfg.training.batch_size == 64
    assert cfg.augment.mask == MaskSpec("PM", k=3, r=5) and cfg.augment.mixup_a == 0.2
    assert cfg.evaluation.p == 0.1 and cfg.evaluation.tie_policy == "half"


def test_desk_profile():
    assert load_config(profile="desk").training.epochs == 20


def test_roundtrip(tmp_path):
    cfg = from_dict({"augment": {"mask": {"kind": "TM", "k": 2, "width": 4}}, "training": {"seed": 9}})
    path = tmp_path / "c.json"
    cfg.dump(path)
    doc = json.loads(path.read_text())
    assert doc["schema"] == CONFIG_SCHEMA
    back = load_config(path)
    assert back == cfg
    assert back.augment.mask.kind == "TM"


def test_train_config_bridge():
    tc = from_dict({"training": {"epochs": 3}, "augment": {"mixup_a": 0.4}}).train_config()
    assert tc.epochs == 3 and tc.mixup_a == 0.4 and tc.mask_spec == MaskSpec()


@pytest.mark.parametrize("doc, match", [
    ({"schema": "ssdpt-config-0"}, "schema"),
    ({"bogus": {}}, "unknown config section"),
    ({"training": {"lr": 1}}, "unknown key"),
    ({"model": {"heads": 7}}, "divisible"),
    ({"segmentation": {"mode": "loose"}}, "mode"),
    ({"evaluation": {"p": 0}}, "p must"),
    ({"augment": {"mask": {"kind": "XM"}}}, "mask kind"),
    ({"augment": {"mask": {"kind": "PM", "r": 100}}}, None),
    ({"features": {"n_mels": 0}}, None),
    ({"scoring": {"beta": -1}}, "beta"),
    ({"profile": "huge"}, "profile"),
])
def test_validation_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(doc)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_override():
    cfg = RunConfig()
    assert override(cfg, "training", epochs=None) is cfg
    assert override(cfg, "training", epochs=0).training.epochs == 0
    assert override(cfg, "scoring", beta=0.0).scoring.beta == 0.0
    with pytest.raises(ConfigError):
        override(cfg, "training", batch_size=0)
