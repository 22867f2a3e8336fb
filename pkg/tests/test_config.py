import json

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from sadmjitter.config import ProjectConfig, dump_config, load_config
from sadmjitter.errors import ConfigError


@pytest.mark.parametrize("suffix", [".yaml", ".json"])
def test_roundtrip(tmp_path, suffix):
    cfg = ProjectConfig(seed=7)
    path = tmp_path / f"cfg{suffix}"
    dump_config(cfg, path)
    back = load_config(path, environ={})
    assert back == cfg and back.digest() == cfg.digest()


@given(st.floats(0.01, 1.0), st.integers(0, 1000))
def test_roundtrip_property(rate, seed):
    cfg = ProjectConfig(seed=seed, rates={"slow_deg_s": rate, "fast_deg_s": -rate})
    assert ProjectConfig.model_validate(json.loads(json.dumps(cfg.model_dump(mode="json")))) == cfg


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"hub": {"mas": 1.0}}))
    with pytest.raises(ConfigError):
        load_config(p, environ={})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        load_config(None, environ={"SADMJITTER_HUB__MASS": "-3"})
    with pytest.raises(ConfigError):
        load_config(None, environ={"SADMJITTER_DRIVE_AXIS": "[0, 0, 2]"})
    with pytest.raises(ConfigError):
        load_config(None, environ={"SADMJITTER_HUB__INERTIA": "[[1, 2, 0], [0, 1, 0], [0, 0, 1]]"})


def test_environment_override():
    cfg = load_config(None, environ={"SADMJITTER_SEED": "42", "SADMJITTER_RATES__FAST_DEG_S": "-0.3",
                                     "OTHER": "x"})
    assert cfg.seed == 42 and cfg.rates.fast_deg_s == -0.3
    assert cfg.rates.get("fast") == pytest.approx(np.deg2rad(-0.3))
    with pytest.raises(ConfigError):
        cfg.rates.get("medium")


def test_unreadable_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml", environ={})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad, environ={})
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(lst, environ={})


def test_digest_changes_with_content():
    assert ProjectConfig().digest() != ProjectConfig(seed=1).digest()
