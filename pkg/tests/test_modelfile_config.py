import json

import numpy as np
import pytest

from bipkit.config import RunConfig, config_from_dict, load_config
from bipkit.errors import ConfigError, ParseError
from bipkit.modelfile import FORMAT_VERSION, dumps_model, load_model, model_from_dict, model_to_dict, save_model
from bipkit.response import LoopRates


def test_model_round_trip(small_model, tmp_path):
    path = tmp_path / "model.json"
    save_model(small_model, path)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.mean, small_model.mean)
    np.testing.assert_array_equal(loaded.Sigma0, small_model.Sigma0)
    np.testing.assert_array_equal(loaded.dof_range, small_model.dof_range)
    assert loaded.basis == small_model.basis
    assert loaded.layout == small_model.layout
    assert (loaded.sample_rate, loaded.demo_count) == (small_model.sample_rate, small_model.demo_count)
    assert dumps_model(loaded) == dumps_model(small_model)


def test_model_bytes_are_deterministic(small_demos, small_model):
    from bipkit.prior import learn_prior

    assert dumps_model(learn_prior(small_demos)) == dumps_model(small_model)


def test_model_format_errors(small_model, tmp_path):
    doc = model_to_dict(small_model)
    with pytest.raises(ParseError):
        model_from_dict({**doc, "format_version": FORMAT_VERSION + 1})
    broken = dict(doc)
    del broken["w0"]
    with pytest.raises(ParseError):
        model_from_dict(broken)
    with pytest.raises(ParseError):
        model_from_dict({**doc, "Sigma0": [[1.0]]})
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError) as info:
        load_model(path)
    assert info.value.line == 1


def test_config_defaults_round_trip():
    cfg = RunConfig()
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 4, "basis_count": 9, "evaluation": {"observed_threshold": 1e-5}}))
    cfg = load_config(path)
    assert (cfg.seed, cfg.basis_count, cfg.evaluation.thresholds[0]) == (4, 9, 1e-5)
    flagged = cfg.with_overrides(seed=7, rates=LoopRates(60, 6, 20))
    assert flagged.seed == 7 and flagged.basis_count == 9 and flagged.rates.sample_hz == 60
    assert cfg.with_overrides() == cfg


@pytest.mark.parametrize(
    "doc",
    [
        {"colour": 1},
        {"noise": {"relative": 0.1}},
        {"rates": {"sample_hz": 30, "inference_hz": 7, "execution_hz": 10}},
        {"basis_count": 1},
        {"alpha": 0.0},
        {"seed": -1},
        {"simulation": {"targets": 1, "repetitions": 1}},
        {"evaluation": {"window_s": 0}},
        {"noise": "loud"},
    ],
)
def test_config_rejects_bad_documents(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("[1,")
    with pytest.raises(ConfigError):
        load_config(bad)
