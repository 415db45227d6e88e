import math

import numpy as np
import pytest

from streamnet.config import ExperimentConfig, dump_config, load_config
from streamnet.errors import ConfigError


def test_defaults_validate():
    cfg = load_config(text="")
    assert cfg == ExperimentConfig()
    cfg.validate()


def test_dump_then_load_round_trips():
    cfg = load_config(text="seed: 5\nnetwork:\n  layers:\n    - {inputs: 2, outputs: 3, lambda: 0.5}\n")
    again = load_config(text=dump_config(cfg))
    assert again == cfg
    assert "lambda: 0.5" in dump_config(cfg)


def test_lambda_alias_and_period():
    cfg = load_config(text="tracking:\n  lambda: 0.8\n  signal: {period: 100}\n")
    assert cfg.tracking.lam == 0.8
    assert cfg.tracking.signal.frequency == pytest.approx(2 * math.pi / 100)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="network.bogus"):
        load_config(text="network:\n  bogus: 1\n")


def test_bad_type_rejected():
    with pytest.raises(ConfigError):
        load_config(text="seed: hello\n")


def test_invalid_lambda_fails_validation():
    cfg = load_config(text="network:\n  layers:\n    - {lambda: 1.0}\n")
    with pytest.raises(ConfigError):
        cfg.validate()


def test_network_weights_are_seed_determined():
    a = load_config(text="seed: 3").network_spec()
    b = load_config(text="seed: 3").network_spec()
    c = load_config(text="seed: 4").network_spec()
    assert a.digest == b.digest != c.digest


def test_explicit_weights_win():
    cfg = load_config(text="network:\n  layers:\n    - {W: [[2.0]], W_s: [[0.0]], b: [1.0], activation: identity}\n")
    p = cfg.network_spec().layers[0]
    assert p.W.tolist() == [[2.0]] and p.b.tolist() == [1.0]


def test_signal_seed_falls_back_to_master_seed():
    cfg = load_config(text="seed: 11")
    assert cfg.tracking_experiment().signal.seed == 11
    cfg = load_config(text="seed: 11\ntracking: {signal: {seed: 2}}")
    assert cfg.tracking_experiment().signal.seed == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_phase_defaults():
    exp = ExperimentConfig().phase_experiment()
    assert exp.params.W.tolist() == [[1.0]]
    assert exp.params.W_s.tolist() == [[0.5]]
    assert exp.params.lam == 0.9
    assert np.isclose(exp.signal.frequency, 2 * math.pi / 50)
