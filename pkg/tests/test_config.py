import pytest

from fisherda.config import ExperimentConfig, load_config, parse_config
from fisherda.errors import ConfigError


def test_parse_round_trip():
    cfg = ExperimentConfig(transfer="mmd", fisher="trace_ratio", lambda0=0.1, feature_hidden=(4, 5),
                           blob_shift=(0.5, -1.0), mmd_unbiased=True, seed=42)
    assert parse_config(cfg.echo(), apply_env=False) == cfg


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\ntransfer = coral  # trailing\nlambda2=10\n", apply_env=False)
    assert cfg.transfer == "coral" and cfg.lambda2 == 10.0


@pytest.mark.parametrize("text", ["nonsense", "unknown_key = 1", "lambda0 = abc", "seed = -1",
                                  "transfer = jan", "batch_size = 35", "mmd_unbiased = maybe"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text, apply_env=False)


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv("FISHERDA_SEED", "99")
    assert parse_config("seed = 1").seed == 99
    assert parse_config("seed = 1", apply_env=False).seed == 1


def test_grid_validation():
    ok = dict(validate_grid=True, fisher="trace_difference", lambda0=1e-4, lambda_b=5.0,
              lambda1=0.1, lambda2=1.0, lr=0.001)
    ExperimentConfig(**ok)
    for key, value in [("lambda0", 0.01), ("lambda_b", 2.0), ("lambda1", 0.2), ("lambda2", 3.0),
                       ("lr", 0.01)]:
        with pytest.raises(ConfigError):
            ExperimentConfig(**{**ok, key: value})
    with pytest.raises(ConfigError):
        ExperimentConfig(validate_grid=True, fisher="trace_ratio", lambda0=1e-3, lr=0.001)
    ExperimentConfig(validate_grid=True, fisher="trace_ratio", lambda0=1.0, lr=0.0003)


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")
