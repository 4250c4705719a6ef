"""Run configuration: defaults, dotted overrides, files and environment."""

import os

import pytest

from scenemc.core.config import RunConfig, parse_pairs
from scenemc.core.errors import ConfigError


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """No stray .env or SCENEMC_ variables leak into a test."""
    monkeypatch.chdir(tmp_path)
    for key in list(os.environ):
        if key.startswith("SCENEMC_"):
            monkeypatch.delenv(key)


def test_defaults():
    config = RunConfig()
    assert config.schedule.phase1.iters == 3000
    assert config.weights.w_hoi == 1.0
    assert config.ablation == "full"
    assert config.class_sizes["chair"] == (0.5, 0.5, 0.9)
    assert config.prior_file is None


def test_dump_defaults_lists_dotted_keys():
    text = RunConfig.dump_defaults()
    assert "schedule.phase1.iters = 3000" in text.splitlines()
    assert "weights.w_support = 1.0" in text.splitlines()
    assert "prior_file = null" in text.splitlines()


def test_parse_pairs():
    pairs = parse_pairs('# comment\n\nseed = 4\nablation = "no-hoi"\nclass_sizes.cup = [0.1, 0.1, 0.1]\n'
                        "object_likelihood = hull-bounds\n")
    assert pairs == {"seed": 4, "ablation": "no-hoi", "class_sizes.cup": [0.1, 0.1, 0.1],
                     "object_likelihood": "hull-bounds"}


def test_parse_pairs_rejects_bare_words():
    with pytest.raises(ConfigError):
        parse_pairs("seed 4\n")


def test_dotted_overrides():
    config = RunConfig.from_pairs({"weights.w_hoi": 0.0, "schedule.phase3.t0": 2.5, "class_sizes.cup": [0.1, 0.1, 0.2]})
    assert config.weights.w_hoi == 0.0
    assert config.schedule.phase3.t0 == 2.5
    assert config.schedule.phase1.t0 == 1.0
    assert config.class_sizes["cup"] == (0.1, 0.1, 0.2)
    assert config.class_sizes["chair"] == (0.5, 0.5, 0.9)


@pytest.mark.parametrize("pairs", [
    {"weights.w_hoi": -1.0},
    {"schedule.phase1.gamma": 1.5},
    {"ablation": "no-likelihood"},
    {"unknown_key": 1},
    {"class_sizes.chair": [0.5, 0.0, 0.9]},
    {"prior_file": "/nonexistent/priors.json"},
    {"seed.value": 3},
])
def test_invalid_values(pairs):
    with pytest.raises(ConfigError):
        RunConfig.from_pairs(pairs)


def test_effective_weights_apply_ablation():
    config = RunConfig.from_pairs({"ablation": "no-phy", "weights.w_hoi": 2.0})
    weights = config.effective_weights()
    assert weights.w_support == weights.w_collision == 0.0
    assert weights.w_hoi == 2.0


def test_file_then_environment(tmp_path, monkeypatch):
    path = tmp_path / "run.conf"
    path.write_text("seed = 4\nschedule.phase1.iters = 20\n")
    monkeypatch.setenv("SCENEMC_SCHEDULE__PHASE1__ITERS", "10")
    config = RunConfig.load_config(path)
    assert config.seed == 4
    assert config.schedule.phase1.iters == 10


def test_config_file_from_environment(tmp_path, monkeypatch):
    path = tmp_path / "run.conf"
    path.write_text("hoi_confidence = 0.7\n")
    monkeypatch.setenv("SCENEMC_CONFIG", str(path))
    assert RunConfig.load_config().hoi_confidence == 0.7


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load_config(tmp_path / "absent.conf")


def test_save_and_reload(tmp_path):
    config = RunConfig.from_pairs({"seed": 9, "floor_z": -0.1, "support_priors.lambda_s": 0.5})
    path = tmp_path / "nested" / "run.conf"
    config.save_config(path)
    assert RunConfig.load_config(path).model_dump() == config.model_dump()
