from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from ecdlab.config import (EXPERIMENTS, ConfigError, ExperimentConfig, config_from_mapping,
                           dump_config, load_config, parse_grid)

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.ini"))


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_every_experiment_has_a_shipped_config():
    assert sorted(p.stem for p in CONFIGS) == sorted(EXPERIMENTS)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_validate_and_round_trip(path, tmp_path):
    cfg = load_config(path)
    cfg.validate()
    again = load_config(write(tmp_path, dump_config(cfg)))
    assert again == cfg and again.digest() == cfg.digest()


@pytest.mark.parametrize("text,expected", [
    ("1, 2.5, 3", (1.0, 2.5, 3.0)),
    ("linspace(0, 1, 5)", (0.0, 0.25, 0.5, 0.75, 1.0)),
    ("logspace(-2, 0, 3)", (0.01, 0.1, 1.0)),
    ("arange(1, 2, 0.25)", (1.0, 1.25, 1.5, 1.75, 2.0)),
    ("arange(40, 140, 1)", tuple(float(v) for v in range(40, 141))),
    ("", ()),
])
def test_parse_grid(text, expected):
    assert parse_grid(text) == pytest.approx(expected)


def test_arange_grid_is_exact_decimal():
    g = parse_grid("arange(1, 12, 0.1)")
    assert len(g) == 111 and g[37] == 4.7


@pytest.mark.parametrize("text", ["linspace(0, 1)", "arange(0, 1, 0)", "logspace(0, 1, 2.5)",
                                  "1, two", "linspace(a, 1, 3)"])
def test_parse_grid_rejects(text):
    with pytest.raises(ConfigError):
        parse_grid(text)


def test_unknown_keys_rejected(tmp_path):
    p = write(tmp_path, "[experiment]\nexperiment = lzm_dynamics\nepsilom = 20\n")
    with pytest.raises(ConfigError, match="epsilom"):
        load_config(p)


@pytest.mark.parametrize("text", [
    "[experiment]\nepsilon = 20\n",
    "[experiment]\nexperiment = warp_drive\n",
    "[experiment]\nexperiment = lzm_dynamics\ntau = -1\n",
    "[experiment]\nexperiment = lzm_dynamics\nn_periods = 2.5\n",
    "[experiment]\nexperiment = lzm_dynamics\nnorm_convention = l1\n",
    "[experiment]\nexperiment = lzm_dynamics\nschema_version = 2\n",
    "[experiment]\nexperiment = lzm_dynamics\nsteps_per_period = 8\n",
    "[experiment]\nexperiment = robustness\ndelta_grid = 0.7\n",
    "[experiment]\nexperiment = lzm_dynamics\n[other]\nx = 1\n",
    "experiment = lzm_dynamics\n",
    "[experiment]\nexperiment = lzm_dynamics\nk = 1, 0\n",
    "[experiment]\nexperiment = scaling_order\nmodel = three_level\n",
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini")


def test_defaults_and_overrides():
    cfg = ExperimentConfig.for_experiment("standalone_sweep")
    assert cfg.k == (1.0, 0.5, 0.25)
    assert cfg.norm_convention == "literal" and cfg.lzm_strength_reference == "bracket"
    cfg = config_from_mapping({"experiment": "standalone_sweep", "k": "0.5", "tau": "3"})
    assert cfg.k == (0.5,) and cfg.tau == 3.0


def test_digest_ignores_output_dir_only():
    a = ExperimentConfig.for_experiment("lzm_dynamics")
    b = ExperimentConfig.for_experiment("lzm_dynamics", output_dir="/tmp/x")
    c = ExperimentConfig.for_experiment("lzm_dynamics", tau=21.0)
    assert a.digest() == b.digest() != c.digest()


def test_inline_comments_allowed(tmp_path):
    cfg = load_config(write(tmp_path, "[experiment]\nexperiment = lzm_dynamics  # the LZ sweep\n"
                                      "tau = 20 ; seconds\n"))
    assert cfg.tau == 20.0 and np.isclose(cfg.epsilon, 20.0)
