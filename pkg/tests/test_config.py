import copy
import json
from pathlib import Path

import numpy as np
import pytest

from eprsim import spectral as sp
from eprsim.config import load_config, paper_config, parse_config
from eprsim.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_paper_config_matches_paper_params():
    cfg = parse_config(paper_config())
    p = sp.paper_params()
    assert cfg.experiment.r0 == pytest.approx(p.r0, rel=1e-14)
    assert cfg.experiment.eta_total == pytest.approx(p.eta_total, rel=1e-14)
    assert cfg.experiment.chain == p.chain
    assert cfg.acquisition.n_frames == 5000 and cfg.acquisition.n_points == 5121
    assert cfg.lock is None


def test_shipped_paper_config_is_the_default():
    assert json.loads((CONFIGS / "paper.json").read_text()) == paper_config()


@pytest.mark.parametrize("name", ["paper.json", "efficiency_check.json", "paper_with_lock.json"])
def test_shipped_configs_validate(name):
    load_config(CONFIGS / name)


def test_minimal_config_uses_defaults():
    cfg = parse_config({"version": 1})
    assert cfg.experiment.eta_state == sp.STATE_EFFICIENCY
    assert cfg.max_lag == 48 and cfg.band == 66e9


@pytest.mark.parametrize(
    "raw",
    [
        {},
        {"version": 2},
        {"version": 1, "colour": "blue"},
        {"version": 1, "experiment": {"eta_state": 1.5}},
        {"version": 1, "experiment": {"gain_db": -3}},
        {"version": 1, "experiment": {"chain": [{"kind": "notch", "cutoff_hz": 1e9}]}},
        {"version": 1, "experiment": {"target_db": 1.0}},
        {"version": 1, "acquisition": {"n_points": 1.5}},
        {"version": 1, "acquisition": {"seed": -1}},
        {"version": 1, "mode": {"shape": "square"}},
        {"version": 1, "lock": {"unknown": 1}},
    ],
)
def test_schema_violations(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


@pytest.mark.parametrize(
    "raw",
    [
        {"version": 1, "experiment": {"r0": 1.0, "target_db": -3.0}},
        {"version": 1, "experiment": {"target_db": -20.0}},
        {"version": 1, "experiment": {"clearance_db": [[2e9, 10], [1e9, 12]]}},
        {"version": 1, "acquisition": {"n_points": 50}},
        {"version": 1, "lock": {"control_s": 100e-6}},
        {"version": 1, "mode": {"period_s": 1e-12}},
    ],
)
def test_semantic_violations(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_squeezing_given_in_db():
    cfg = parse_config({"version": 1, "experiment": {"source_squeezing_db": 10.0}})
    assert np.exp(-2 * cfg.experiment.r0) == pytest.approx(0.1, rel=1e-12)
    cfg = parse_config({"version": 1, "experiment": {"r0": 0.4}})
    assert cfg.experiment.r0 == 0.4


def test_seed_override_keeps_everything_else():
    cfg = parse_config(paper_config())
    other = cfg.with_seed(99)
    assert other.acquisition.seed == 99
    assert other.experiment == cfg.experiment


def test_parse_does_not_alias_input():
    raw = paper_config()
    cfg = parse_config(raw)
    raw["experiment"]["gain_db"] = 3.0
    assert cfg.raw["experiment"]["gain_db"] == 25.0
    assert copy.deepcopy(cfg.raw) == paper_config()


def test_lock_section():
    cfg = parse_config({"version": 1, "lock": {"drift_rad2_per_s": 10.0, "n_cycles": 5}})
    assert cfg.lock.drift == 10.0
    assert cfg.lock_cycles == 5 and cfg.lock_applied
    cfg = parse_config({"version": 1, "lock": {"apply_to_model": False}})
    assert not cfg.lock_applied


def test_invalid_json_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.json")
