import json

import pytest

from cyclegen.config import ExperimentConfig, config_from_dict, dump_config, load_config
from cyclegen.errors import ConfigError

BASE = {"data": {"surrogate": {"n_cycles": 30}}, "K": 20, "l": 32}


def test_defaults_and_sync():
    cfg = config_from_dict({**BASE, "seeds": {"gan": 7}})
    assert cfg.gan.l == 32
    assert cfg.gan_train.seed == 7
    assert cfg.m == 2 and cfg.predictor.cell_type == "GRU"
    assert cfg.data.surrogate.n_cycles == 30


def test_round_trip(tmp_path):
    cfg = config_from_dict({**BASE, "evaluate": {"models": ["gru"]}})
    dump_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg
    # manifests embed the config under "config"
    assert config_from_dict({"config": cfg.to_dict(), "versions": {}}) == cfg


@pytest.mark.parametrize("bad, msg", [
    ({**BASE, "epochs": 3}, "unknown"),
    ({**BASE, "gan": {"hidden": 3}}, "unknown"),
    ({**BASE, "gan_train": {"seed": 1}}, "seeds.gan"),
    ({"K": 3}, "data"),
    ({**BASE, "data": {}}, "no data source"),
    ({**BASE, "data": {"cycles_path": "a.csv"}}, "capacity_path"),
    ({**BASE, "data": {"cycles_path": "a", "capacity_path": "b", "surrogate": {}}}, "not both"),
    ({**BASE, "m": 20}, "window"),
    ({**BASE, "gan_train": {"batch_size": 0}}, "batch_size"),
    ({**BASE, "data": {"surrogate": {"fade_rate": 0.5}}}, "fade_rate"),
])
def test_rejects(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(bad)


def test_bad_json_reports_position(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "K": 3,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_output_dir_precedence(monkeypatch, tmp_path):
    cfg = config_from_dict(BASE)
    monkeypatch.delenv("CYCLEGEN_OUT", raising=False)
    assert str(cfg.output_dir()) == "cyclegen_out"
    monkeypatch.setenv("CYCLEGEN_OUT", str(tmp_path / "env"))
    assert cfg.output_dir() == tmp_path / "env"
    cfg2 = config_from_dict({**BASE, "out_dir": str(tmp_path / "cfg")})
    assert cfg2.output_dir() == tmp_path / "cfg"
    assert cfg2.output_dir(tmp_path / "flag") == tmp_path / "flag"


def test_canonical_source():
    cfg = config_from_dict({"data": {"cycles_path": "c.csv", "capacity_path": "q.csv",
                                     "battery_id": "B0005"}})
    assert cfg.data.surrogate is None and cfg.K == 100
    assert isinstance(cfg, ExperimentConfig)
    json.dumps(cfg.to_dict())
