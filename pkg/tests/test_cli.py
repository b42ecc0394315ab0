import json

import pytest

from cyclegen.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main

TINY = {
    "data": {"surrogate": {"n_cycles": 24, "samples_per_cycle": 32, "fade_rate": 0.006,
                           "regen_prob": 0.1, "seed": 1}},
    "K": 16, "l": 16, "m": 2,
    "gan": {"d": 2, "g_hidden": 4, "d_hidden": 4},
    "gan_train": {"iterations": 30, "batch_size": 4},
    "predictor": {"hidden": 8, "layers": 1},
    "predictor_train": {"epochs": 3, "batch_size": 8},
    "evaluate": {"perplexity": 5, "tsne_iterations": 250},
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(TINY))
    return p


def _run(*argv):
    return main([str(a) for a in argv])


def test_full_pipeline_and_replay(tmp_path, config):
    out = tmp_path / "run"
    assert _run("run", "--config", config, "--out", out) == EXIT_OK
    rep = out / "report"
    for name in ("loss_curves.csv", "pca.csv", "tsne.csv", "pca_test.csv", "tsne_test.csv",
                 "metrics.csv", "metrics_smooth.csv", "predictions.csv", "overlap.json",
                 "manifest.json"):
        assert (rep / name).exists(), name
    rows = (rep / "metrics.csv").read_text().splitlines()
    assert rows[0] == "battery,model,dataset,rmse,mae"
    assert len(rows) == 1 + 4  # GRU/LSTM x original/augmented
    assert len((out / "gan" / "loss_curves.csv").read_text().splitlines()) == 31
    manifest = json.loads((rep / "manifest.json").read_text())
    assert manifest["config"]["K"] == 16

    # replay from the manifest reproduces the artifacts byte for byte
    replay_cfg = tmp_path / "replay.json"
    replay_cfg.write_text((rep / "manifest.json").read_text())
    out2 = tmp_path / "replay"
    assert _run("run", "--config", replay_cfg, "--out", out2) == EXIT_OK
    for name in ("metrics.csv", "pca.csv", "tsne.csv", "loss_curves.csv", "predictions.csv"):
        assert (rep / name).read_bytes() == (out2 / "report" / name).read_bytes(), name


def test_stepwise_gru_no_augment(tmp_path, config):
    out = tmp_path / "steps"
    for cmd in ("synth-data", "preprocess", "train-gan"):
        assert _run(cmd, "--config", config, "--out", out) == EXIT_OK
    assert (out / "preprocessed" / "train.csv").read_text().startswith(
        "cycle,t_index,v_norm,i_norm,t_norm")
    assert _run("augment", "--config", config, "--out", out, "--no-augment") == EXIT_OK
    assert _run("evaluate", "--config", config, "--out", out, "--models", "gru",
                "--no-augment") == EXIT_OK
    rows = (out / "report" / "metrics.csv").read_text().splitlines()[1:]
    assert len(rows) == 1 and ",GRU,original," in rows[0]
    assert not (out / "predictors" / "lstm_original.pt").exists()


def test_resume_training(tmp_path, config):
    out = tmp_path / "r"
    for cmd in ("synth-data", "preprocess"):
        _run(cmd, "--config", config, "--out", out)
    assert _run("train-gan", "--config", config, "--out", out, "--iterations", "12") == EXIT_OK
    ckpt = out / "gan" / "checkpoint.pt"
    assert _run("train-gan", "--config", config, "--out", out, "--resume", ckpt) == EXIT_OK
    resumed = (out / "gan" / "loss_curves.csv").read_text()
    out2 = tmp_path / "straight"
    for cmd in ("synth-data", "preprocess", "train-gan"):
        _run(cmd, "--config", config, "--out", out2)
    assert (out2 / "gan" / "loss_curves.csv").read_text() == resumed


def test_env_output_root(tmp_path, config, monkeypatch):
    monkeypatch.setenv("CYCLEGEN_OUT", str(tmp_path / "envout"))
    assert _run("synth-data", "--config", config) == EXIT_OK
    assert (tmp_path / "envout" / "cycles.csv").exists()


def test_missing_checkpoint_is_data_error(tmp_path, config, capsys):
    out = tmp_path / "m"
    _run("synth-data", "--config", config, "--out", out)
    _run("preprocess", "--config", config, "--out", out)
    assert _run("generate", "--config", config, "--out", out) == EXIT_DATA
    assert "checkpoint" in capsys.readouterr().err


def test_missing_inputs(tmp_path, config):
    assert _run("preprocess", "--config", config, "--out", tmp_path / "e") == EXIT_DATA


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"data": {"surrogate": {}}, "K": 10, "oops": 1}')
    assert _run("preprocess", "--config", bad, "--out", tmp_path) == EXIT_CONFIG
    assert "oops" in capsys.readouterr().err
    bad.write_text("{not json")
    assert _run("preprocess", "--config", bad, "--out", tmp_path) == EXIT_CONFIG


def test_canonical_source(tmp_path, config):
    out = tmp_path / "s"
    _run("synth-data", "--config", config, "--out", out)
    cfg = dict(TINY, data={"cycles_path": str(out / "cycles.csv"),
                           "capacity_path": str(out / "capacity.csv")})
    p = tmp_path / "canon.json"
    p.write_text(json.dumps(cfg))
    assert _run("preprocess", "--config", p, "--out", tmp_path / "c") == EXIT_OK
    assert _run("synth-data", "--config", p, "--out", tmp_path / "c") == EXIT_CONFIG


def test_schema_error_exit(tmp_path):
    (tmp_path / "c.csv").write_text("battery_id,cycle,time_s\nB,1,0\n")
    (tmp_path / "q.csv").write_text("battery_id,cycle,capacity_ah\nB,1,1.0\n")
    p = tmp_path / "x.json"
    p.write_text(json.dumps(dict(TINY, data={"cycles_path": str(tmp_path / "c.csv"),
                                             "capacity_path": str(tmp_path / "q.csv")})))
    assert _run("preprocess", "--config", p, "--out", tmp_path / "o") == EXIT_DATA


def test_numerical_failure_exit(tmp_path, config, monkeypatch):
    from cyclegen import cli
    from cyclegen.cli import EXIT_NUMERIC
    from cyclegen.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("non-finite loss at iteration 7")

    monkeypatch.setattr(cli.rcgan, "run_training", boom)
    out = tmp_path / "n"
    _run("synth-data", "--config", config, "--out", out)
    _run("preprocess", "--config", config, "--out", out)
    assert _run("train-gan", "--config", config, "--out", out) == EXIT_NUMERIC
