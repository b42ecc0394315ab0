"""Command line entry point: ``cyclegen <command> --config exp.json``.

Artifacts live under one output directory::

    cycles.csv, capacity.csv            synth-data
    preprocessed/{train,test}.{csv,json}   preprocess
    gan/checkpoint.pt, gan/loss_curves.csv train-gan
    synthetic/{train_cond,test_cond}.*     generate
    augmented.{csv,json}                 augment
    predictors/<model>_<dataset>.pt      train-predictor
    report/                              evaluate, report
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from cyclegen import augment, dataio, evaluate, predictor, preprocess, rcgan
from cyclegen.config import ExperimentConfig, load_config
from cyclegen.errors import (ConfigError, DataValidationError, MissingArtifactError,
                             NumericalError, SchemaError)

log = logging.getLogger("cyclegen")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MODELS = ("gru", "lstm")


class Paths:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.cycles = self.root / "cycles.csv"
        self.capacity = self.root / "capacity.csv"
        self.pre = self.root / "preprocessed"
        self.gan = self.root / "gan"
        self.checkpoint = self.gan / "checkpoint.pt"
        self.loss_curves = self.gan / "loss_curves.csv"
        self.synthetic = self.root / "synthetic"
        self.augmented_csv = self.root / "augmented.csv"
        self.augmented_json = self.root / "augmented.json"
        self.predictors = self.root / "predictors"
        self.report = self.root / "report"

    def split(self, name):
        return self.pre / f"{name}.csv", self.pre / f"{name}.json"

    def synth(self, name):
        return self.synthetic / f"{name}.csv", self.synthetic / f"{name}.json"

    def model(self, model, dataset):
        return self.predictors / f"{model}_{dataset}.pt"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {what}: {path} (run the upstream command first)")
    return path


# --- steps ------------------------------------------------------------------

def step_synth_data(cfg: ExperimentConfig, paths: Paths, seed=None) -> None:
    sc = cfg.data.surrogate
    if sc is None:
        raise ConfigError("synth-data needs data.surrogate in the config")
    if seed is not None:
        sc = replace(sc, seed=seed)
    ds = dataio.synth_surrogate(sc)
    dataio.write_canonical(ds, paths.cycles, paths.capacity)
    log.info("wrote %d surrogate cycles to %s", len(ds), paths.root)


def _load_dataset(cfg: ExperimentConfig, paths: Paths) -> dataio.CycleDataset:
    if cfg.data.surrogate is not None:
        return dataio.load_canonical(_require(paths.cycles, "surrogate cycles"),
                                     _require(paths.capacity, "surrogate capacities"))
    return dataio.load_canonical(_require(Path(cfg.data.cycles_path), "cycles CSV"),
                                 _require(Path(cfg.data.capacity_path), "capacity CSV"),
                                 cfg.data.battery_id)


def step_preprocess(cfg: ExperimentConfig, paths: Paths) -> None:
    ds = _load_dataset(cfg, paths)
    train, test = dataio.split_train_test(ds, cfg.K)
    for name, part in (("train", train), ("test", test)):
        m = min(cfg.m, (len(part) - 1) // 2)
        cycles = preprocess.preprocess_dataset(part, cfg.l, m)
        csv_path, json_path = paths.split(name)
        smooth = [c.c_smooth for c in cycles]
        preprocess.write_preprocessed(cycles, csv_path, json_path, ds.battery_id, extra={
            "l": cfg.l, "m": m, "smoothed_nonincreasing": preprocess.is_nonincreasing(smooth)})
    log.info("preprocessed %d train / %d test cycles", len(train), len(test))


def _read_split(paths: Paths, name: str):
    csv_path, json_path = paths.split(name)
    _require(csv_path, f"preprocessed {name} set")
    return preprocess.read_preprocessed(csv_path, _require(json_path, f"{name} sidecar"))


def _battery_id(paths: Paths) -> str:
    return json.loads(paths.split("train")[1].read_text()).get("battery_id", "")


def step_train_gan(cfg: ExperimentConfig, paths: Paths, iterations=None, seed=None,
                   resume=None) -> None:
    train = _read_split(paths, "train")
    tcfg = cfg.gan_train
    if iterations is not None:
        tcfg = replace(tcfg, iterations=iterations)
    if seed is not None:
        tcfg = replace(tcfg, seed=seed)
    if resume:
        state = rcgan.load_checkpoint(resume)
        state.cfg = replace(state.cfg, iterations=tcfg.iterations,
                            checkpoint_every=tcfg.checkpoint_every)
    else:
        state = rcgan.start_training(train, cfg.gan, tcfg)
    rcgan.run_training(state, train, checkpoint_dir=paths.gan)
    state.history.write_csv(paths.loss_curves)
    per_epoch = max(1, len(train) // tcfg.batch_size)
    evaluate.write_csv(paths.gan / "loss_curves_epoch.csv", ["epoch", "v_d", "v_g"],
                       [(r["epoch"], r["v_d"], r["v_g"]) for r in state.history.epoch_means(per_epoch)])
    log.info("trained GAN for %d iterations (%s)", state.iteration, state.history.counts())


def _checkpoint_id(path: Path) -> str:
    state = rcgan.load_checkpoint(path)
    return f"iter-{state.iteration:06d}", state.params


def step_generate(cfg: ExperimentConfig, paths: Paths, seed=None) -> None:
    """Synthetic cycles at the training and test smoothed capacities (for evaluation)."""
    ckpt_id, params = _checkpoint_id(_require(paths.checkpoint, "GAN checkpoint"))
    seed = cfg.seeds.augment if seed is None else seed
    for j, name in enumerate(("train", "test")):
        real = _read_split(paths, name)
        synth = augment.generate_cycles(params, [c.c_smooth for c in real], seed + j,
                                        checkpoint_id=ckpt_id)
        augment.write_synthetic(synth, *paths.synth(f"{name}_cond"))
    log.info("generated evaluation cycles from %s", ckpt_id)


def step_augment(cfg: ExperimentConfig, paths: Paths, seed=None, no_augment=False) -> None:
    train = _read_split(paths, "train")
    if no_augment:
        items = augment.merge(train, [])
    else:
        ckpt_id, params = _checkpoint_id(_require(paths.checkpoint, "GAN checkpoint"))
        seed = cfg.seeds.augment if seed is None else seed
        items = augment.merge(train, augment.generate_midpoints(params, train, seed, ckpt_id))
    augment.write_augmented(items, paths.augmented_csv, paths.augmented_json, _battery_id(paths))
    log.info("augmented set has %d cycles", len(items))


def _datasets(no_augment: bool):
    return ("original",) if no_augment else ("original", "augmented")


def _training_set(paths: Paths, dataset: str):
    if dataset == "original":
        return _read_split(paths, "train")
    _require(paths.augmented_csv, "augmented set")
    return augment.read_augmented(paths.augmented_csv, _require(paths.augmented_json, "augmented sidecar"))


def step_train_predictor(cfg: ExperimentConfig, paths: Paths, models, seed=None,
                         no_augment=False, only_missing=False) -> None:
    seed = cfg.seeds.predictor if seed is None else seed
    for dataset in _datasets(no_augment):
        items = None
        for model in models:
            out = paths.model(model, dataset)
            if only_missing and out.exists():
                continue
            items = items if items is not None else _training_set(paths, dataset)
            spec = replace(cfg.predictor, cell_type=model.upper())
            fitted = predictor.train_predictor(items, spec, cfg.predictor_train, seed)
            predictor.save_model(fitted, out)
            log.info("trained %s on %s set (%d cycles)", model.upper(), dataset, len(items))


def _manifest(cfg: ExperimentConfig, paths: Paths, models, no_augment) -> dict:
    import torch
    import sklearn
    return {
        "config": cfg.to_dict(),
        "battery_id": _battery_id(paths),
        "models": list(models),
        "datasets": list(_datasets(no_augment)),
        "versions": {"numpy": np.__version__, "torch": torch.__version__,
                     "scikit-learn": sklearn.__version__},
    }


def step_report(cfg: ExperimentConfig, paths: Paths, models, no_augment=False) -> dict:
    history = rcgan.TrainHistory.read_csv(_require(paths.loss_curves, "GAN loss curves"))
    battery = _battery_id(paths)
    test = _read_split(paths, "test")
    truth_raw = np.array([c.c_raw for c in test])
    truth_smooth = np.array([c.c_smooth for c in test])

    metric_rows, smooth_rows = [], []
    pred_cols = {"cycle": [c.cycle_index for c in test], "c_raw": truth_raw, "c_smooth": truth_smooth}
    for model in models:
        for dataset in _datasets(no_augment):
            fitted = predictor.load_model(paths.model(model, dataset))
            pred = predictor.predict(fitted, test)
            pred_cols[f"{model}_{dataset}"] = pred
            for rows, truth in ((metric_rows, truth_raw), (smooth_rows, truth_smooth)):
                mt = predictor.metrics(pred, truth)
                rows.append({"battery": battery, "model": model.upper(), "dataset": dataset,
                             "rmse": mt.rmse, "mae": mt.mae})
    n = len(test)
    predictions = [{k: v[i] for k, v in pred_cols.items()} for i in range(n)]

    ev = cfg.evaluate
    projections, overlap = {}, {}
    for name in ("train", "test"):
        real = _read_split(paths, name)
        csv_path, json_path = paths.synth(f"{name}_cond")
        synth = augment.read_synthetic(_require(csv_path, "synthetic evaluation cycles"), json_path)
        suffix = "" if name == "train" else "_test"
        pca = evaluate.pca_project(real, synth)
        projections[f"pca{suffix}"] = pca
        overlap[f"pca{suffix}"] = evaluate.overlap_score(pca)
        perplexity = min(ev.perplexity, (len(real) + len(synth) - 1) / 3.0)
        tsne = evaluate.tsne_project(real, synth, perplexity=perplexity, seed=cfg.seeds.augment,
                                     n_iter=ev.tsne_iterations, learning_rate=ev.tsne_learning_rate)
        projections[f"tsne{suffix}"] = tsne
        overlap[f"tsne{suffix}"] = evaluate.overlap_score(tsne)

    written = evaluate.build_report(paths.report, history, projections, overlap, metric_rows,
                                    _manifest(cfg, paths, models, no_augment), predictions)
    evaluate.write_csv(paths.report / "metrics_smooth.csv", evaluate.METRIC_COLUMNS,
                       [[r[c] for c in evaluate.METRIC_COLUMNS] for r in smooth_rows])
    for row in metric_rows:
        log.info("%s %-9s rmse=%.4f mae=%.4f", row["model"], row["dataset"], row["rmse"], row["mae"])
    return written


def step_evaluate(cfg: ExperimentConfig, paths: Paths, models, seed=None, no_augment=False) -> None:
    step_train_predictor(cfg, paths, models, seed, no_augment, only_missing=True)
    if not all(_require_ok(paths.synth(f"{n}_cond")[0]) for n in ("train", "test")):
        step_generate(cfg, paths)
    step_report(cfg, paths, models, no_augment)


def _require_ok(path: Path) -> bool:
    return path.exists()


def step_run(cfg: ExperimentConfig, paths: Paths, models, no_augment=False) -> None:
    if cfg.data.surrogate is not None:
        step_synth_data(cfg, paths)
    step_preprocess(cfg, paths)
    step_train_gan(cfg, paths)
    step_generate(cfg, paths)
    step_augment(cfg, paths, no_augment=no_augment)
    step_train_predictor(cfg, paths, models, no_augment=no_augment)
    step_report(cfg, paths, models, no_augment)


# --- argument parsing -------------------------------------------------------

def _models(arg: str | None, cfg: ExperimentConfig):
    if arg is None:
        return tuple(m.lower() for m in cfg.evaluate.models)
    return MODELS if arg == "both" else (arg,)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclegen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, seed=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="experiment JSON")
        p.add_argument("--out", type=Path, help="output directory (default: config out_dir, "
                       "then $CYCLEGEN_OUT)")
        if seed:
            p.add_argument("--seed", type=int, help="override this step's seed")
        return p

    add("synth-data", "write a surrogate dataset as canonical CSVs")
    add("preprocess", "split, resample, standardise and smooth", seed=False)
    p = add("train-gan", "train the recurrent conditional GAN")
    p.add_argument("--iterations", type=int)
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    add("generate", "synthesise cycles at the train/test smoothed capacities")
    p = add("augment", "add midpoint synthetic cycles to the training set")
    p.add_argument("--no-augment", action="store_true")
    for name, help_ in (("train-predictor", "fit LSTM/GRU capacity regressors"),
                        ("evaluate", "score predictors on test cycles and build the report"),
                        ("report", "rebuild the report from existing artifacts"),
                        ("run", "run the whole pipeline")):
        p = add(name, help_, seed=name in ("train-predictor", "evaluate"))
        p.add_argument("--models", choices=("gru", "lstm", "both"))
        p.add_argument("--no-augment", action="store_true")
    return parser


def dispatch(args) -> None:
    cfg = load_config(args.config)
    paths = Paths(cfg.output_dir(args.out))
    paths.root.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "synth-data":
        step_synth_data(cfg, paths, args.seed)
    elif cmd == "preprocess":
        step_preprocess(cfg, paths)
    elif cmd == "train-gan":
        step_train_gan(cfg, paths, args.iterations, args.seed, args.resume)
    elif cmd == "generate":
        step_generate(cfg, paths, args.seed)
    elif cmd == "augment":
        step_augment(cfg, paths, args.seed, args.no_augment)
    elif cmd == "train-predictor":
        step_train_predictor(cfg, paths, _models(args.models, cfg), args.seed, args.no_augment)
    elif cmd == "evaluate":
        step_evaluate(cfg, paths, _models(args.models, cfg), args.seed, args.no_augment)
    elif cmd == "report":
        step_report(cfg, paths, _models(args.models, cfg), args.no_augment)
    elif cmd == "run":
        step_run(cfg, paths, _models(args.models, cfg), args.no_augment)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, DataValidationError, MissingArtifactError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
