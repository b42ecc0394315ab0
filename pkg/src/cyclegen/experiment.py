"""Shared surrogate setups for the acceptance checks and the experiment scripts."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from cyclegen import augment, evaluate, predictor, rcgan
from cyclegen.dataio import SurrogateConfig, split_train_test, synth_surrogate
from cyclegen.preprocess import PreprocessedCycle, preprocess_dataset

# 60 cycles: K=40 for training, 20 for testing
SURROGATE = SurrogateConfig(n_cycles=60, samples_per_cycle=256, fade_rate=0.004,
                            regen_prob=0.1, regen_gain=0.03, noise_std=0.005, seed=0)
K, L, M = 40, 64, 2


@dataclass
class SurrogateSplit:
    train: list[PreprocessedCycle]
    test: list[PreprocessedCycle]
    held_out: list[PreprocessedCycle]


def surrogate_split(cfg: SurrogateConfig = SURROGATE, K: int = K, l: int = L,
                    m: int = M) -> SurrogateSplit:
    """Train/test cycles plus a held-out battery (same config, next seed, first K cycles)."""
    train, test = split_train_test(synth_surrogate(cfg), K)
    other, _ = split_train_test(synth_surrogate(replace(cfg, seed=cfg.seed + 1)), K)
    m_test = min(m, (len(test) - 1) // 2)
    return SurrogateSplit(preprocess_dataset(train, l, m), preprocess_dataset(test, l, m_test),
                          preprocess_dataset(other, l, m))


@dataclass
class GanRun:
    params: rcgan.GanParams
    history: rcgan.TrainHistory
    held_out_d: float
    overlap_pca: float
    sensitivity: float


def conditioning_sensitivity(params: rcgan.GanParams, caps, seed: int = 0) -> float:
    """Mean squared difference between outputs at the extreme capacities, same noise."""
    z = np.random.default_rng(seed).standard_normal((params.spec.l, params.spec.d))
    a = rcgan.generator_forward(params, z, float(np.max(caps)))
    b = rcgan.generator_forward(params, z, float(np.min(caps)))
    return float(np.mean((a - b) ** 2))


def train_and_score_gan(split: SurrogateSplit, spec: rcgan.GanSpec | None = None,
                        cfg: rcgan.TrainConfig | None = None, synth_seed: int = 0) -> GanRun:
    spec = spec or rcgan.GanSpec(l=L)
    cfg = cfg or rcgan.TrainConfig()
    params, history = rcgan.train(split.train, spec, cfg)
    caps = [c.c_smooth for c in split.train]
    synth = augment.generate_cycles(params, caps, synth_seed)
    ov = evaluate.overlap_score(evaluate.pca_project(split.train, synth))
    return GanRun(params, history, rcgan.mean_discriminator_output(params, split.held_out),
                  ov, conditioning_sensitivity(params, caps))


@dataclass
class AugmentationTrial:
    seed: int
    rmse: dict = field(default_factory=dict)  # (model, dataset) -> test RMSE
    n_augmented: int = 0


def augmentation_trial(split: SurrogateSplit, seed: int, models=("GRU", "LSTM"),
                       gan_cfg: rcgan.TrainConfig | None = None,
                       pred_spec: predictor.PredictorSpec | None = None,
                       pred_cfg: predictor.PredictorConfig | None = None) -> AugmentationTrial:
    """One seed of original-vs-augmented: the seed drives GAN, synthesis and predictors."""
    gan_cfg = replace(gan_cfg or rcgan.TrainConfig(), seed=seed)
    pred_spec = pred_spec or predictor.PredictorSpec()
    pred_cfg = pred_cfg or predictor.PredictorConfig()
    params, _ = rcgan.train(split.train, rcgan.GanSpec(l=split.train[0].profile.shape[1]), gan_cfg)
    synth = augment.generate_midpoints(params, split.train, seed)
    sets = {"original": list(split.train), "augmented": augment.merge(split.train, synth)}
    truth = np.array([c.c_raw for c in split.test])
    trial = AugmentationTrial(seed, n_augmented=len(sets["augmented"]))
    for model in models:
        spec = replace(pred_spec, cell_type=model)
        for name, items in sets.items():
            fitted = predictor.train_predictor(items, spec, pred_cfg, seed)
            trial.rmse[(model, name)] = predictor.metrics(predictor.predict(fitted, split.test),
                                                          truth).rmse
    return trial


def median_rmse(trials, model: str, dataset: str) -> float:
    return float(np.median([t.rmse[(model, dataset)] for t in trials]))
