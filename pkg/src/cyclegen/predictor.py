"""LSTM/GRU capacity regressors trained on normalised 3-channel cycle profiles."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from cyclegen.errors import MissingArtifactError, NumericalError


@dataclass(frozen=True)
class PredictorSpec:
    cell_type: str = "GRU"
    hidden: int = 64
    layers: int = 2

    def __post_init__(self):
        if self.cell_type.upper() not in ("LSTM", "GRU"):
            raise ValueError(f"cell_type must be LSTM or GRU, got {self.cell_type!r}")
        if self.hidden < 1 or self.layers < 1:
            raise ValueError("hidden and layers must be >= 1")


@dataclass(frozen=True)
class PredictorConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 16

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("invalid predictor training configuration")


@dataclass(frozen=True)
class RegressionMetrics:
    rmse: float
    mae: float
    per_cycle_error: np.ndarray


class CapacityRegressor(nn.Module):
    def __init__(self, spec: PredictorSpec):
        super().__init__()
        rnn = nn.LSTM if spec.cell_type.upper() == "LSTM" else nn.GRU
        self.rnn = rnn(3, spec.hidden, num_layers=spec.layers, batch_first=True)
        self.head = nn.Linear(spec.hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, _ = self.rnn(x)
        return self.head(h[:, -1]).squeeze(-1)


@dataclass(frozen=True)
class PredictorModel:
    """Trained regressor; targets are predicted in standardised units internally."""
    spec: PredictorSpec
    net: CapacityRegressor
    target_mean: float
    target_std: float
    l: int
    loss_history: tuple = ()


def _inputs(cycles) -> np.ndarray:
    """(N, l, 3) array from items with a 3 x l ``profile``."""
    return np.stack([np.asarray(c.profile, dtype=float).T for c in cycles])


def train_predictor(train_set, spec: PredictorSpec, cfg: PredictorConfig,
                    seed: int = 0) -> PredictorModel:
    """Minimise MSE between predicted and target capacity with Adam.

    Each element supplies ``profile`` (3 x l) and ``target_capacity`` (Ah).
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    X = torch.as_tensor(_inputs(train_set), dtype=torch.float32)
    y_raw = np.array([c.target_capacity for c in train_set], dtype=float)
    mean = float(y_raw.mean())
    std = float(y_raw.std())
    if std == 0.0:
        std = 1.0
    y = torch.as_tensor((y_raw - mean) / std, dtype=torch.float32)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = CapacityRegressor(spec)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), cfg.batch_size):
            idx = torch.as_tensor(order[start:start + cfg.batch_size])
            loss = torch.mean((net(X[idx]) - y[idx]) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        epoch_loss = total / len(X)
        if not np.isfinite(epoch_loss):
            raise NumericalError(f"non-finite predictor loss at epoch {epoch + 1}")
        losses.append(epoch_loss)

    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return PredictorModel(spec, net, mean, std, X.shape[1], tuple(losses))


def predict(model: PredictorModel, cycles) -> np.ndarray:
    if len(cycles) == 0:
        return np.empty(0)
    X = _inputs(cycles)
    if X.shape[1:] != (model.l, 3):
        raise ValueError(f"cycles must be 3 x {model.l}, got {X.shape[2]} x {X.shape[1]}")
    with torch.no_grad():
        out = model.net(torch.as_tensor(X, dtype=torch.float32)).double().numpy()
    return out * model.target_std + model.target_mean


def metrics(pred, truth) -> RegressionMetrics:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"pred and truth must be equal non-zero length, got {pred.shape}, {truth.shape}")
    err = pred - truth
    return RegressionMetrics(float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err))), err)


def save_model(model: PredictorModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"spec": asdict(model.spec), "state": model.net.state_dict(),
                "target_mean": model.target_mean, "target_std": model.target_std,
                "l": model.l, "loss_history": list(model.loss_history)}, path)


def load_model(path) -> PredictorModel:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"predictor model not found: {path}")
    blob = torch.load(path, weights_only=False)
    spec = PredictorSpec(**blob["spec"])
    net = CapacityRegressor(spec)
    net.load_state_dict(blob["state"])
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return PredictorModel(spec, net, blob["target_mean"], blob["target_std"], blob["l"],
                          tuple(blob["loss_history"]))


def clone(model: PredictorModel) -> PredictorModel:
    return copy.deepcopy(model)
