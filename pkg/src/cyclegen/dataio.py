"""Canonical CSV loading, train/test splitting and the surrogate battery generator."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd

from cyclegen.errors import ConfigError, DataValidationError, JoinError, SchemaError

CYCLE_COLUMNS = ("battery_id", "cycle", "time_s", "voltage_v", "current_a", "temperature_c")
CAPACITY_COLUMNS = ("battery_id", "cycle", "capacity_ah")

# surrogate profile constants
V_MIN, V_MAX = 3.0, 4.2
I_CC = 1.5
T_AMBIENT = 25.0
CV_DECAY = 0.12
CHARGE_DURATION_S = 3600.0

Provenance = Literal["real", "surrogate", "augmented"]


@dataclass(frozen=True)
class RawCycle:
    cycle_index: int
    time_s: np.ndarray
    voltage_v: np.ndarray
    current_a: np.ndarray
    temperature_c: np.ndarray
    capacity_ah: float

    def __post_init__(self):
        n = len(self.time_s)
        if any(len(a) != n for a in (self.voltage_v, self.current_a, self.temperature_c)):
            raise DataValidationError(f"cycle {self.cycle_index}: series lengths differ")
        if n < 2:
            raise DataValidationError(f"cycle {self.cycle_index}: needs at least 2 samples, got {n}")
        for name in ("time_s", "voltage_v", "current_a", "temperature_c"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataValidationError(f"cycle {self.cycle_index}: non-finite values in {name}")
        if np.any(np.diff(self.time_s) <= 0):
            raise DataValidationError(
                f"cycle {self.cycle_index}: time_s must be strictly increasing"
            )
        if not (np.isfinite(self.capacity_ah) and self.capacity_ah > 0):
            raise DataValidationError(
                f"cycle {self.cycle_index}: capacity must be positive, got {self.capacity_ah}"
            )

    def __len__(self):
        return len(self.time_s)

    def channels(self) -> dict[str, np.ndarray]:
        return {"voltage_v": self.voltage_v, "current_a": self.current_a,
                "temperature_c": self.temperature_c}


@dataclass(frozen=True)
class CycleDataset:
    battery_id: str
    cycles: tuple[RawCycle, ...]
    provenance: Provenance = "real"

    def __post_init__(self):
        object.__setattr__(self, "cycles", tuple(self.cycles))
        idx = [c.cycle_index for c in self.cycles]
        if any(b - a != 1 for a, b in zip(idx, idx[1:])):
            raise DataValidationError(
                f"battery {self.battery_id}: cycle indices must be contiguous and increasing"
            )

    def __len__(self):
        return len(self.cycles)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([c.capacity_ah for c in self.cycles])


@dataclass(frozen=True)
class SurrogateConfig:
    n_cycles: int = 150
    samples_per_cycle: int = 256
    c0: float = 2.0
    fade_rate: float = 0.002
    regen_prob: float = 0.05
    regen_gain: float = 0.03
    noise_std: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.n_cycles < 2:
            raise ConfigError("n_cycles must be >= 2")
        if self.samples_per_cycle < 2:
            raise ConfigError("samples_per_cycle must be >= 2")
        if self.c0 <= 0:
            raise ConfigError("c0 must be positive")
        if not 0 <= self.fade_rate <= 0.02:
            raise ConfigError("fade_rate must lie in [0, 0.02]")
        if 1 - self.fade_rate * self.n_cycles <= 0:
            raise ConfigError("fade_rate * n_cycles must stay below 1 (capacity would vanish)")
        if not 0 <= self.regen_prob <= 1:
            raise ConfigError("regen_prob must lie in [0, 1]")
        if self.regen_gain < 0:
            raise ConfigError("regen_gain must be non-negative")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown surrogate config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SurrogateConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def _require_columns(df: pd.DataFrame, required, path) -> None:
    for col in required:
        if col not in df.columns:
            raise SchemaError(f"{path}: missing column '{col}'")


def load_canonical(cycles_path, capacity_path, battery_id: str | None = None) -> CycleDataset:
    """Read the two canonical CSV files into a validated dataset.

    Rows are sorted by (cycle, time_s) before validation, so the files need
    not be pre-sorted. If the files hold more than one battery, ``battery_id``
    selects which one to load.
    """
    samples = pd.read_csv(cycles_path, dtype={"battery_id": str}, float_precision="round_trip")
    caps = pd.read_csv(capacity_path, dtype={"battery_id": str}, float_precision="round_trip")
    _require_columns(samples, CYCLE_COLUMNS, cycles_path)
    _require_columns(caps, CAPACITY_COLUMNS, capacity_path)

    batteries = sorted(set(samples["battery_id"]))
    if battery_id is None:
        if len(batteries) != 1:
            raise DataValidationError(
                f"{cycles_path}: expected one battery, found {batteries}; pass battery_id"
            )
        battery_id = batteries[0]
    samples = samples[samples["battery_id"] == battery_id]
    caps = caps[caps["battery_id"] == battery_id]
    if samples.empty:
        raise DataValidationError(f"{cycles_path}: no rows for battery '{battery_id}'")

    if caps["cycle"].duplicated().any():
        dup = caps.loc[caps["cycle"].duplicated(), "cycle"].iloc[0]
        raise JoinError(f"{capacity_path}: duplicate capacity rows for cycle {dup}")
    cap_by_cycle = dict(zip(caps["cycle"].astype(int), caps["capacity_ah"].astype(float)))

    samples = samples.sort_values(["cycle", "time_s"], kind="mergesort")
    cycles = []
    for k, grp in samples.groupby("cycle", sort=True):
        k = int(k)
        if k not in cap_by_cycle:
            raise JoinError(f"cycle {k} present in {cycles_path} but missing from {capacity_path}")
        t = grp["time_s"].to_numpy(float)
        if np.any(np.diff(t) <= 0):
            raise DataValidationError(f"cycle {k}: time_s is not strictly increasing")
        cycles.append(RawCycle(
            cycle_index=k,
            time_s=t,
            voltage_v=grp["voltage_v"].to_numpy(float),
            current_a=grp["current_a"].to_numpy(float),
            temperature_c=grp["temperature_c"].to_numpy(float),
            capacity_ah=cap_by_cycle[k],
        ))
    return CycleDataset(battery_id=battery_id, cycles=tuple(cycles), provenance="real")


def write_canonical(ds: CycleDataset, cycles_path, capacity_path) -> None:
    cycles_path, capacity_path = Path(cycles_path), Path(capacity_path)
    cycles_path.parent.mkdir(parents=True, exist_ok=True)
    capacity_path.parent.mkdir(parents=True, exist_ok=True)
    frames = [
        pd.DataFrame({
            "battery_id": ds.battery_id,
            "cycle": c.cycle_index,
            "time_s": c.time_s,
            "voltage_v": c.voltage_v,
            "current_a": c.current_a,
            "temperature_c": c.temperature_c,
        })
        for c in ds.cycles
    ]
    pd.concat(frames, ignore_index=True).to_csv(cycles_path, index=False)
    pd.DataFrame({
        "battery_id": ds.battery_id,
        "cycle": [c.cycle_index for c in ds.cycles],
        "capacity_ah": ds.capacities,
    }).to_csv(capacity_path, index=False)


def split_train_test(ds: CycleDataset, K: int) -> tuple[CycleDataset, CycleDataset]:
    """First ``K`` cycles for training, the rest for testing."""
    if not 1 <= K < len(ds):
        raise ValueError(f"K must satisfy 1 <= K < {len(ds)}, got {K}")
    return (
        CycleDataset(ds.battery_id, ds.cycles[:K], ds.provenance),
        CycleDataset(ds.battery_id, ds.cycles[K:], ds.provenance),
    )


def synth_surrogate(cfg: SurrogateConfig, battery_id: str = "SURR") -> CycleDataset:
    """Deterministic CC-CV-like charging cycles with linear capacity fade.

    Profile shape depends on the fade factor only, so regeneration spikes
    change the capacity label without touching the profiles.
    """
    rng = np.random.default_rng(cfg.seed)
    u = np.linspace(0.0, 1.0, cfg.samples_per_cycle)
    time_s = u * CHARGE_DURATION_S
    cycles = []
    for k in range(1, cfg.n_cycles + 1):
        fade = 1.0 - cfg.fade_rate * k
        spiked = rng.random() < cfg.regen_prob
        capacity = cfg.c0 * fade * ((1.0 + cfg.regen_gain) if spiked else 1.0)

        u_cc = 0.6 * fade
        voltage = V_MIN + (V_MAX - V_MIN) * np.minimum(1.0, u / u_cc)
        current = np.where(u <= u_cc, I_CC, I_CC * np.exp(-(u - u_cc) / CV_DECAY))
        temperature = T_AMBIENT + 6.0 * np.sin(np.pi * u) * (1.0 + 0.5 * (1.0 - fade))

        noise = rng.normal(0.0, 1.0, size=(3, cfg.samples_per_cycle)) * cfg.noise_std
        cycles.append(RawCycle(
            cycle_index=k,
            time_s=time_s.copy(),
            voltage_v=voltage + noise[0],
            current_a=current + noise[1],
            temperature_c=temperature + noise[2],
            capacity_ah=float(capacity),
        ))
    return CycleDataset(battery_id=battery_id, cycles=tuple(cycles), provenance="surrogate")
