"""Fixed-length resampling, per-cycle min-max scaling and capacity smoothing."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from cyclegen.dataio import CycleDataset, RawCycle
from cyclegen.errors import DataValidationError, SchemaError

CHANNELS = ("voltage", "current", "temperature")
_RAW_FIELDS = {"voltage": "voltage_v", "current": "current_a", "temperature": "temperature_c"}
PROFILE_COLUMNS = ("cycle", "t_index", "v_norm", "i_norm", "t_norm")


class Standardized(NamedTuple):
    values: np.ndarray
    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return self.hi == self.lo


@dataclass(frozen=True)
class PreprocessedCycle:
    cycle_index: int
    v_norm: np.ndarray
    i_norm: np.ndarray
    t_norm: np.ndarray
    scale: dict  # channel -> (min, max) in original units
    c_raw: float
    c_smooth: float

    source = "real"

    @property
    def profile(self) -> np.ndarray:
        """Channels stacked as a 3 x l array (V, I, T)."""
        return np.stack([self.v_norm, self.i_norm, self.t_norm])

    @property
    def target_capacity(self) -> float:
        return self.c_raw

    @property
    def cond_capacity(self) -> float:
        return self.c_smooth

    def denormalized(self) -> dict[str, np.ndarray]:
        return {
            ch: denormalize(seq, *self.scale[ch])
            for ch, seq in zip(CHANNELS, (self.v_norm, self.i_norm, self.t_norm))
        }


def downsample_cycle(cycle: RawCycle, l: int) -> RawCycle:
    """Resample onto ``l`` evenly spaced time points by linear interpolation."""
    if l < 2:
        raise ValueError(f"target length l must be >= 2, got {l}")
    t_new = np.linspace(cycle.time_s[0], cycle.time_s[-1], l)
    return RawCycle(
        cycle_index=cycle.cycle_index,
        time_s=t_new,
        voltage_v=np.interp(t_new, cycle.time_s, cycle.voltage_v),
        current_a=np.interp(t_new, cycle.time_s, cycle.current_a),
        temperature_c=np.interp(t_new, cycle.time_s, cycle.temperature_c),
        capacity_ah=cycle.capacity_ah,
    )


def minmax_standardize(seq) -> Standardized:
    """Map a sequence affinely onto [-1, 1] using its own extrema.

    A constant sequence maps to zeros; check ``.degenerate`` on the result.
    """
    x = np.asarray(seq, dtype=float)
    if x.size == 0:
        raise ValueError("cannot standardize an empty sequence")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return Standardized(np.zeros_like(x), lo, hi)
    return Standardized(2.0 * (x - lo) / (hi - lo) - 1.0, lo, hi)


def denormalize(values, lo: float, hi: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if hi == lo:
        return np.full_like(values, lo)
    return (values + 1.0) / 2.0 * (hi - lo) + lo


def smooth_capacity(caps, m: int) -> np.ndarray:
    """Centered moving mean of half-width ``m``; the first and last ``m`` values are kept raw."""
    c = np.asarray(caps, dtype=float)
    K = len(c)
    if m < 0:
        raise ValueError(f"half-window m must be >= 0, got {m}")
    if 2 * m + 1 > K:
        raise ValueError(f"window 2m+1={2 * m + 1} exceeds series length {K}")
    out = c.copy()
    if m == 0:
        return out
    n_inner = K - 2 * m
    # left-to-right accumulation per window, vectorised across windows
    acc = c[0:n_inner].copy()
    for j in range(1, 2 * m + 1):
        acc += c[j:j + n_inner]
    out[m:K - m] = acc / (2 * m + 1)
    return out


def is_nonincreasing(caps) -> bool:
    return bool(np.all(np.diff(np.asarray(caps, dtype=float)) <= 0))


def preprocess_dataset(ds: CycleDataset, l: int = 128, m: int = 2) -> list[PreprocessedCycle]:
    c_smooth = smooth_capacity(ds.capacities, m)
    out = []
    for cyc, cs in zip(ds.cycles, c_smooth):
        short = downsample_cycle(cyc, l)
        normed, scale = [], {}
        for ch in CHANNELS:
            st = minmax_standardize(getattr(short, _RAW_FIELDS[ch]))
            normed.append(st.values)
            scale[ch] = (st.lo, st.hi)
        out.append(PreprocessedCycle(
            cycle_index=cyc.cycle_index,
            v_norm=normed[0], i_norm=normed[1], t_norm=normed[2],
            scale=scale,
            c_raw=float(cyc.capacity_ah),
            c_smooth=float(cs),
        ))
    return out


def write_preprocessed(cycles: list[PreprocessedCycle], csv_path, json_path,
                       battery_id: str = "", extra: dict | None = None) -> None:
    csv_path, json_path = Path(csv_path), Path(json_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frames = [
        pd.DataFrame({
            "cycle": c.cycle_index,
            "t_index": np.arange(len(c.v_norm)),
            "v_norm": c.v_norm, "i_norm": c.i_norm, "t_norm": c.t_norm,
        })
        for c in cycles
    ]
    pd.concat(frames, ignore_index=True).to_csv(csv_path, index=False)
    sidecar = {
        "battery_id": battery_id,
        "cycles": [
            {"cycle": c.cycle_index, "c_raw": c.c_raw, "c_smooth": c.c_smooth,
             "scale": {ch: list(c.scale[ch]) for ch in CHANNELS}}
            for c in cycles
        ],
    }
    if extra:
        sidecar.update(extra)
    json_path.write_text(json.dumps(sidecar, indent=2))


def read_preprocessed(csv_path, json_path) -> list[PreprocessedCycle]:
    df = pd.read_csv(csv_path, float_precision="round_trip")
    for col in PROFILE_COLUMNS:
        if col not in df.columns:
            raise SchemaError(f"{csv_path}: missing column '{col}'")
    meta = {int(e["cycle"]): e for e in json.loads(Path(json_path).read_text())["cycles"]}
    out = []
    for k, grp in df.sort_values(["cycle", "t_index"], kind="mergesort").groupby("cycle", sort=True):
        k = int(k)
        if k not in meta:
            raise DataValidationError(f"cycle {k} missing from sidecar {json_path}")
        e = meta[k]
        out.append(PreprocessedCycle(
            cycle_index=k,
            v_norm=grp["v_norm"].to_numpy(float),
            i_norm=grp["i_norm"].to_numpy(float),
            t_norm=grp["t_norm"].to_numpy(float),
            scale={ch: tuple(e["scale"][ch]) for ch in CHANNELS},
            c_raw=float(e["c_raw"]),
            c_smooth=float(e["c_smooth"]),
        ))
    return out
