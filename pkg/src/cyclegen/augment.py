"""Midpoint-capacity synthesis and merging of synthetic cycles into the training set."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from cyclegen.preprocess import CHANNELS, PROFILE_COLUMNS, PreprocessedCycle, denormalize
from cyclegen.errors import DataValidationError, SchemaError
from cyclegen.rcgan import GanParams

log = logging.getLogger(__name__)

EXTRAPOLATION_MARGIN = 0.10


@dataclass(frozen=True)
class SyntheticCycle:
    cond_capacity: float
    v_norm: np.ndarray
    i_norm: np.ndarray
    t_norm: np.ndarray
    provenance: dict = field(default_factory=dict)
    scale: dict | None = None

    source = "synthetic"

    @property
    def profile(self) -> np.ndarray:
        return np.stack([self.v_norm, self.i_norm, self.t_norm])

    @property
    def target_capacity(self) -> float:
        return self.cond_capacity

    @property
    def insertion_position(self) -> int | None:
        return self.provenance.get("insertion_position")

    def denormalized(self) -> dict[str, np.ndarray]:
        if self.scale is None:
            raise ValueError("synthetic cycle has no scale; call attach_scales first")
        return {
            ch: denormalize(seq, *self.scale[ch])
            for ch, seq in zip(CHANNELS, (self.v_norm, self.i_norm, self.t_norm))
        }


def midpoint_capacities(c_smooth) -> np.ndarray:
    c = np.asarray(c_smooth, dtype=float)
    if len(c) < 2:
        raise ValueError(f"need at least 2 capacities, got {len(c)}")
    return (c[:-1] + c[1:]) / 2.0


def _outside_training_range(params: GanParams, cap: float) -> bool:
    lo, hi = params.cond_lo, params.cond_hi
    margin = EXTRAPOLATION_MARGIN * ((hi - lo) if hi > lo else abs(hi))
    return not (lo - margin <= cap <= hi + margin)


def generate_cycles(params: GanParams, caps, seed: int, *, checkpoint_id: str = "",
                    insertion_positions=None) -> list[SyntheticCycle]:
    """One generator sample per capacity, with fresh noise per cycle.

    Capacities outside the training range (widened by 10% of its width)
    are still generated; the provenance records ``extrapolated: True``.
    """
    caps = np.asarray(caps, dtype=float).reshape(-1)
    if insertion_positions is not None and len(insertion_positions) != len(caps):
        raise ValueError("insertion_positions must match caps in length")
    if len(caps) == 0:
        return []
    spec = params.spec
    gen = torch.Generator().manual_seed(seed)
    z = torch.randn(len(caps), spec.l, spec.d, generator=gen, dtype=params.dtype)
    with torch.no_grad():
        out = params.generator(z, params.scale_cond(caps)).cpu().numpy().astype(float)

    cycles = []
    for j, cap in enumerate(caps):
        prov = {"checkpoint_id": checkpoint_id, "seed": seed, "index": j,
                "insertion_position": None if insertion_positions is None
                else int(insertion_positions[j])}
        if _outside_training_range(params, cap):
            prov["extrapolated"] = True
            log.warning("capacity %.6g outside training range [%.6g, %.6g]",
                        cap, params.cond_lo, params.cond_hi)
        x = out[j]
        cycles.append(SyntheticCycle(float(cap), x[:, 0].copy(), x[:, 1].copy(),
                                     x[:, 2].copy(), prov))
    return cycles


def generate_midpoints(params: GanParams, real: list[PreprocessedCycle], seed: int,
                       checkpoint_id: str = "") -> list[SyntheticCycle]:
    """Synthetic cycle between every neighbouring pair of training cycles."""
    caps = midpoint_capacities([c.c_smooth for c in real])
    synth = generate_cycles(params, caps, seed, checkpoint_id=checkpoint_id,
                            insertion_positions=range(len(caps)))
    return attach_scales(synth, real)


def attach_scales(synth: list[SyntheticCycle], real: list[PreprocessedCycle]) -> list[SyntheticCycle]:
    """Give midpoint cycles per-channel (min, max) interpolated from their two neighbours."""
    out = []
    for s in synth:
        pos = s.insertion_position
        if pos is None or not 0 <= pos < len(real) - 1:
            out.append(s)
            continue
        a, b = real[pos], real[pos + 1]
        span = a.c_smooth - b.c_smooth
        w = 0.5 if span == 0 else (a.c_smooth - s.cond_capacity) / span
        scale = {ch: tuple((1 - w) * np.asarray(a.scale[ch]) + w * np.asarray(b.scale[ch]))
                 for ch in CHANNELS}
        out.append(replace(s, scale=scale,
                           provenance={**s.provenance, "scale_interpolated": True}))
    return out


def merge(real: list[PreprocessedCycle], synth: list[SyntheticCycle]) -> list:
    """Union of real and synthetic cycles.

    Midpoint cycles are slotted directly after the real cycle at their
    insertion position, which gives descending-capacity order whenever the
    smoothed capacities are non-increasing. Synthetic cycles without an
    insertion position are placed by conditioning capacity, descending.
    """
    if not synth:
        return list(real)
    if all(s.insertion_position is not None for s in synth):
        after: dict[int, list] = {}
        for s in synth:
            after.setdefault(s.insertion_position, []).append(s)
        out = []
        for k, r in enumerate(real):
            out.append(r)
            out.extend(after.pop(k, []))
        for k in sorted(after):
            out.extend(after[k])
        return out
    items = list(real) + list(synth)
    return sorted(items, key=lambda x: -x.cond_capacity)


def _cycle_label(item, k: int):
    if item.source == "real":
        return item.cycle_index
    pos = item.insertion_position
    return f"{pos + 1}.5" if pos is not None else f"s{k}"


def write_augmented(items: list, csv_path, json_path, battery_id: str = "") -> None:
    """Profile CSV with an extra ``source`` column plus a JSON sidecar."""
    csv_path, json_path = Path(csv_path), Path(json_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frames, meta = [], []
    for k, it in enumerate(items):
        label = _cycle_label(it, k)
        frames.append(pd.DataFrame({
            "cycle": label, "t_index": np.arange(len(it.v_norm)),
            "v_norm": it.v_norm, "i_norm": it.i_norm, "t_norm": it.t_norm,
            "source": it.source,
        }))
        entry = {"cycle": str(label), "source": it.source,
                 "target_capacity": it.target_capacity}
        if it.source == "real":
            entry.update(c_raw=it.c_raw, c_smooth=it.c_smooth)
        else:
            entry.update(cond_capacity=it.cond_capacity, provenance=it.provenance)
        if it.scale is not None:
            entry["scale"] = {ch: list(it.scale[ch]) for ch in CHANNELS}
        meta.append(entry)
    pd.concat(frames, ignore_index=True).to_csv(csv_path, index=False)
    json_path.write_text(json.dumps({"battery_id": battery_id, "cycles": meta}, indent=2))


def read_augmented(csv_path, json_path) -> list:
    df = pd.read_csv(csv_path, dtype={"cycle": str}, float_precision="round_trip")
    for col in PROFILE_COLUMNS + ("source",):
        if col not in df.columns:
            raise SchemaError(f"{csv_path}: missing column '{col}'")
    meta = json.loads(Path(json_path).read_text())["cycles"]
    groups = {k: g.sort_values("t_index") for k, g in df.groupby("cycle", sort=False)}
    out = []
    for e in meta:
        g = groups.get(e["cycle"])
        if g is None:
            raise DataValidationError(f"cycle {e['cycle']} missing from {csv_path}")
        v, i, t = (g[c].to_numpy(float) for c in ("v_norm", "i_norm", "t_norm"))
        scale = {ch: tuple(e["scale"][ch]) for ch in CHANNELS} if "scale" in e else None
        if e["source"] == "real":
            out.append(PreprocessedCycle(int(e["cycle"]), v, i, t, scale,
                                         float(e["c_raw"]), float(e["c_smooth"])))
        else:
            out.append(SyntheticCycle(float(e["cond_capacity"]), v, i, t,
                                      e.get("provenance", {}), scale))
    return out


def write_synthetic(synth: list[SyntheticCycle], csv_path, json_path) -> None:
    write_augmented(synth, csv_path, json_path)


def read_synthetic(csv_path, json_path) -> list[SyntheticCycle]:
    return [c for c in read_augmented(csv_path, json_path) if c.source == "synthetic"]
