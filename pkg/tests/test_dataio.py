import numpy as np
import pytest

from cyclegen.dataio import (CycleDataset, RawCycle, SurrogateConfig, load_canonical,
                             split_train_test, synth_surrogate, write_canonical)
from cyclegen.errors import ConfigError, DataValidationError, JoinError, SchemaError

from conftest import write_csvs

ROWS = [
    "B5,1,0.0,3.5,1.5,24.0",
    "B5,1,10.0,3.9,1.5,25.0",
    "B5,1,20.0,4.2,0.8,26.0",
    "B5,2,0.0,3.4,1.5,24.5",
    "B5,2,10.0,3.8,1.4,25.5",
]
CAPS = ["B5,1,1.86", "B5,2,1.85"]


def test_load_two_cycles(tmp_path):
    ds = load_canonical(*write_csvs(tmp_path, ROWS, CAPS))
    assert ds.battery_id == "B5"
    assert [c.cycle_index for c in ds.cycles] == [1, 2]
    assert len(ds.cycles[0]) == 3 and len(ds.cycles[1]) == 2
    np.testing.assert_array_equal(ds.cycles[0].voltage_v, [3.5, 3.9, 4.2])
    np.testing.assert_array_equal(ds.capacities, [1.86, 1.85])


def test_unsorted_rows_are_sorted(tmp_path):
    rows = [ROWS[4], ROWS[2], ROWS[0], ROWS[3], ROWS[1]]
    ds = load_canonical(*write_csvs(tmp_path, rows, CAPS[::-1]))
    np.testing.assert_array_equal(ds.cycles[0].time_s, [0, 10, 20])


def test_missing_column(tmp_path):
    cyc, cap = write_csvs(tmp_path, ROWS, CAPS)
    cyc.write_text(cyc.read_text().replace("temperature_c", "temp"))
    with pytest.raises(SchemaError, match="temperature_c"):
        load_canonical(cyc, cap)


def test_missing_capacity_row(tmp_path):
    with pytest.raises(JoinError, match="cycle 2"):
        load_canonical(*write_csvs(tmp_path, ROWS, CAPS[:1]))


def test_repeated_timestamp(tmp_path):
    rows = ROWS[:2] + ["B5,1,10.0,4.0,1.5,25.0"] + ROWS[3:]
    with pytest.raises(DataValidationError, match="cycle 1"):
        load_canonical(*write_csvs(tmp_path, rows, CAPS))


def test_gap_in_cycles(tmp_path):
    rows = ROWS[:3] + [r.replace("B5,2,", "B5,3,") for r in ROWS[3:]]
    with pytest.raises(DataValidationError, match="contiguous"):
        load_canonical(*write_csvs(tmp_path, rows, ["B5,1,1.86", "B5,3,1.85"]))


def test_multi_battery_requires_id(tmp_path):
    rows = ROWS + [r.replace("B5", "B6") for r in ROWS]
    caps = CAPS + [c.replace("B5", "B6") for c in CAPS]
    paths = write_csvs(tmp_path, rows, caps)
    with pytest.raises(DataValidationError):
        load_canonical(*paths)
    assert load_canonical(*paths, battery_id="B6").battery_id == "B6"


def test_raw_cycle_validation():
    t = np.array([0.0, 1.0])
    with pytest.raises(DataValidationError):
        RawCycle(1, t, t, t, t, 0.0)
    with pytest.raises(DataValidationError):
        RawCycle(1, t, t, t, np.array([1.0, np.nan]), 1.0)
    with pytest.raises(DataValidationError):
        RawCycle(1, t[:1], t[:1], t[:1], t[:1], 1.0)


def test_split(small_dataset):
    train, test = split_train_test(small_dataset, 16)
    assert len(train) == 16 and len(test) == 8
    assert test.cycles[0].cycle_index == 17
    for bad in (0, 24, 30):
        with pytest.raises(ValueError):
            split_train_test(small_dataset, bad)


def test_round_trip(tmp_path, small_dataset):
    write_canonical(small_dataset, tmp_path / "c.csv", tmp_path / "q.csv")
    back = load_canonical(tmp_path / "c.csv", tmp_path / "q.csv")
    assert len(back) == len(small_dataset)
    for a, b in zip(small_dataset.cycles, back.cycles):
        np.testing.assert_allclose(a.voltage_v, b.voltage_v, rtol=0, atol=1e-12)
        assert a.capacity_ah == pytest.approx(b.capacity_ah, abs=1e-12)


def test_surrogate_deterministic_and_fading():
    cfg = SurrogateConfig(n_cycles=40, samples_per_cycle=32, regen_prob=0.0, noise_std=0.0)
    a, b = synth_surrogate(cfg), synth_surrogate(cfg)
    np.testing.assert_array_equal(a.capacities, b.capacities)
    assert np.all(np.diff(a.capacities) < 0)
    assert a.capacities[0] == pytest.approx(2.0 * (1 - 0.002))
    v = a.cycles[0].voltage_v
    assert v.min() == pytest.approx(3.0) and v.max() == pytest.approx(4.2)


def test_surrogate_spikes():
    cfg = SurrogateConfig(n_cycles=200, regen_prob=0.2, regen_gain=0.05, noise_std=0.0,
                          samples_per_cycle=8)
    caps = synth_surrogate(cfg).capacities
    base = 2.0 * (1 - 0.002 * np.arange(1, 201))
    ratio = caps / base
    spiked = ~np.isclose(ratio, 1.0)
    assert 10 < spiked.sum() < 80
    np.testing.assert_allclose(ratio[spiked], 1.05)


def test_surrogate_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        SurrogateConfig(fade_rate=0.01, n_cycles=150)
    with pytest.raises(ConfigError, match="unknown"):
        SurrogateConfig.from_dict({"n_cycle": 3})
    p = tmp_path / "s.json"
    p.write_text('{\n "n_cycles": 5,\n}')
    with pytest.raises(ConfigError, match="line"):
        SurrogateConfig.from_json(p)
    assert SurrogateConfig.from_dict(SurrogateConfig().to_dict()) == SurrogateConfig()


def test_dataset_tuple_coercion():
    t = np.linspace(0, 1, 3)
    ds = CycleDataset("x", [RawCycle(1, t, t, t, t, 1.0)])
    assert isinstance(ds.cycles, tuple)
