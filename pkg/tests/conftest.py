import numpy as np
import pytest

from cyclegen.dataio import SurrogateConfig, split_train_test, synth_surrogate
from cyclegen.preprocess import preprocess_dataset

SMALL = SurrogateConfig(n_cycles=24, samples_per_cycle=64, fade_rate=0.006,
                        regen_prob=0.1, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    return synth_surrogate(SMALL)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    train, test = split_train_test(small_dataset, 16)
    return preprocess_dataset(train, l=16, m=2), preprocess_dataset(test, l=16, m=2)


def write_csvs(tmp_path, cycle_rows, cap_rows):
    cyc = tmp_path / "cycles.csv"
    cap = tmp_path / "capacity.csv"
    cyc.write_text("battery_id,cycle,time_s,voltage_v,current_a,temperature_c\n"
                   + "".join(r + "\n" for r in cycle_rows))
    cap.write_text("battery_id,cycle,capacity_ah\n" + "".join(r + "\n" for r in cap_rows))
    return cyc, cap


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
