import csv
import json
import math

import numpy as np
import pytest

from discofit.bench import (
    REFERENCE_ROWS,
    BenchReport,
    Example2Config,
    ExperimentConfig,
    gen_dataset,
    run_example2,
    run_table1,
    spike_index,
    split_seeds,
    table1_checks,
    train_test_split_indices,
    write_report,
)
from discofit.detect import detect_jumps
from discofit.errors import SpikeOffGrid
from discofit.numerics import ratio_metrics


@pytest.fixture(scope="module")
def table1():
    return run_table1()


def test_dataset_a(dataset_a):
    assert len(dataset_a) == 60
    np.testing.assert_array_equal(dataset_a.targets, np.cos(dataset_a.inputs[:, 0]))
    assert math.pi in dataset_a.inputs[:, 0]


def test_dataset_b(dataset_b, dataset_a):
    spiked = np.nonzero(dataset_b.targets != dataset_a.targets)[0]
    assert spiked.tolist() == [29]
    assert dataset_b.inputs[29, 0] == math.pi and dataset_b.targets[29] == -2.0


def test_grid_is_uniform_and_minimally_shifted(dataset_a):
    x = dataset_a.inputs[:, 0]
    step = 2 * math.pi / 59
    np.testing.assert_allclose(np.diff(x), step, rtol=1e-12)
    base = np.linspace(0, 2 * math.pi, 60)
    assert np.max(np.abs(x - base)) <= step / 2 + 1e-12


def test_detect_on_b(dataset_b):
    _, jumps, _ = detect_jumps(dataset_b)
    assert [j.source_index for j in jumps] == [spike_index(ExperimentConfig())]


def test_spike_outside_domain():
    with pytest.raises(SpikeOffGrid):
        ExperimentConfig(spike_location=7.0)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(train_count=60)


def test_split_excludes_spike(split):
    train, test = split
    assert len(train) == 54 and len(test) == 6
    assert 29 in train and 29 not in test
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(60))


def test_split_is_seeded():
    a = train_test_split_indices(ExperimentConfig(seed=5))[1]
    b = train_test_split_indices(ExperimentConfig(seed=5))[1]
    c = train_test_split_indices(ExperimentConfig(seed=6))[1]
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert split_seeds(5) == (5, 5)


def test_table1_rows(table1):
    keys = [(r.dataset, r.model, r.neurons, r.bump_units) for r in table1.rows]
    assert keys == [("A", "mlp", 4, 0), ("B", "mlp", 4, 0), ("B", "mlp", 10, 0), ("B", "hybrid", 4, 1)]


def test_table1_ratios_recompute(table1):
    base = table1.rows[0].report()
    for r in table1.rows:
        ref = ratio_metrics(base, r.report())
        np.testing.assert_allclose([r.rtt, r.rtrr, r.rter], [ref["rtt"], ref["rtrr"], ref["rter"]], rtol=1e-12)
        assert r.train_time > 0


def test_table1_narrative(table1):
    checks = table1_checks(table1)
    assert checks["spiked_train_rmse_ge_10x_clean"]
    assert checks["hybrid_test_rmse_le_3x_clean"]
    assert table1.rows[1].rtrr >= 10


def test_table1_details(table1):
    d = table1.details
    assert d["hybrid_at_spike"] == pytest.approx(-2.0, abs=0.05)
    assert d["certified_residual"] < d["epsilon"]
    assert 29 not in d["test_rows"]


def test_table1_determinism(table1):
    again = run_table1()
    assert again.to_json(timing=False) == table1.to_json(timing=False)
    for k, v in table1.plot.items():
        np.testing.assert_array_equal(again.plot[k], v)


def test_timing_fields_excluded(table1):
    doc = table1.to_dict(timing=False)
    assert all("train_time" not in r and "rtt" not in r for r in doc["rows"])
    assert "train_time" in table1.to_dict()["rows"][0]


def test_text_report_has_reference_values(table1):
    text = table1.to_text()
    for token in ("9.2318e-07", "13580", "21.943", "0.234", "2.402", "1.0769", "3.2085"):
        assert token in text
    assert len(REFERENCE_ROWS) == 3


def test_write_report(table1, tmp_path):
    paths = write_report(table1, tmp_path, "table1")
    assert [p.name for p in paths] == ["table1.txt", "table1.json", "table1_plot.csv"]
    json.loads(paths[1].read_text())
    with open(paths[2]) as fh:
        header = next(csv.reader(fh))
    assert header[0] == "x" and {"truth", "smooth", "hybrid"} <= set(header)


def test_example2():
    rep = run_example2()
    d = rep.details
    assert abs(d["jumps"][0]["height"] - 1) < 0.05
    assert d["certified_residual"] < 0.01
    assert abs(d["hybrid_at_origin"] - 2) < 0.05
    assert {"x1", "x2", "truth", "smooth", "hybrid"} == set(rep.plot)
    assert isinstance(rep, BenchReport)


def test_example2_needs_odd_grid():
    with pytest.raises(SpikeOffGrid):
        Example2Config(grid_points=32)
