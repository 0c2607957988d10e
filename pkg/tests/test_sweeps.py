from __future__ import annotations

import numpy as np
import pytest

from modeguide.data import make_overlap_model, make_planted_model
from modeguide.exceptions import ConfigError, MetricError
from modeguide.sampler import GuidanceConfig
from modeguide.sweeps import SWEEP_COLUMNS, sweep, sweep_lambda, sweep_tstop

CFG = GuidanceConfig(cfg_scale=1.0, lambda_=0.1)
SMALL = dict(ipc=4, test_count=100, repeats=2)


@pytest.fixture(scope="module")
def model():
    return make_planted_model(2, 4, 30.0, "imbalanced", 0.3, 1.0, 2)


def test_tstop_at_steps_equals_baseline(model, sched):
    res = sweep_tstop(model, [sched.num_sampler_steps], CFG, seeds=(0, 1), **SMALL)
    base = sweep_lambda(model, [0.0], CFG, seeds=(0, 1), **SMALL)
    np.testing.assert_array_equal(res.table, base.table)


def test_lambda_zero_row_equals_baseline(model):
    res = sweep_lambda(model, [0.0, 0.1], CFG, seeds=(0, 1), **SMALL)
    stop = sweep_tstop(model, [50], CFG, seeds=(0, 1), **SMALL)
    np.testing.assert_array_equal(res.table[0], stop.table[0])


def test_diversity_25_at_least_50(model):
    res = sweep_tstop(model, [50, 25], CFG, seeds=(0, 1, 2), **SMALL)
    div = res.column("diversity")
    assert div[1] >= div[0]


def test_accuracy_lambda_small_beats_large():
    res = sweep_lambda(make_overlap_model(), [0.1, 10.0], CFG, seeds=range(6), ipc=4,
                       test_count=200, repeats=5)
    acc = res.column("accuracy")
    assert acc[0] > acc[1]


def test_fidelity_full_guidance_below_stopped():
    # On the planted coverage benchmark, guiding all the way at lambda = 5
    # leaves samples less likely under the model than stopping at 25.
    model = make_planted_model(2, 8, 30.0, "imbalanced", 0.3, 1.0, 2)
    res = sweep_tstop(model, [0, 25], CFG.replace(lambda_=5.0), seeds=range(10), ipc=8,
                      test_count=50, repeats=1)
    fid = res.column("fidelity")
    assert fid[0] < fid[1]


@pytest.mark.xfail(strict=True, reason="on the overlap benchmark stopping early "
                   "lowers fidelity at lambda = 5; the ordering is benchmark dependent")
def test_fidelity_ordering_on_overlap_benchmark():
    res = sweep_tstop(make_overlap_model(), [0, 25], CFG.replace(lambda_=5.0),
                      seeds=range(10), ipc=4, test_count=50, repeats=1)
    fid = res.column("fidelity")
    assert fid[0] < fid[1]


def test_result_shape_and_best(model):
    res = sweep_lambda(model, [0.0, 0.1, 1.0], CFG, seeds=(0, 1), **SMALL)
    assert res.header == ["lambda", *SWEEP_COLUMNS]
    assert res.table.shape == (3, len(SWEEP_COLUMNS))
    assert res.cells["accuracy"].shape == (3, 2)
    np.testing.assert_allclose(res.cells["coverage"].mean(axis=1), res.column("coverage"))
    assert res.best("accuracy") in res.values
    assert [r[0] for r in res.rows()] == [0.0, 0.1, 1.0]


def test_default_tstop_grid(model, sched):
    res = sweep_tstop(model, None, CFG, seeds=(0,), ipc=2, test_count=20, repeats=1)
    assert res.values == list(range(50, -1, -5))


def test_n_jobs_invariance(model):
    a = sweep_lambda(model, [0.0, 0.1], CFG, seeds=(0, 1), n_jobs=1, **SMALL)
    b = sweep_lambda(model, [0.0, 0.1], CFG, seeds=(0, 1), n_jobs=2, **SMALL)
    np.testing.assert_array_equal(a.table, b.table)


def test_bad_values_rejected(model):
    with pytest.raises(ConfigError):
        sweep_tstop(model, [51], CFG, **SMALL)
    with pytest.raises(ConfigError):
        sweep_lambda(model, [-1.0], CFG, **SMALL)
    with pytest.raises(ConfigError):
        sweep(model, "cfg", [1.0], CFG, **SMALL)


def test_failing_cell_is_named(model):
    # too few reference points for the default 50 neighbours
    with pytest.raises(MetricError, match=r"sweep cell lambda=0.1 seed=3"):
        sweep_lambda(model, [0.1], CFG, seeds=(3,), ipc=2, test_count=10, repeats=1,
                     reference_size=5)
