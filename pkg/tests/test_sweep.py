import pytest

from chemotaxsim.errors import ParameterError
from chemotaxsim.grid import GridSpec
from chemotaxsim.model import power
from chemotaxsim.stepper import SchemeConfig
from chemotaxsim.sweep import (SWEEP_HEADER, SweepBase, plan, sweep_csv_text, sweep_passed,
                               threshold_m, threshold_sweep)


def base():
    return SweepBase(GridSpec.uniform(2, 8, 4.0), power(1, 2), SchemeConfig(0.2, 0.1), "gaussian_bump",
                     {"amplitude": 1.0, "width": 0.6, "noise": 0.3}, base_seed=100)


def test_plan_is_cartesian_and_seeded():
    tasks = plan([1.2, 1.5, 1.8], 3, 7)
    assert len(tasks) == 9
    assert [(t.m, t.trial, t.seed) for t in tasks[:4]] == [(1.2, 0, 7), (1.2, 1, 8), (1.2, 2, 9), (1.5, 0, 7)]
    with pytest.raises(ParameterError):
        plan([], 3)
    with pytest.raises(ParameterError):
        plan([0.9], 1)
    with pytest.raises(ParameterError):
        plan([2.0], 0)


def test_threshold():
    assert threshold_m(2) == 1.5 and threshold_m(3) == 1.75


def test_sweep_order_independent_of_jobs():
    serial = threshold_sweep(base(), [1.2, 2.0], 2)
    parallel = threshold_sweep(base(), [1.2, 2.0], 2, jobs=3)
    assert sweep_csv_text(serial) == sweep_csv_text(parallel)
    assert [r.seed for r in serial] == [100, 101, 100, 101]
    assert [r.above_threshold for r in serial] == [False, False, True, True]
    # different seeds give different noisy data
    assert serial[0].max_sup_u != serial[1].max_sup_u
    text = sweep_csv_text(serial)
    assert text.splitlines()[0] == SWEEP_HEADER
    assert sweep_passed(serial)
