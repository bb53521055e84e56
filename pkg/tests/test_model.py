import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sint

from chemotaxsim.errors import ParameterError, PositivityError
from chemotaxsim.grid import GridSpec
from chemotaxsim.model import (DiffusionSpec, InitialData, eval_D, eval_Dbar, make_initial, power,
                               power_offset, shift_regularize, v_to_w, w_to_v)

specs = st.builds(
    DiffusionSpec,
    delta=st.floats(0.01, 10),
    m=st.floats(1, 4),
    d0=st.floats(0, 2),
    shift=st.floats(0, 1),
)


def test_kinds_and_degeneracy():
    assert power(1, 2).kind == "power" and not power(1, 2).nondegenerate
    assert power(1, 1).nondegenerate
    assert power_offset(1, 2, 0.5).kind == "power_offset"
    s = shift_regularize(power(1, 2), 0.1)
    assert s.kind == "shifted" and s.nondegenerate and s.base == power(1, 2)
    assert shift_regularize(s, 0.2).shift == pytest.approx(0.3)


@pytest.mark.parametrize("kw", [dict(delta=0, m=2), dict(delta=1, m=0.5), dict(delta=1, m=2, d0=-1),
                                dict(delta=1, m=2, shift=-0.1), dict(delta=math.nan, m=2)])
def test_invalid_specs(kw):
    with pytest.raises(ParameterError):
        DiffusionSpec(**kw)


def test_power_offset_needs_positive_d0():
    with pytest.raises(ParameterError):
        power_offset(1, 2, 0)
    with pytest.raises(ParameterError):
        shift_regularize(power(1, 2), 0.0)


def test_known_values():
    assert eval_D(power(2, 3), 3.0) == pytest.approx(18.0)
    assert eval_Dbar(power(2, 3), 3.0) == pytest.approx(18.0)
    assert eval_D(power_offset(1, 2, 1), 2.0) == pytest.approx(3.0)
    assert eval_Dbar(power_offset(1, 2, 1), 2.0) == pytest.approx(4.0)
    assert eval_D(shift_regularize(power(1, 2), 0.5), 0.0) == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        eval_D(power(1, 2), np.array([1.0, -0.1]))
    with pytest.raises(ParameterError):
        eval_Dbar(power(1, 2), -1.0)


@given(specs, st.floats(0, 20))
def test_lower_bound(spec, s):
    assert eval_D(spec, s) >= spec.delta * s ** (spec.m - 1) - 1e-12 * max(1.0, eval_D(spec, s))


@settings(max_examples=40)
@given(specs, st.floats(0, 5))
def test_antiderivative_against_quadrature(spec, s):
    exact, _ = sint.quad(lambda x: spec(x), 0, s, epsabs=1e-13, epsrel=1e-11)
    assert eval_Dbar(spec, s) == pytest.approx(exact, rel=1e-8, abs=1e-11)


@given(specs, st.floats(0.1, 5))
def test_dbar_monotone(spec, s):
    assert eval_Dbar(spec, s + 0.1) >= eval_Dbar(spec, s)


def test_vectorized_matches_scalar():
    spec = DiffusionSpec(0.7, 2.5, 0.1, 0.2)
    s = np.linspace(0, 3, 7)
    assert np.allclose(eval_D(spec, s), [eval_D(spec, x) for x in s], rtol=1e-14)


@given(st.lists(st.floats(1e-200, 1e3), min_size=1, max_size=20))
def test_w_roundtrip(values):
    v = np.array(values)
    vmax = float(v.max())
    w = v_to_w(v, vmax)
    assert np.all(w >= 0)
    assert np.allclose(w_to_v(w, vmax), v, rtol=1e-12, atol=0)


def test_v_to_w_reports_cell():
    v = np.ones((3, 3))
    v[1, 2] = 0.0
    with pytest.raises(PositivityError) as ei:
        v_to_w(v, 1.0)
    assert ei.value.index == (1, 2)
    with pytest.raises(ParameterError):
        w_to_v(np.array([-1e-6]), 1.0)


def test_initial_data_invariants():
    g = GridSpec.uniform(2, 4)
    with pytest.raises(ParameterError):
        InitialData(g, g.full(-1.0), g.full(1.0))
    with pytest.raises(ParameterError):
        InitialData(g, g.full(1.0), g.full(0.0))
    d = InitialData(g, g.full(1.0), g.full(2.0))
    assert d.v0_max == 2.0
    assert not d.u0.flags.writeable
    assert np.allclose(d.w0, 0.0)


def test_presets():
    g = GridSpec.uniform(2, 16, 4.0)
    c = make_initial("constant", g, {"u": 2, "v": 3})
    assert np.all(c.u0 == 2) and np.all(c.v0 == 3)
    b = make_initial("gaussian_bump", g, {"amplitude": 2, "width": 0.5})
    assert b.u0.max() < 2 and b.u0.min() >= 0
    p = make_initial("perturbed_constant", g, {"u": 1, "v": 1, "amplitude": 0.5, "modes": [1, 0]})
    assert p.u0.mean() == pytest.approx(1.0)
    r1 = make_initial("seeded_random", g, {}, seed=5)
    r2 = make_initial("seeded_random", g, {}, seed=5)
    r3 = make_initial("seeded_random", g, {}, seed=6)
    assert np.array_equal(r1.u0, r2.u0) and not np.array_equal(r1.u0, r3.u0)
    with pytest.raises(ParameterError):
        make_initial("nope", g)
    with pytest.raises(ParameterError):
        make_initial("perturbed_constant", g, {"amplitude": 1.0})
    with pytest.raises(ParameterError):
        make_initial("seeded_random", g, {}, seed=-1)
