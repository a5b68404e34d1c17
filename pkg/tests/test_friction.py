import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from frictionest import friction, simloop
from frictionest.dynamics import ManipulatorModel
from frictionest.errors import DomainError, EstimationError
from frictionest.friction import FrictionModel, FrictionParams
from oracles import stribeck_scalar


def test_regressor_times_parameters_matches_scalar_model():
    rng = np.random.default_rng(0)
    v_brk = 0.1
    p = FrictionParams(1.1, 0.6, 0.3, v_brk)
    for v in rng.uniform(-2, 2, 500):
        row = friction.friction_regressor(v, p.v_st, p.v_coul)
        assert row @ p.vector()[0] == pytest.approx(stribeck_scalar(v, 1.1, 0.6, 0.3, v_brk), abs=1e-13)


def test_velocity_scales_follow_breakaway():
    p = FrictionParams(0.8, 0.5, 0.4, 0.05)
    assert p.v_st == pytest.approx(0.05 * math.sqrt(2))
    assert p.v_coul == pytest.approx(0.005)


def test_stribeck_peak_location_and_height():
    # the Stribeck column peaks at v = v_st with height sqrt(2/e) * (f_brk - f_c)
    p = FrictionParams(0.8, 0.0, 0.0, 0.1)
    v = np.linspace(1e-4, 1.0, 200001)
    tau = friction.stribeck_torque(p, v)
    assert v[np.argmax(tau)] == pytest.approx(p.v_st[0], rel=1e-3)
    assert tau.max() == pytest.approx(math.sqrt(2.0 / math.e) * 0.8, rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(v=st.floats(-3, 3), fc=st.floats(0, 2), extra=st.floats(0, 2), fv=st.floats(0, 1))
def test_friction_is_odd_and_dissipative(v, fc, extra, fv):
    p = FrictionParams(fc + extra, fc, fv, 0.1)
    tau = friction.stribeck_torque(p, v)
    assert friction.stribeck_torque(p, -v) == pytest.approx(-tau, abs=1e-12)
    assert tau * v >= -1e-15


def test_regressor_derivative_matches_finite_differences():
    v = np.linspace(-0.7, 0.7, 41) + 1e-3
    h = 1e-7
    fd = (friction.friction_regressor(v + h, 0.14, 0.01) - friction.friction_regressor(v - h, 0.14, 0.01)) / (2 * h)
    np.testing.assert_allclose(friction.friction_regressor_derivative(v, 0.14, 0.01), fd, rtol=1e-5, atol=1e-6)


def test_simplified_regressor_is_coulomb_plus_viscous():
    v = np.array([-0.3, 0.0, 0.2])
    np.testing.assert_allclose(friction.simplified_regressor(v, 0.01),
                               friction.friction_regressor(v, 0.14, 0.01)[:, 1:])


def test_clip_passivity_example():
    np.testing.assert_array_equal(friction.clip_passivity([-1.0, 2.0, 3.0]), [0.0, 2.0, 3.0])


@given(arrays(float, (4, 3), elements=st.floats(-10, 10)))
def test_clip_passivity_nonnegative_and_idempotent(x):
    once = friction.clip_passivity(x)
    assert np.all(once >= 0)
    np.testing.assert_array_equal(friction.clip_passivity(once), once)


@pytest.mark.parametrize("args", [(0.4, 0.5, 0.1, 0.1), (0.8, -0.1, 0.1, 0.1),
                                  (0.8, 0.5, -0.1, 0.1), (0.8, 0.5, 0.1, 0.0),
                                  (np.nan, 0.5, 0.1, 0.1)])
def test_invalid_parameters_rejected(args):
    with pytest.raises(DomainError):
        FrictionParams(*args)


def test_nonpositive_scales_rejected():
    with pytest.raises(DomainError):
        friction.friction_regressor(0.1, 0.0, 0.01)
    with pytest.raises(DomainError):
        friction.simplified_regressor(0.1, -1.0)


def test_vector_round_trip():
    p = FrictionParams([0.8, 1.0], [0.5, 0.3], [0.4, 0.2], [0.1, 0.05])
    q = FrictionParams.from_vector(p.vector(), p.v_brk)
    for k in ("f_brk", "f_c", "f_vis", "v_brk"):
        np.testing.assert_allclose(getattr(q, k), getattr(p, k))
    assert FrictionParams.from_dict(p.to_dict()).to_dict() == p.to_dict()


def test_model_torque_equals_truth():
    p = FrictionParams([0.8, 1.0], [0.5, 0.3], [0.4, 0.2], [0.1, 0.05])
    m = FrictionModel.from_params(p)
    v = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    np.testing.assert_allclose(m.torque(v), friction.stribeck_torque(p, v), atol=1e-14)


def test_simplified_kind_zeroes_stribeck_column():
    m = FrictionModel([[1.0, 0.5, 0.4], [1.0, 0.5, 0.4]], 0.14, 0.01, ("stribeck", "simplified"))
    assert m.pi_f[1, 0] == 0.0 and m.pi_f[0, 0] == 1.0
    np.testing.assert_array_equal(m.column_mask, [[True, True, True], [False, True, True]])
    assert FrictionModel.from_dict(m.to_dict()).kinds == m.kinds
    with pytest.raises(DomainError):
        FrictionModel([[1.0, 0.5, 0.4]], 0.14, 0.01, ("coulomb",))


def test_breakaway_from_torque_ramp():
    truth = FrictionParams(0.8, 0.5, 0.4, 0.02)
    model = ManipulatorModel.one_dof(com=1e-9, inertia=0.5, gravity=0.0)
    trace = simloop.torque_ramp_trace(model, truth, 0.05, 30.0)
    est = friction.estimate_breakaway(trace, 0.05)
    assert est == pytest.approx(0.02, rel=0.5)


def test_breakaway_requires_motion():
    class Still:
        q = np.zeros((10, 1))
        qd = np.zeros((10, 1))
    with pytest.raises(EstimationError):
        friction.estimate_breakaway(Still(), 0.01)
