import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_states
from frictionest import dynamics
from frictionest.errors import DomainError
from oracles import oracle_inverse_dynamics, oracle_matrices

angles = st.floats(-3.0, 3.0)
rates = st.floats(-2.0, 2.0)


@pytest.mark.parametrize("kind", ["one_dof", "two_link"])
def test_matrices_match_lagrangian_oracle(kind, one_dof, two_link):
    model = one_dof if kind == "one_dof" else two_link
    q, qd, _ = random_states(model, 500, seed=1)
    M, C, g = oracle_matrices(model, q, qd)
    np.testing.assert_allclose(dynamics.mass_matrix(model, q), M, atol=1e-13)
    np.testing.assert_allclose(dynamics.coriolis_matrix(model, q, qd), C, atol=1e-13)
    np.testing.assert_allclose(dynamics.gravity_vector(model, q), g, atol=1e-12)


@pytest.mark.parametrize("kind", ["one_dof", "two_link"])
def test_regressor_reproduces_inverse_dynamics(kind, one_dof, two_link):
    model = one_dof if kind == "one_dof" else two_link
    q, qd, qdd = random_states(model, 2000, seed=2)
    tau = oracle_inverse_dynamics(model, q, qd, qdd)
    Y = dynamics.rigid_body_regressor(model, q, qd, qdd)
    assert Y.shape == (2000, model.n_joints, model.n_params)
    rel = np.linalg.norm(Y @ model.params - tau, axis=1) / np.linalg.norm(tau, axis=1)
    assert rel.max() < 1e-10
    np.testing.assert_allclose(dynamics.inverse_dynamics(model, q, qd, qdd), tau, atol=1e-12)


def test_reference_regressor_uses_reference_velocity(two_link):
    q, qd, qdd = random_states(two_link, 200, seed=3)
    r = np.random.default_rng(4).uniform(-1, 1, qd.shape)
    Y = dynamics.rigid_body_regressor(two_link, q, qd, qdd, qd_ref=r)
    M, C, g = oracle_matrices(two_link, q, qd)
    expect = np.einsum("kij,kj->ki", M, qdd) + np.einsum("kij,kj->ki", C, r) + g
    np.testing.assert_allclose(Y @ two_link.params, expect, atol=1e-12)


def test_base_parameter_values(one_dof):
    np.testing.assert_allclose(one_dof.params, [0.5, 0.5])
    m = dynamics.ManipulatorModel.two_link(masses=(2.0, 1.0), lengths=(0.6, 0.4),
                                           com=(0.3, 0.2), inertias=(0.1, 0.05))
    np.testing.assert_allclose(m.params, [2 * 0.3 + 0.6, 0.1 + 2 * 0.09 + 0.36, 0.2, 0.05 + 0.04])


@settings(max_examples=200, deadline=None)
@given(q1=angles, q2=angles)
def test_mass_matrix_symmetric_positive_definite(q1, q2):
    model = dynamics.ManipulatorModel.two_link()
    M = dynamics.mass_matrix(model, [q1, q2])
    np.testing.assert_allclose(M, M.T, atol=1e-15)
    assert np.linalg.eigvalsh(M).min() > 0


@settings(max_examples=200, deadline=None)
@given(q1=angles, q2=angles, v1=rates, v2=rates)
def test_mdot_minus_2c_is_skew(q1, q2, v1, v2):
    model = dynamics.ManipulatorModel.two_link()
    q, qd = np.array([q1, q2]), np.array([v1, v2])
    h = 1e-6
    Mdot = (dynamics.mass_matrix(model, q + h * qd, check=False)
            - dynamics.mass_matrix(model, q - h * qd, check=False)) / (2 * h)
    N = Mdot - 2 * dynamics.coriolis_matrix(model, q, qd)
    np.testing.assert_allclose(N, -N.T, atol=1e-8)


def test_regressor_partials_match_finite_differences(two_link):
    q, qd, qdd = (x[0] for x in random_states(two_link, 1, seed=5))
    dq, dqd, dqdd = dynamics.regressor_partials(two_link, q, qd, qdd)
    h = 1e-6
    for m in range(2):
        e = np.zeros(2)
        e[m] = h
        for analytic, args in ((dq, lambda d: (q + d, qd, qdd)), (dqd, lambda d: (q, qd + d, qdd)),
                               (dqdd, lambda d: (q, qd, qdd + d))):
            fd = (dynamics.rigid_body_regressor(two_link, *args(e), check=False)
                  - dynamics.rigid_body_regressor(two_link, *args(-e), check=False)) / (2 * h)
            np.testing.assert_allclose(analytic[..., m], fd, atol=1e-8)


def test_forward_dynamics_inverts_inverse_dynamics(two_link):
    q, qd, qdd = random_states(two_link, 100, seed=6)
    tau_f = np.random.default_rng(7).uniform(-0.5, 0.5, q.shape)
    tau = dynamics.inverse_dynamics(two_link, q, qd, qdd) + tau_f
    np.testing.assert_allclose(dynamics.forward_dynamics(two_link, q, qd, tau, tau_f, check=False),
                               qdd, atol=1e-10)


def test_gravity_is_gradient_of_potential(two_link):
    q = np.array([0.4, -0.7])
    h = 1e-6
    grad = [(dynamics.potential_energy(two_link, q + h * e) - dynamics.potential_energy(two_link, q - h * e))
            / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(dynamics.gravity_vector(two_link, q), grad, atol=1e-8)


def test_hanging_pose_has_no_gravity_torque(one_dof, two_link):
    assert dynamics.gravity_vector(one_dof, [0.0]) == pytest.approx([0.0])
    np.testing.assert_allclose(dynamics.gravity_vector(two_link, [0.0, 0.0]), 0.0)


def test_forward_kinematics_reach(two_link):
    p = dynamics.forward_kinematics(two_link, [0.0, 0.0])
    np.testing.assert_allclose(p, [0.0, -0.9])
    p = dynamics.forward_kinematics(two_link, [np.pi / 2, 0.0])
    np.testing.assert_allclose(p, [0.9, 0.0], atol=1e-15)


def test_limits_are_enforced(one_dof):
    with pytest.raises(DomainError):
        dynamics.mass_matrix(one_dof, [4.0])
    with pytest.raises(DomainError):
        dynamics.rigid_body_regressor(one_dof, [0.0], [5.0], [0.0])
    with pytest.raises(DomainError):
        dynamics.forward_dynamics(one_dof, [0.0], [0.0], [1e3])
    with pytest.raises(DomainError):
        dynamics.mass_matrix(one_dof, [0.0, 0.0])


@pytest.mark.parametrize("bad", [{"masses": (0.0, 1.0)}, {"lengths": (1.0, -1.0)},
                                 {"inertias": (np.nan, 0.1)}, {"gravity": -1.0},
                                 {"q_min": 1.0, "q_max": 0.0}, {"tau_max": 0.0}])
def test_invalid_models_rejected(bad):
    with pytest.raises(DomainError):
        dynamics.ManipulatorModel.two_link(**bad)


def test_model_dict_round_trip(two_link):
    again = dynamics.ManipulatorModel.from_dict(two_link.to_dict())
    np.testing.assert_array_equal(again.params, two_link.params)
    assert again.kind == two_link.kind


def test_structural_bounds_enclose_samples(two_link):
    b = dynamics.structural_bounds(two_link, n_grid=21)
    q, qd, qdd = random_states(two_link, 500, seed=8)
    eig = np.linalg.eigvalsh(dynamics.mass_matrix(two_link, q))
    assert b.sigma_min <= eig.min() + 1e-12 and eig.max() <= b.sigma_max * (1 + 1e-3)
    g = np.linalg.norm(dynamics.gravity_vector(two_link, q), axis=1)
    assert g.max() <= b.c1 * (1 + 1e-3)
    assert 0 < b.sigma_min < b.sigma_max
