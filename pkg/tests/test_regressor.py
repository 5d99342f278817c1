import numpy as np
import pytest

from uvmsid.dynamics import GeneralizedState, hydro_rnea, inverse_dynamics
from uvmsid.model import (
    N_PER_LINK,
    N_VEHICLE,
    ParameterVector,
    link_slice,
    model_from_parameters,
)
from uvmsid.regressor import (
    BaseMotion,
    base_motion_from_state,
    manipulator_regressor,
    system_regressor,
    vehicle_regressor,
)

from conftest import random_state


def test_vehicle_restoring_upright_pattern():
    eta = np.zeros(6)
    Y = vehicle_regressor(np.zeros(6), np.zeros(6), eta)
    w_col = Y[:, 22]
    # only the heave row is driven by the weight lump at level pose
    assert w_col[2] != 0.0
    assert np.abs(np.delete(w_col, 2)).max() == 0.0
    assert np.abs(Y[3:, 22]).max() == 0.0  # no moment rows
    b_col = Y[:, 23]
    assert b_col[2] == -w_col[2]


def test_vehicle_inertia_columns_match_unit_lumps(rng):
    from uvmsid.model import build_vehicle_inertia

    nu = rng.uniform(-1, 1, 6)
    nu_dot = rng.uniform(-1, 1, 6)
    eta = rng.uniform(-0.3, 0.3, 6)
    Y = vehicle_regressor(nu, nu_dot, eta)
    for j in range(10):
        Mj = build_vehicle_inertia(np.eye(10)[j])
        p = Mj @ nu
        v, w = nu[:3], nu[3:]
        coriolis = np.concatenate(
            [np.cross(w, p[:3]), np.cross(v, p[:3]) + np.cross(w, p[3:])]
        )
        assert np.abs(Y[:, j] - (Mj @ nu_dot + coriolis)).max() < 1e-12


def test_pure_surge_drag_columns():
    nu = np.zeros(6)
    nu[0] = 1.0
    Y = vehicle_regressor(nu, np.zeros(6), np.zeros(6))
    assert Y[0, 10] == -1.0
    assert Y[0, 16] == -1.0
    drag_cols = Y[:, 10:22].copy()
    drag_cols[0, 0] = drag_cols[0, 6] = 0.0
    assert np.abs(drag_cols).max() == 0.0


def test_manipulator_friction_columns_zero_at_rest(model):
    base = BaseMotion(np.zeros(6), np.concatenate([np.zeros(3), [0, 0, -9.80665]]))
    Y = manipulator_regressor(model, np.array([0.3, -0.2, 0.5, 0.1]), np.zeros(4),
                              np.zeros(4), base)
    for j in range(4):
        col = N_PER_LINK * j
        assert np.abs(Y[:, col + 10]).max() == 0.0
        assert np.abs(Y[:, col + 11]).max() == 0.0  # sgn(0) = 0


def test_manipulator_block_upper_triangular_exact(model, rng):
    st = random_state(rng)
    base = base_motion_from_state(st, model.gravity)
    Y = manipulator_regressor(model, st.mu, st.mu_dot, st.mu_ddot, base)
    for i in range(4):
        for j in range(i):
            block = Y[i, N_PER_LINK * j:N_PER_LINK * (j + 1)]
            assert np.abs(block).max() == 0.0
    # six zero blocks for n = 4
    zero_blocks = sum(1 for i in range(4) for j in range(i))
    assert zero_blocks == 6


def test_manipulator_columns_match_unit_parameter_dynamics(model, rng):
    st = random_state(rng)
    base = base_motion_from_state(st, model.gravity)
    Y = manipulator_regressor(model, st.mu, st.mu_dot, st.mu_ddot, base)
    for j in (0, 2, 3):
        for p in (0, 1, 4, 7, 9, 10, 11):
            basis = np.zeros(75)
            basis[link_slice(j, 4).start + p] = 1.0
            probe = model_from_parameters(model, ParameterVector(basis, 4))
            _, tau_m, _ = hydro_rnea(probe, st)
            assert np.abs(Y[:, N_PER_LINK * j + p] - tau_m).max() < 1e-10


def test_system_regressor_zero_and_homogeneity(model, rng, pi_true):
    st = random_state(rng)
    Y = system_regressor(model, st).assembled
    assert np.abs(Y @ np.zeros(75)).max() == 0.0
    assert np.allclose(Y @ (2.0 * pi_true.values), 2.0 * (Y @ pi_true.values))


def test_system_regressor_matches_dynamics(model, rng, pi_true):
    for _ in range(25):
        st = random_state(rng)
        Y = system_regressor(model, st).assembled
        gf, tau_mv = inverse_dynamics(model, st)
        lhs = np.concatenate([gf.tau_v + tau_mv, gf.tau_m])
        denom = max(1.0, np.abs(lhs).max())
        assert np.abs(Y @ pi_true.values - lhs).max() / denom < 1e-8


def test_system_regressor_block_diagonal_exact(model, rng):
    st = random_state(rng)
    block = system_regressor(model, st)
    Y = block.assembled
    assert np.abs(Y[:6, N_VEHICLE:]).max() == 0.0
    assert np.abs(Y[6:, :N_VEHICLE]).max() == 0.0


def test_regressor_exact_linearity(model, rng):
    st = random_state(rng)
    Y = system_regressor(model, st).assembled
    a = rng.uniform(-1, 1, 75)
    b = rng.uniform(-1, 1, 75)
    lhs = Y @ (0.25 * a + 4.0 * b)
    rhs = 0.25 * (Y @ a) + 4.0 * (Y @ b)
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_fixed_base_reduction_matches_gravity_bias(model):
    # pure gravity base motion reproduces the classic fixed-base regressor:
    # columns equal torques of a fixed-base chain under gravity only
    mu = np.array([0.4, -0.7, 0.2, 0.9])
    mu_dot = np.array([0.5, 0.1, -0.4, 0.2])
    mu_ddot = np.array([1.0, -0.5, 0.3, 0.8])
    g = model.gravity
    base = BaseMotion(np.zeros(6), np.concatenate([np.zeros(3), [0, 0, -g]]))
    Y = manipulator_regressor(model, mu, mu_dot, mu_ddot, base)
    st = GeneralizedState(eta=np.zeros(6), nu=np.zeros(6), mu=mu, mu_dot=mu_dot,
                          mu_ddot=mu_ddot, nu_dot=np.zeros(6))
    base2 = base_motion_from_state(st, g)
    Y2 = manipulator_regressor(model, mu, mu_dot, mu_ddot, base2)
    assert np.abs(Y - Y2).max() < 1e-12
