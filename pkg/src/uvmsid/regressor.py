"""Analytic regressors: generalized forces as linear functions of the lumps.

The assembled system regressor Y satisfies

    [tau_v + tau_mv; tau_m] = Y(state) @ pi

with an exactly block-diagonal layout: vehicle rows only touch the 27 vehicle
lumps, joint rows only the 12-per-link manipulator blocks. The manipulator
part is block upper-triangular, row i being independent of links before i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import GeneralizedState, euler_rotation
from .model import (
    N_PER_LINK,
    N_VEHICLE,
    UvmsModel,
    build_vehicle_inertia,
    restoring_matrix,
)
from .spatial import (
    Array,
    cross_motion,
    inertia_momentum_rows,
    rot_about_axis,
    skew,
    transform_motion,
)

__all__ = [
    "BaseMotion",
    "RegressorBlock",
    "base_motion_from_state",
    "vehicle_regressor",
    "manipulator_regressor",
    "system_regressor",
]

# constant unit-lump inertia matrices, one per vehicle inertia parameter
_VM_BASIS = tuple(build_vehicle_inertia(np.eye(10)[j]) for j in range(10))


@dataclass(frozen=True)
class BaseMotion:
    """Vehicle spatial motion feeding the arm: velocity and gravity-biased
    acceleration, angular-first, in the vehicle body frame."""

    v0: Array
    a0: Array

    def __post_init__(self):
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float).reshape(6))
        object.__setattr__(self, "a0", np.asarray(self.a0, dtype=float).reshape(6))


def base_motion_from_state(state: GeneralizedState, gravity: float) -> BaseMotion:
    """Base motion with the gravity offset folded into the acceleration.

    With a stationary base this reduces to a pure gravity bias, which
    reproduces the classic fixed-base manipulator regressor.
    """
    g_body = euler_rotation(state.eta).T @ np.array([0.0, 0.0, gravity])
    v0 = np.concatenate([state.nu[3:], state.nu[:3]])
    a0 = np.concatenate([state.nu_dot[3:], state.nu_dot[:3] - g_body])
    return BaseMotion(v0, a0)


def _momentum_cross_fossen(nu: Array, p: Array) -> Array:
    """Body-axis Coriolis product: the cross of the motion with a momentum."""
    v, w = nu[:3], nu[3:]
    p_lin, p_ang = p[:3], p[3:]
    return np.concatenate([np.cross(w, p_lin), np.cross(v, p_lin) + np.cross(w, p_ang)])


def vehicle_regressor(nu: Array, nu_dot: Array, eta: Array) -> Array:
    """6x27 vehicle regressor, body-axis rows, columns in lump order."""
    nu = np.asarray(nu, dtype=float).reshape(6)
    nu_dot = np.asarray(nu_dot, dtype=float).reshape(6)
    eta = np.asarray(eta, dtype=float).reshape(6)
    Y = np.zeros((6, N_VEHICLE))
    for j, Mj in enumerate(_VM_BASIS):
        p = Mj @ nu
        Y[:, j] = Mj @ nu_dot + _momentum_cross_fossen(nu, p)
    Y[:, 10:16] = np.diag(-nu)
    Y[:, 16:22] = np.diag(-np.abs(nu) * nu)
    Y[:, 22:27] = restoring_matrix(eta)
    return Y


def _force_cross_matrix(v: Array) -> Array:
    w, lin = v[:3], v[3:]
    X = np.zeros((6, 6))
    X[:3, :3] = skew(w)
    X[:3, 3:] = skew(lin)
    X[3:, 3:] = skew(w)
    return X


def manipulator_regressor(model: UvmsModel, mu: Array, mu_dot: Array, mu_ddot: Array,
                          base_motion: BaseMotion) -> Array:
    """n x 12n manipulator regressor for motor torques.

    Inertial columns come from the per-link momentum regressor propagated
    through the chain kinematics; dissipative columns stay on the diagonal
    blocks. Entries below the block diagonal are exact zeros.
    """
    n = model.n_links
    mu = np.asarray(mu, dtype=float).reshape(n)
    mu_dot = np.asarray(mu_dot, dtype=float).reshape(n)
    mu_ddot = np.asarray(mu_ddot, dtype=float).reshape(n)
    Y = np.zeros((n, N_PER_LINK * n))

    # outward kinematics
    Es: list[Array] = []
    rs: list[Array] = []
    vs: list[Array] = []
    accs: list[Array] = []
    prev_v, prev_a = base_motion.v0, base_motion.a0
    for i, joint in enumerate(model.joints):
        E = rot_about_axis(joint.axis, mu[i]).T @ joint.origin_rotation
        r = joint.origin_translation
        s = joint.subspace
        sqd = s * mu_dot[i]
        vi = transform_motion(E, r, prev_v) + sqd
        ai = transform_motion(E, r, prev_a) + s * mu_ddot[i] + cross_motion(vi, sqd)
        Es.append(E)
        rs.append(r)
        vs.append(vi)
        accs.append(ai)
        prev_v, prev_a = vi, ai

    # joint axes expressed in every downstream link frame
    axes_in_frame = [[None] * n for _ in range(n)]
    for i, joint in enumerate(model.joints):
        s = joint.subspace
        axes_in_frame[i][i] = s
        for j in range(i + 1, n):
            s = transform_motion(Es[j], rs[j], s)
            axes_in_frame[i][j] = s

    for j in range(n):
        A_j = inertia_momentum_rows(accs[j]) + _force_cross_matrix(vs[j]) @ inertia_momentum_rows(vs[j])
        col = N_PER_LINK * j
        for i in range(j + 1):
            Y[i, col:col + 10] = axes_in_frame[i][j] @ A_j
        Y[j, col + 10] = mu_dot[j]
        Y[j, col + 11] = np.sign(mu_dot[j])
    return Y


@dataclass(frozen=True)
class RegressorBlock:
    """Vehicle and manipulator regressors plus the block-diagonal assembly."""

    vehicle_rows: Array
    manipulator_rows: Array

    @property
    def assembled(self) -> Array:
        n = self.manipulator_rows.shape[0]
        Y = np.zeros((6 + n, N_VEHICLE + N_PER_LINK * n))
        Y[:6, :N_VEHICLE] = self.vehicle_rows
        Y[6:, N_VEHICLE:] = self.manipulator_rows
        return Y


def system_regressor(model: UvmsModel, state: GeneralizedState) -> RegressorBlock:
    """Complete regressor at one state; vehicle rows predict tau_v + tau_mv."""
    base = base_motion_from_state(state, model.gravity)
    return RegressorBlock(
        vehicle_rows=vehicle_regressor(state.nu, state.nu_dot, state.eta),
        manipulator_rows=manipulator_regressor(
            model, state.mu, state.mu_dot, state.mu_ddot, base
        ),
    )
