"""Inverse and forward dynamics of the coupled vehicle-manipulator system.

The inverse dynamics follow a two-pass recursion over the serial chain with
hydrodynamic forces (added mass, drag, buoyancy) and optional geared-rotor
terms folded in. The floating vehicle is the root body; all link quantities
are propagated from its body frame outward and the joint wrenches accumulated
back inward.

Generalized coordinates are stacked as [vehicle, joints] with the vehicle
part in body-axis order [u, v, w, p, q, r]; spatial 6-vectors used internally
are angular-first.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    FULL_HYDRO,
    GRAVITY_BASE_BIAS,
    LUMPED,
    UvmsModel,
    build_vehicle_inertia,
    fossen_to_spatial,
    fossen_to_spatial_matrix,
    restoring_matrix,
    spatial_to_fossen,
)
from .spatial import Array, SpatialForce, cross_force, cross_motion, rot_about_axis

__all__ = [
    "DynamicsError",
    "PitchSingularityError",
    "SingularInertiaError",
    "GeneralizedState",
    "GeneralizedForce",
    "Trajectory",
    "euler_rotation",
    "euler_kinematics",
    "hydro_rnea",
    "inverse_dynamics",
    "mass_matrix_and_bias",
    "forward_dynamics",
    "simulate",
    "kinetic_energy",
]

CONDITION_LIMIT = 1e12


class DynamicsError(RuntimeError):
    pass


class PitchSingularityError(DynamicsError):
    """Euler kinematics are singular at |pitch| >= pi/2."""


class SingularInertiaError(DynamicsError):
    pass


@dataclass(frozen=True)
class GeneralizedState:
    """Full kinematic state: vehicle pose/velocity plus joint coordinates."""

    eta: Array
    nu: Array
    mu: Array
    mu_dot: Array
    mu_ddot: Array | None = None
    nu_dot: Array | None = None

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float).reshape(6)
        nu = np.asarray(self.nu, dtype=float).reshape(6)
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        mu_dot = np.asarray(self.mu_dot, dtype=float).reshape(mu.shape)
        mu_ddot = (
            np.zeros_like(mu)
            if self.mu_ddot is None
            else np.asarray(self.mu_ddot, dtype=float).reshape(mu.shape)
        )
        nu_dot = (
            np.zeros(6)
            if self.nu_dot is None
            else np.asarray(self.nu_dot, dtype=float).reshape(6)
        )
        for name, arr in (("eta", eta), ("nu", nu), ("mu", mu),
                          ("mu_dot", mu_dot), ("mu_ddot", mu_ddot), ("nu_dot", nu_dot)):
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite entries in {name}")
        if abs(eta[4]) >= np.pi / 2:
            raise PitchSingularityError(
                f"pitch {eta[4]:.4f} rad reaches the Euler-kinematics singularity"
            )
        for name, arr in (("eta", eta), ("nu", nu), ("mu", mu),
                          ("mu_dot", mu_dot), ("mu_ddot", mu_ddot), ("nu_dot", nu_dot)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_links(self) -> int:
        return self.mu.size

    def accel_vector(self) -> Array:
        return np.concatenate([self.nu_dot, self.mu_ddot])

    def with_accel(self, zdd: Array) -> "GeneralizedState":
        zdd = np.asarray(zdd, dtype=float).reshape(6 + self.n_links)
        return replace(self, nu_dot=zdd[:6], mu_ddot=zdd[6:])


@dataclass(frozen=True)
class GeneralizedForce:
    """Vehicle wrench (body axes, [X, Y, Z, K, M, N]) and joint torques."""

    tau_v: Array
    tau_m: Array

    def __post_init__(self):
        tau_v = np.asarray(self.tau_v, dtype=float).reshape(6)
        tau_m = np.asarray(self.tau_m, dtype=float).reshape(-1)
        if not (np.isfinite(tau_v).all() and np.isfinite(tau_m).all()):
            raise ValueError("non-finite generalized force")
        tau_v.setflags(write=False)
        tau_m.setflags(write=False)
        object.__setattr__(self, "tau_v", tau_v)
        object.__setattr__(self, "tau_m", tau_m)

    @classmethod
    def from_vector(cls, tau: Array) -> "GeneralizedForce":
        tau = np.asarray(tau, dtype=float)
        return cls(tau[:6], tau[6:])

    def stacked(self) -> Array:
        return np.concatenate([self.tau_v, self.tau_m])


def euler_rotation(eta: Array) -> Array:
    """Body-to-world rotation for roll-pitch-yaw angles in eta[3:6]."""
    phi, theta, psi = eta[3], eta[4], eta[5]
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth],
            [spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi],
            [-sth, cth * sphi, cth * cphi],
        ]
    )


def euler_kinematics(eta: Array) -> Array:
    """6x6 map J with eta_dot = J(eta) nu; hard failure at the pitch singularity."""
    theta = eta[4]
    if abs(theta) >= np.pi / 2 or abs(np.cos(theta)) < 1e-12:
        raise PitchSingularityError(f"pitch {theta:.4f} rad is singular")
    phi = eta[3]
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, tth = np.cos(theta), np.tan(theta)
    J = np.zeros((6, 6))
    J[:3, :3] = euler_rotation(eta)
    J[3:, 3:] = np.array(
        [
            [1.0, sphi * tth, cphi * tth],
            [0.0, cphi, -sphi],
            [0.0, sphi / cth, cphi / cth],
        ]
    )
    return J


# ---------------------------------------------------------------------------
# Batched spatial helpers: V has shape (m, 6)
# ---------------------------------------------------------------------------


def _tm_batch(E: Array, r: Array, V: Array) -> Array:
    w, lin = V[:, :3], V[:, 3:]
    out = np.empty_like(V)
    out[:, :3] = w @ E.T
    out[:, 3:] = (lin - np.cross(r[None, :], w)) @ E.T
    return out


def _inv_tf_batch(E: Array, r: Array, F: Array) -> Array:
    n, lin = F[:, :3], F[:, 3:]
    out = np.empty_like(F)
    lo = lin @ E
    out[:, :3] = n @ E + np.cross(r[None, :], lo)
    out[:, 3:] = lo
    return out


def _cm_single_batch(v: Array, W: Array) -> Array:
    w, lin = v[:3], v[3:]
    out = np.empty_like(W)
    out[:, :3] = np.cross(w[None, :], W[:, :3])
    out[:, 3:] = np.cross(w[None, :], W[:, 3:]) + np.cross(lin[None, :], W[:, :3])
    return out


def _drag_force(hydro_lin: Array, hydro_quad: Array, v_fossen: Array) -> Array:
    """External drag wrench in body axes from stored (nonpositive) coefficients."""
    return (hydro_lin + hydro_quad * np.abs(v_fossen)) * v_fossen


def _id_batch(model: UvmsModel, eta: Array, nu: Array, mu: Array, mu_dot: Array,
              zdd: Array) -> tuple[Array, Array]:
    """Inverse dynamics for a batch of accelerations.

    zdd has shape (m, 6 + n), rows [nu_dot, mu_ddot]. Returns (taus, coupling):
    taus (m, 6 + n) stacking the required vehicle wrench (body axes) and motor
    torques, coupling (m, 6) the wrench the arm applies on the vehicle,
    angular-first in the vehicle frame.
    """
    n = model.n_links
    m = zdd.shape[0]
    if abs(eta[4]) >= np.pi / 2:
        raise PitchSingularityError(f"pitch {eta[4]:.4f} rad is singular")

    g_body = euler_rotation(eta).T @ np.array([0.0, 0.0, model.gravity])
    grav_sp = np.concatenate([np.zeros(3), g_body])
    bias_mode = model.gravity_mode == GRAVITY_BASE_BIAS
    full = model.mode == FULL_HYDRO

    v_v = fossen_to_spatial(nu)
    a_true_v = np.empty((m, 6))
    a_true_v[:, :3] = zdd[:, 3:6]
    a_true_v[:, 3:] = zdd[:, :3]
    a_prop_v = a_true_v - grav_sp[None, :] if bias_mode else a_true_v

    # outward pass over links
    Es = []
    rs = []
    vs = []
    a_props = []
    f_links = np.zeros((n, m, 6))
    f_rotors = np.zeros((n, m, 6))
    E_cum = np.eye(3)  # link frame <- vehicle frame rotation
    rotor_active = np.zeros(n, dtype=bool)
    for i, joint in enumerate(model.joints):
        E = rot_about_axis(joint.axis, mu[i]).T @ joint.origin_rotation
        r = joint.origin_translation
        E_cum = E @ E_cum
        prev_v = vs[i - 1] if i > 0 else v_v
        prev_a = a_props[i - 1] if i > 0 else a_prop_v
        s = joint.subspace
        sqd = s * mu_dot[i]
        vi = (
            np.concatenate([E @ prev_v[:3], E @ (prev_v[3:] - np.cross(r, prev_v[:3]))])
            + sqd
        )
        ai = _tm_batch(E, r, prev_a) + np.outer(zdd[:, 6 + i], s) + cross_motion(vi, sqd)[None, :]

        I = model.link_inertias[i].matrix
        fi = ai @ I.T + cross_force(vi, I @ vi)[None, :]

        g_link = E_cum @ g_body
        if bias_mode:
            a_true_i = ai + np.concatenate([np.zeros(3), g_link])[None, :]
        else:
            a_true_i = ai
            # explicit gravity: subtract the external weight wrench
            h = np.array([I[2, 4], I[0, 5], I[1, 3]])
            mass = I[3, 3]
            fi -= np.concatenate([np.cross(h, g_link), mass * g_link])[None, :]

        if full:
            hydro = model.link_hydro[i]
            if not hydro.is_zero():
                MA = fossen_to_spatial_matrix(hydro.added_mass)
                fi += a_true_i @ MA.T + cross_force(vi, MA @ vi)[None, :]
                v_f = spatial_to_fossen(vi)
                drag = _drag_force(hydro.linear_drag, hydro.quad_drag, v_f)
                fi -= fossen_to_spatial(drag)[None, :]
                if hydro.buoyancy:
                    f_b = -(hydro.buoyancy / model.gravity) * g_link
                    fi -= np.concatenate(
                        [np.cross(hydro.center_of_buoyancy, f_b), f_b]
                    )[None, :]
            if joint.gear_ratio != 1.0 or joint.rotor_inertia.matrix.any():
                rotor_active[i] = True
                G = joint.gear_ratio
                sGqd = s * (G * mu_dot[i])
                # rotor shares the parent motion but spins at the geared rate
                vR = (
                    np.concatenate(
                        [E @ prev_v[:3], E @ (prev_v[3:] - np.cross(r, prev_v[:3]))]
                    )
                    + sGqd
                )
                aR = (
                    _tm_batch(E, r, prev_a)
                    + np.outer(zdd[:, 6 + i] * G, s)
                    + cross_motion(vR, sGqd)[None, :]
                )
                IR = joint.rotor_inertia.matrix
                f_rotors[i] = aR @ IR.T + cross_force(vR, IR @ vR)[None, :]

        Es.append(E)
        rs.append(r)
        vs.append(vi)
        a_props.append(ai)
        f_links[i] = fi

    # inward pass
    taus = np.empty((m, 6 + n))
    for i in range(n - 1, -1, -1):
        joint = model.joints[i]
        s = joint.subspace
        tau_gear = f_links[i] @ s
        friction = joint.static_friction * np.sign(mu_dot[i]) + joint.viscous_friction * mu_dot[i]
        tau_motor = tau_gear / joint.gear_ratio + friction
        if rotor_active[i]:
            tau_motor = tau_motor + f_rotors[i] @ s
        taus[:, 6 + i] = tau_motor
        back = _inv_tf_batch(Es[i], rs[i], f_links[i] + f_rotors[i])
        if i > 0:
            f_links[i - 1] += back
        else:
            support = back  # wrench the vehicle must exert on link 1, vehicle frame

    # vehicle subsystem force (body axes equation, evaluated in spatial layout)
    if model.mode == LUMPED:
        Iv = fossen_to_spatial_matrix(build_vehicle_inertia(model.vehicle_lumps.inertia_lumps))
        f_v = a_true_v @ Iv.T + cross_force(v_v, Iv @ v_v)[None, :]
        drag = _drag_force(model.vehicle_lumps.drag_linear, model.vehicle_lumps.drag_quad, nu)
        f_v -= fossen_to_spatial(drag)[None, :]
        f_v += fossen_to_spatial(restoring_matrix(eta) @ model.vehicle_lumps.restoring)[None, :]
    else:
        veh = model.vehicle
        Irb = veh.rigid_inertia.matrix
        f_v = (a_prop_v if bias_mode else a_true_v) @ Irb.T
        f_v += cross_force(v_v, Irb @ v_v)[None, :]
        MA = fossen_to_spatial_matrix(veh.hydro.added_mass)
        f_v += a_true_v @ MA.T + cross_force(v_v, MA @ v_v)[None, :]
        drag = _drag_force(veh.hydro.linear_drag, veh.hydro.quad_drag, nu)
        f_v -= fossen_to_spatial(drag)[None, :]
        if bias_mode:
            B = veh.hydro.buoyancy
            f_b = -(B / model.gravity) * g_body
            f_v -= np.concatenate(
                [np.cross(veh.hydro.center_of_buoyancy, f_b), f_b]
            )[None, :]
        else:
            f_v += fossen_to_spatial(restoring_matrix(eta) @ veh.restoring_lumps())[None, :]

    tau_v = f_v + support
    taus[:, :3] = tau_v[:, 3:]
    taus[:, 3:6] = tau_v[:, :3]
    return taus, -support


def hydro_rnea(model: UvmsModel, state: GeneralizedState) -> tuple[SpatialForce, Array, SpatialForce]:
    """Inverse dynamics of one state.

    Returns (tau_v, tau_motor, coupling): the required vehicle wrench, the
    motor torques, and the wrench the manipulator applies to the vehicle, so
    that tau_v + coupling equals the vehicle subsystem's own force balance.
    The two spatial wrenches are angular-first in the vehicle body frame.
    """
    if state.n_links != model.n_links:
        raise ValueError("state and model disagree on the number of links")
    zdd = np.concatenate([state.nu_dot, state.mu_ddot])[None, :]
    taus, coupling = _id_batch(model, state.eta, state.nu, state.mu, state.mu_dot, zdd)
    tau_v = SpatialForce.from_vector(fossen_to_spatial(taus[0, :6]))
    return tau_v, taus[0, 6:], SpatialForce.from_vector(coupling[0])


def inverse_dynamics(model: UvmsModel, state: GeneralizedState) -> tuple[GeneralizedForce, Array]:
    """Body-axis convenience wrapper: (generalized force, coupling wrench tau_mv)."""
    zdd = np.concatenate([state.nu_dot, state.mu_ddot])[None, :]
    taus, coupling = _id_batch(model, state.eta, state.nu, state.mu, state.mu_dot, zdd)
    return GeneralizedForce.from_vector(taus[0]), spatial_to_fossen(coupling[0])


def mass_matrix_and_bias(model: UvmsModel, state: GeneralizedState) -> tuple[Array, Array]:
    """Generalized inertia matrix and bias vector with M zdd + h = tau."""
    n = model.n_links
    dim = 6 + n
    zdd = np.vstack([np.zeros(dim), np.eye(dim)])
    taus, _ = _id_batch(model, state.eta, state.nu, state.mu, state.mu_dot, zdd)
    h = taus[0]
    M = (taus[1:] - h[None, :]).T
    return M, h


def forward_dynamics(model: UvmsModel, state: GeneralizedState, tau) -> Array:
    """Acceleration solving M zdd = tau - h; raises on an ill-conditioned M."""
    if isinstance(tau, GeneralizedForce):
        tau = tau.stacked()
    tau = np.asarray(tau, dtype=float).reshape(6 + model.n_links)
    M, h = mass_matrix_and_bias(model, state)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularInertiaError(f"generalized inertia condition number {cond:.3g}")
    return np.linalg.solve(M, tau - h)


@dataclass
class Trajectory:
    """Fixed-rate simulation output; accelerations come from the dynamics
    evaluation at each sample, not from differencing."""

    times: Array
    states: list[GeneralizedState]
    forces: list[GeneralizedForce]
    truncated: bool = False
    diagnostic: str = ""
    final_state: GeneralizedState | None = None

    def __len__(self) -> int:
        return len(self.states)


def simulate(model: UvmsModel, initial: GeneralizedState, tau_schedule,
             dt: float, duration: float) -> Trajectory:
    """Fixed-step RK4 roll-out of (eta, nu, mu, mu_dot) under a torque schedule.

    `tau_schedule(t, state)` returns the applied generalized force. On hitting
    the pitch singularity the trajectory is truncated with a diagnostic.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = model.n_links
    steps = int(round(duration / dt))
    times = np.arange(steps) * dt
    states: list[GeneralizedState] = []
    forces: list[GeneralizedForce] = []

    def pack_state(y: Array, zdd: Array | None = None) -> GeneralizedState:
        return GeneralizedState(
            eta=y[:6], nu=y[6:12], mu=y[12:12 + n], mu_dot=y[12 + n:],
            nu_dot=None if zdd is None else zdd[:6],
            mu_ddot=None if zdd is None else zdd[6:],
        )

    def derivative(t: float, y: Array) -> tuple[Array, Array]:
        st = pack_state(y)
        tau = tau_schedule(t, st)
        if isinstance(tau, GeneralizedForce):
            tau = tau.stacked()
        zdd = forward_dynamics(model, st, tau)
        ydot = np.empty_like(y)
        ydot[:6] = euler_kinematics(y[:6]) @ y[6:12]
        ydot[6:12] = zdd[:6]
        ydot[12:12 + n] = y[12 + n:]
        ydot[12 + n:] = zdd[6:]
        return ydot, zdd

    y = np.concatenate([initial.eta, initial.nu, initial.mu, initial.mu_dot])
    traj = Trajectory(times=times, states=states, forces=forces)
    for k in range(steps):
        t = times[k]
        try:
            st = pack_state(y)
            tau = tau_schedule(t, st)
            if isinstance(tau, GeneralizedForce):
                tau = tau.stacked()
            else:
                tau = np.asarray(tau, dtype=float)
            zdd = forward_dynamics(model, st, tau)
            states.append(pack_state(y, zdd))
            forces.append(GeneralizedForce.from_vector(tau))

            k1, _ = derivative(t, y)
            k2, _ = derivative(t + dt / 2, y + dt / 2 * k1)
            k3, _ = derivative(t + dt / 2, y + dt / 2 * k2)
            k4, _ = derivative(t + dt, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        except PitchSingularityError as exc:
            traj.truncated = True
            traj.diagnostic = f"truncated at t = {t:.3f} s: {exc}"
            traj.times = times[: len(states)]
            break
    if not traj.truncated:
        traj.times = times[: len(states)]
        try:
            traj.final_state = pack_state(y)
        except PitchSingularityError as exc:
            traj.truncated = True
            traj.diagnostic = f"truncated at t = {duration:.3f} s: {exc}"
    return traj


def kinetic_energy(model: UvmsModel, state: GeneralizedState) -> float:
    """Quadratic form of the generalized inertia over the current rates."""
    M, _ = mass_matrix_and_bias(model, state)
    rates = np.concatenate([state.nu, state.mu_dot])
    return 0.5 * float(rates @ M @ rates)
