"""UVMS model description and the canonical lumped parameter vector.

A model is a 6-DOF floating vehicle carrying an n-link serial arm. Two
descriptions coexist:

* a physical description (rigid inertias, added mass, drag, buoyancy per
  body) used to generate ground truth with the full hydrodynamic recursion;
* a lumped description: the flat parameter vector pi of length 27 + 12 n in
  which the dynamics are exactly linear. For the reference 4-link arm this
  gives 75 entries.

Lumped vehicle layout (indices into pi):
    0..5    diagonal effective inertia lumps, body-axis order [u, v, w, p, q, r]
    6       surge-pitch coupling, placed at M[0,4] = M[4,0]
    7       sway-roll coupling, M[1,3] = M[3,1]
    8       sway-yaw coupling, M[1,5] = M[5,1]
    9       heave-pitch coupling, M[2,4] = M[4,2]
    10..15  linear drag coefficients (stored Fossen-sign, <= 0)
    16..21  quadratic drag coefficients (stored Fossen-sign, <= 0)
    22..26  restoring lumps [W, B, x_g W - x_b B, y_g W - y_b B, z_g W - z_b B]

Each link j then contributes 12 entries starting at 27 + 12 j:
    [m, m*lx, m*ly, m*lz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz, f_v, f_s]
with the rotational inertia taken about the link frame origin and the two
trailing entries the joint-level viscous and Coulomb dissipation lumps.

Vectors and matrices in model files and in hydrodynamic descriptors use the
marine body-axis ordering (linear before angular); spatial-algebra types use
the angular-first ordering. Conversion helpers live here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .spatial import (
    Array,
    SpatialInertia,
    inertia_from_mass_com,
    inertia_params_to_matrix,
    skew,
)

GRAVITY = 9.80665

N_VEHICLE = 27
N_PER_LINK = 12
IDX_VM = slice(0, 10)
IDX_VD_LIN = slice(10, 16)
IDX_VD_QUAD = slice(16, 22)
IDX_VG = slice(22, 27)
IDX_W = 22
IDX_B = 23

# (row, col) targets of the four off-diagonal inertia lumps, body-axis indices
COUPLING_SLOTS = ((0, 4), (1, 3), (1, 5), (2, 4))

_PERM = np.zeros((6, 6))
_PERM[:3, 3:] = np.eye(3)
_PERM[3:, :3] = np.eye(3)


def n_parameters(n_links: int) -> int:
    return N_VEHICLE + N_PER_LINK * n_links


def link_slice(j: int, n_links: int) -> slice:
    if not 0 <= j < n_links:
        raise IndexError(f"link index {j} out of range for {n_links} links")
    start = N_VEHICLE + N_PER_LINK * j
    return slice(start, start + N_PER_LINK)


def fossen_to_spatial(v: Array) -> Array:
    """Reorder a body-axis 6-vector (linear first) to angular-first."""
    v = np.asarray(v, dtype=float)
    return np.concatenate([v[3:], v[:3]])


def spatial_to_fossen(v: Array) -> Array:
    v = np.asarray(v, dtype=float)
    return np.concatenate([v[3:], v[:3]])


def fossen_to_spatial_matrix(M: Array) -> Array:
    return _PERM @ np.asarray(M, dtype=float) @ _PERM


spatial_to_fossen_matrix = fossen_to_spatial_matrix


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------


def _as_readonly(a, shape) -> Array:
    out = np.ascontiguousarray(np.asarray(a, dtype=float).reshape(shape))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class JointDescriptor:
    """Revolute joint: rotation axis in the child link frame plus fixed placement.

    `origin_*` give the constant transform from the parent frame to the joint
    frame at zero angle. `rotor_inertia` is the spatial inertia of the rotor;
    gearing multiplies rotor rates by `gear_ratio`.
    """

    axis: Array
    parent: int
    gear_ratio: float = 1.0
    rotor_inertia: SpatialInertia = field(default_factory=SpatialInertia.zero)
    static_friction: float = 0.0
    viscous_friction: float = 0.0
    origin_rotation: Array = field(default_factory=lambda: np.eye(3))
    origin_translation: Array = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"joint axis must be a unit vector, |axis| = {norm:.3g}")
        object.__setattr__(self, "axis", _as_readonly(axis / norm, 3))
        object.__setattr__(self, "origin_rotation", _as_readonly(self.origin_rotation, (3, 3)))
        object.__setattr__(self, "origin_translation", _as_readonly(self.origin_translation, 3))
        if self.gear_ratio < 1.0:
            raise ValueError("gear_ratio must be >= 1")
        if self.static_friction < 0 or self.viscous_friction < 0:
            raise ValueError("friction coefficients must be nonnegative")

    @property
    def subspace(self) -> Array:
        """Free-mode 6-vector (angular-first) of the revolute joint."""
        return np.concatenate([self.axis, np.zeros(3)])


@dataclass(frozen=True)
class LinkHydrodynamics:
    """Per-body hydrodynamic coefficients, body-axis ordering (linear first).

    `added_mass` is stored positive semidefinite; drag coefficients are stored
    in the Fossen sign convention (nonpositive), so the drag force on the body
    is (linear + quadratic * |v|) * v componentwise, opposing motion.
    """

    added_mass: Array = field(default_factory=lambda: np.zeros((6, 6)))
    linear_drag: Array = field(default_factory=lambda: np.zeros(6))
    quad_drag: Array = field(default_factory=lambda: np.zeros(6))
    buoyancy: float = 0.0
    center_of_buoyancy: Array = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        A = np.asarray(self.added_mass, dtype=float).reshape(6, 6)
        if np.abs(A - A.T).max() > 1e-9 * max(1.0, np.abs(A).max()):
            raise ValueError("added mass must be symmetric")
        object.__setattr__(self, "added_mass", _as_readonly(0.5 * (A + A.T), (6, 6)))
        lin = np.asarray(self.linear_drag, dtype=float).reshape(6)
        quad = np.asarray(self.quad_drag, dtype=float).reshape(6)
        if (lin > 0).any() or (quad > 0).any():
            raise ValueError("drag coefficients must be <= 0 in the stored convention")
        object.__setattr__(self, "linear_drag", _as_readonly(lin, 6))
        object.__setattr__(self, "quad_drag", _as_readonly(quad, 6))
        object.__setattr__(self, "center_of_buoyancy", _as_readonly(self.center_of_buoyancy, 3))

    def is_zero(self) -> bool:
        return (
            not self.added_mass.any()
            and not self.linear_drag.any()
            and not self.quad_drag.any()
            and self.buoyancy == 0.0
        )


@dataclass(frozen=True)
class VehicleDescriptor:
    """Physical vehicle: rigid spatial inertia plus hydrodynamic coefficients."""

    rigid_inertia: SpatialInertia
    hydro: LinkHydrodynamics
    cg: Array
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "cg", _as_readonly(self.cg, 3))
        if self.weight <= 0:
            raise ValueError("vehicle weight must be positive")

    def restoring_lumps(self) -> Array:
        W = self.weight
        B = self.hydro.buoyancy
        cb = self.hydro.center_of_buoyancy
        arms = self.cg * W - cb * B
        return np.array([W, B, arms[0], arms[1], arms[2]])


@dataclass(frozen=True)
class VehicleLumps:
    """Vehicle subsystem in lumped form: the 27 entries pi_v."""

    inertia_lumps: Array
    drag_linear: Array
    drag_quad: Array
    restoring: Array

    def __post_init__(self):
        object.__setattr__(self, "inertia_lumps", _as_readonly(self.inertia_lumps, 10))
        object.__setattr__(self, "drag_linear", _as_readonly(self.drag_linear, 6))
        object.__setattr__(self, "drag_quad", _as_readonly(self.drag_quad, 6))
        object.__setattr__(self, "restoring", _as_readonly(self.restoring, 5))

    def flat(self) -> Array:
        return np.concatenate(
            [self.inertia_lumps, self.drag_linear, self.drag_quad, self.restoring]
        )


@dataclass(frozen=True)
class WeightBounds:
    w_min: float
    w_max: float

    def __post_init__(self):
        if not self.w_min <= self.w_max:
            raise ValueError("w_min must not exceed w_max")


LUMPED = "lumped"
FULL_HYDRO = "full_hydro"
GRAVITY_EXPLICIT = "explicit"
GRAVITY_BASE_BIAS = "base_bias"


@dataclass(frozen=True)
class UvmsModel:
    """Complete system description: serial chain on a floating vehicle."""

    joints: tuple[JointDescriptor, ...]
    link_inertias: tuple[SpatialInertia, ...]
    link_hydro: tuple[LinkHydrodynamics, ...]
    vehicle_lumps: VehicleLumps
    vehicle: VehicleDescriptor | None = None
    mode: str = LUMPED
    gravity_mode: str = GRAVITY_EXPLICIT
    bounds: WeightBounds = WeightBounds(0.0, np.inf)
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.mode not in (LUMPED, FULL_HYDRO):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.gravity_mode not in (GRAVITY_EXPLICIT, GRAVITY_BASE_BIAS):
            raise ValueError(f"unknown gravity mode {self.gravity_mode!r}")
        n = len(self.joints)
        if n == 0:
            raise ValueError("model needs at least one link")
        if not (len(self.link_inertias) == len(self.link_hydro) == n):
            raise ValueError("per-link field lengths disagree")
        for i, joint in enumerate(self.joints):
            if joint.parent != i:
                raise ValueError("only serial chains are supported: parent of link "
                                 f"{i + 1} must be {i}, got {joint.parent}")
        if self.mode == FULL_HYDRO and self.vehicle is None:
            raise ValueError("full-hydro mode needs a physical vehicle descriptor")
        if self.mode == LUMPED:
            for i, (joint, hydro) in enumerate(zip(self.joints, self.link_hydro)):
                if joint.gear_ratio != 1.0 or joint.rotor_inertia.matrix.any():
                    raise ValueError(
                        f"lumped mode folds rotor dynamics into link {i + 1} lumps; "
                        "set gear_ratio = 1 and rotor_inertia = 0"
                    )
                if not hydro.is_zero():
                    raise ValueError(
                        f"lumped mode absorbs link {i + 1} hydrodynamics into the "
                        "effective inertial and friction lumps"
                    )

    @property
    def n_links(self) -> int:
        return len(self.joints)

    @property
    def n_params(self) -> int:
        return n_parameters(self.n_links)


# ---------------------------------------------------------------------------
# Parameter vector packing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterVector:
    """Flat lumped parameter vector with fixed index layout."""

    values: Array
    n_links: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != n_parameters(self.n_links):
            raise ValueError(
                f"expected {n_parameters(self.n_links)} entries for "
                f"{self.n_links} links, got {vals.size}"
            )
        object.__setattr__(self, "values", _as_readonly(vals, vals.size))

    def __len__(self) -> int:
        return self.values.size

    @property
    def vehicle_inertia_lumps(self) -> Array:
        return self.values[IDX_VM]

    @property
    def drag_linear(self) -> Array:
        return self.values[IDX_VD_LIN]

    @property
    def drag_quad(self) -> Array:
        return self.values[IDX_VD_QUAD]

    @property
    def restoring(self) -> Array:
        return self.values[IDX_VG]

    @property
    def weight(self) -> float:
        return float(self.values[IDX_W])

    def link_block(self, j: int) -> Array:
        return self.values[link_slice(j, self.n_links)]

    def link_blocks(self) -> Array:
        return self.values[N_VEHICLE:].reshape(self.n_links, N_PER_LINK)

    def vehicle_lumps(self) -> VehicleLumps:
        return VehicleLumps(
            self.vehicle_inertia_lumps, self.drag_linear, self.drag_quad, self.restoring
        )


def pack(vehicle_lumps: VehicleLumps, link_blocks: Array) -> ParameterVector:
    """Assemble the flat parameter vector from structured pieces."""
    blocks = np.asarray(link_blocks, dtype=float)
    if blocks.ndim != 2 or blocks.shape[1] != N_PER_LINK:
        raise ValueError(f"link_blocks must be (n, {N_PER_LINK}), got {blocks.shape}")
    values = np.concatenate([vehicle_lumps.flat(), blocks.reshape(-1)])
    return ParameterVector(values, blocks.shape[0])


def unpack(pi: ParameterVector) -> tuple[VehicleLumps, Array]:
    """Inverse of pack: structured view (vehicle lumps, (n, 12) link blocks)."""
    return pi.vehicle_lumps(), pi.link_blocks().copy()


def build_vehicle_inertia(inertia_lumps: Array) -> Array:
    """Symmetric 6x6 vehicle inertia from the 10 lumps, body-axis ordering."""
    lumps = np.asarray(inertia_lumps, dtype=float).reshape(10)
    M = np.diag(lumps[:6])
    for lump, (r, c) in zip(lumps[6:], COUPLING_SLOTS):
        M[r, c] = lump
        M[c, r] = lump
    return M


def vehicle_inertia_lumps_from_matrix(M: Array, strict: bool = True) -> Array:
    """Extract the 10 lumps from a body-axis 6x6; optionally reject residue."""
    M = np.asarray(M, dtype=float)
    lumps = np.empty(10)
    lumps[:6] = np.diag(M)
    for k, (r, c) in enumerate(COUPLING_SLOTS):
        lumps[6 + k] = 0.5 * (M[r, c] + M[c, r])
    if strict:
        residue = np.abs(M - build_vehicle_inertia(lumps)).max()
        if residue > 1e-9 * max(1.0, np.abs(M).max()):
            raise ValueError(
                "vehicle inertia has couplings outside the 10-lump pattern "
                f"(residue {residue:.3g})"
            )
    return lumps


@dataclass(frozen=True)
class PseudoInertia:
    """4x4 density-realizability certificate of one link block."""

    matrix: Array

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float).reshape(4, 4)
        object.__setattr__(self, "matrix", _as_readonly(0.5 * (M + M.T), (4, 4)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_realizable(self, tol: float = 1e-9) -> bool:
        return self.min_eigenvalue() >= -tol


def build_pseudo_inertia(link_block: Array) -> PseudoInertia:
    """Pseudo-inertia of one link block; PSD iff the block is density realizable."""
    b = np.asarray(link_block, dtype=float).reshape(-1)
    m = b[0]
    h = b[1:4]
    Ixx, Ixy, Ixz, Iyy, Iyz, Izz = b[4:10]
    Ibar = np.array([[Ixx, Ixy, Ixz], [Ixy, Iyy, Iyz], [Ixz, Iyz, Izz]])
    J = np.zeros((4, 4))
    J[:3, :3] = 0.5 * np.trace(Ibar) * np.eye(3) - Ibar
    J[:3, 3] = h
    J[3, :3] = h
    J[3, 3] = m
    return PseudoInertia(J)


def rotational_inertia_from_pseudo(J: Array) -> Array:
    """Invert the upper-left pseudo-inertia block back to Ibar."""
    T = np.asarray(J, dtype=float)[:3, :3]
    return np.trace(T) * np.eye(3) - T


PSD_EIG_TOL = -1e-9


def feasibility_report(pi: ParameterVector, bounds: WeightBounds,
                       eig_tol: float = PSD_EIG_TOL) -> list[str]:
    """List every violated physical-consistency constraint; empty means feasible."""
    violations: list[str] = []
    Mv = build_vehicle_inertia(pi.vehicle_inertia_lumps)
    lam = float(np.linalg.eigvalsh(Mv)[0])
    if lam < eig_tol:
        violations.append(f"vehicle inertia not positive definite (min eig {lam:.3g})")
    for idx, value in enumerate(pi.drag_linear):
        if value > 0:
            violations.append(f"linear drag[{idx}] = {value:.3g} > 0")
    for idx, value in enumerate(pi.drag_quad):
        if value > 0:
            violations.append(f"quadratic drag[{idx}] = {value:.3g} > 0")
    W = pi.weight
    if W < bounds.w_min:
        violations.append(f"weight {W:.6g} below bound {bounds.w_min:.6g}")
    if W > bounds.w_max:
        violations.append(f"weight {W:.6g} above bound {bounds.w_max:.6g}")
    for j in range(pi.n_links):
        block = pi.link_block(j)
        lam = build_pseudo_inertia(block).min_eigenvalue()
        if lam < eig_tol:
            violations.append(
                f"pseudo-inertia of joint {j + 1} not positive definite (min eig {lam:.3g})"
            )
        if block[10] < 0:
            violations.append(f"viscous friction of joint {j + 1} = {block[10]:.3g} < 0")
        if block[11] < 0:
            violations.append(f"Coulomb friction of joint {j + 1} = {block[11]:.3g} < 0")
    return violations


def _project_psd_matrix(S: Array, floor: float) -> Array:
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return (vecs * np.maximum(vals, floor)) @ vecs.T


def project_to_feasible(pi: ParameterVector, bounds: WeightBounds,
                        psd_margin: float = 1e-8, max_sweeps: int = 60,
                        eig_floor_rel: float = 0.0) -> ParameterVector:
    """Small correction of pi onto the feasible set.

    Sign and box constraints are clipped; the vehicle inertia alternates
    between the PSD cone and its sparsity pattern; pseudo-inertias map
    bijectively to symmetric 4x4 matrices, so one cone projection suffices.
    With eig_floor_rel > 0 eigenvalues are clipped at that fraction of the
    block's largest eigenvalue, placing the result strictly inside the cone
    instead of on its boundary.
    """
    values = pi.values.copy()
    values[IDX_VD_LIN] = np.minimum(values[IDX_VD_LIN], 0.0)
    values[IDX_VD_QUAD] = np.minimum(values[IDX_VD_QUAD], 0.0)
    values[IDX_W] = np.clip(values[IDX_W], bounds.w_min, bounds.w_max)

    def floor_for(matrix: Array) -> float:
        top = float(np.linalg.eigvalsh(matrix)[-1])
        return max(psd_margin, eig_floor_rel * max(top, 0.0))

    lumps = values[IDX_VM].copy()
    for _ in range(max_sweeps):
        M = build_vehicle_inertia(lumps)
        floor = floor_for(M)
        if np.linalg.eigvalsh(M)[0] >= floor * 0.5:
            break
        M = _project_psd_matrix(M, floor)
        lumps = vehicle_inertia_lumps_from_matrix(M, strict=False)
    values[IDX_VM] = lumps

    for j in range(pi.n_links):
        sl = link_slice(j, pi.n_links)
        block = values[sl].copy()
        J = build_pseudo_inertia(block).matrix
        floor = floor_for(J)
        if np.linalg.eigvalsh(J)[0] < floor * 0.5:
            J = _project_psd_matrix(J, floor)
            Ibar = rotational_inertia_from_pseudo(J)
            block[0] = J[3, 3]
            block[1:4] = J[:3, 3]
            block[4] = Ibar[0, 0]
            block[5] = Ibar[0, 1]
            block[6] = Ibar[0, 2]
            block[7] = Ibar[1, 1]
            block[8] = Ibar[1, 2]
            block[9] = Ibar[2, 2]
        block[10] = max(block[10], 0.0)
        block[11] = max(block[11], 0.0)
        values[sl] = block
    return ParameterVector(values, pi.n_links)


# ---------------------------------------------------------------------------
# Restoring-force geometry (shared by generator and regressor)
# ---------------------------------------------------------------------------


def restoring_matrix(eta: Array) -> Array:
    """6x5 map from [W, B, ax, ay, az] to the body-axis restoring vector g(eta)."""
    phi, theta = eta[3], eta[4]
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    G = np.zeros((6, 5))
    G[0, 0] = sth
    G[0, 1] = -sth
    G[1, 0] = -cth * sphi
    G[1, 1] = cth * sphi
    G[2, 0] = -cth * cphi
    G[2, 1] = cth * cphi
    G[3, 3] = -cth * cphi
    G[3, 4] = cth * sphi
    G[4, 2] = cth * cphi
    G[4, 4] = sth
    G[5, 2] = -cth * sphi
    G[5, 3] = -sth
    return G


# ---------------------------------------------------------------------------
# Model <-> parameter-vector conversion
# ---------------------------------------------------------------------------


def parameters_from_model(model: UvmsModel) -> ParameterVector:
    """Lumped parameter vector of a model (exact in lumped mode).

    In full-hydro mode the vehicle added mass is projected onto the 10-lump
    pattern and link hydrodynamics are dropped, so the result is the nominal
    linear-model reference, not an equivalent description.
    """
    if model.mode == LUMPED:
        vlumps = model.vehicle_lumps
    else:
        veh = model.vehicle
        M_total = (
            spatial_to_fossen_matrix(veh.rigid_inertia.matrix) + veh.hydro.added_mass
        )
        vlumps = VehicleLumps(
            vehicle_inertia_lumps_from_matrix(M_total, strict=False),
            veh.hydro.linear_drag,
            veh.hydro.quad_drag,
            veh.restoring_lumps(),
        )
    blocks = np.zeros((model.n_links, N_PER_LINK))
    for j, (inertia, joint) in enumerate(zip(model.link_inertias, model.joints)):
        I = inertia.matrix
        blocks[j, 0] = I[3, 3]
        # upper-right block of a spatial inertia is skew(h)
        blocks[j, 1:4] = np.array([I[2, 4], I[0, 5], I[1, 3]])
        rot = I[:3, :3]
        blocks[j, 4] = rot[0, 0]
        blocks[j, 5] = rot[0, 1]
        blocks[j, 6] = rot[0, 2]
        blocks[j, 7] = rot[1, 1]
        blocks[j, 8] = rot[1, 2]
        blocks[j, 9] = rot[2, 2]
        blocks[j, 10] = joint.viscous_friction
        blocks[j, 11] = joint.static_friction
    return pack(vlumps, blocks)


def model_from_parameters(template: UvmsModel, pi: ParameterVector) -> UvmsModel:
    """Lumped-mode model with template kinematics and parameters from pi."""
    if pi.n_links != template.n_links:
        raise ValueError("parameter vector size does not match the template chain")
    joints = []
    inertias = []
    for j, joint in enumerate(template.joints):
        block = pi.link_block(j)
        joints.append(
            replace(
                joint,
                gear_ratio=1.0,
                rotor_inertia=SpatialInertia.zero(),
                viscous_friction=max(float(block[10]), 0.0),
                static_friction=max(float(block[11]), 0.0),
            )
        )
        inertias.append(SpatialInertia(inertia_params_to_matrix(block)))
    hydro = tuple(LinkHydrodynamics() for _ in range(template.n_links))
    return UvmsModel(
        joints=tuple(joints),
        link_inertias=tuple(inertias),
        link_hydro=hydro,
        vehicle_lumps=pi.vehicle_lumps(),
        vehicle=None,
        mode=LUMPED,
        gravity_mode=GRAVITY_EXPLICIT,
        bounds=template.bounds,
        gravity=template.gravity,
    )


def to_lumped(model: UvmsModel, strict: bool = True) -> UvmsModel:
    """Lumped-mode equivalent of a physical model.

    With strict=True, pieces the 75-entry linear model cannot represent
    (off-pattern added mass, link hydrodynamics, geared rotors) raise instead
    of being silently dropped.
    """
    if model.mode == LUMPED:
        return model
    if strict:
        veh = model.vehicle
        M_total = spatial_to_fossen_matrix(veh.rigid_inertia.matrix) + veh.hydro.added_mass
        vehicle_inertia_lumps_from_matrix(M_total, strict=True)
        for j, (joint, hydro) in enumerate(zip(model.joints, model.link_hydro)):
            if not hydro.is_zero():
                raise ValueError(f"link {j + 1} hydrodynamics are not lumped-representable")
            if joint.gear_ratio != 1.0 or joint.rotor_inertia.matrix.any():
                raise ValueError(f"link {j + 1} rotor dynamics are not lumped-representable")
    return model_from_parameters(model, parameters_from_model(model))


# ---------------------------------------------------------------------------
# Model file IO (YAML-compatible structured text)
# ---------------------------------------------------------------------------


def _joint_from_dict(d: dict, index: int) -> JointDescriptor:
    origin = d.get("origin") or {}
    rpy = np.asarray(origin.get("rpy", [0.0, 0.0, 0.0]), dtype=float)
    xyz = np.asarray(origin.get("xyz", [0.0, 0.0, 0.0]), dtype=float)
    cr, sr = np.cos(rpy[0]), np.sin(rpy[0])
    cp, sp = np.cos(rpy[1]), np.sin(rpy[1])
    cy, sy = np.cos(rpy[2]), np.sin(rpy[2])
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    R_parent_joint = Rz @ Ry @ Rx
    rotor = d.get("rotor_inertia", 0.0)
    axis = np.asarray(d["axis"], dtype=float).reshape(-1)
    if axis.size == 6:
        if np.linalg.norm(axis[3:]) > 1e-12:
            raise ValueError("only revolute joint subspaces are supported")
        axis = axis[:3]
    if np.isscalar(rotor) or np.asarray(rotor).ndim == 0:
        Ir = np.zeros((6, 6))
        Ir[:3, :3] = float(rotor) * np.outer(axis, axis)
        rotor_inertia = SpatialInertia(Ir)
    else:
        rotor_inertia = SpatialInertia(np.asarray(rotor, dtype=float))
    return JointDescriptor(
        axis=axis,
        parent=int(d.get("parent", index)),
        gear_ratio=float(d.get("gear_ratio", 1.0)),
        rotor_inertia=rotor_inertia,
        static_friction=float(d.get("b_static", 0.0)),
        viscous_friction=float(d.get("b_viscous", 0.0)),
        origin_rotation=R_parent_joint.T,
        origin_translation=xyz,
    )


def _hydro_from_dict(d: dict | None) -> LinkHydrodynamics:
    if not d:
        return LinkHydrodynamics()
    return LinkHydrodynamics(
        added_mass=np.asarray(d.get("added_mass", np.zeros((6, 6))), dtype=float),
        linear_drag=np.asarray(d.get("drag_linear", np.zeros(6)), dtype=float),
        quad_drag=np.asarray(d.get("drag_quadratic", np.zeros(6)), dtype=float),
        buoyancy=float(d.get("buoyancy", 0.0)),
        center_of_buoyancy=np.asarray(d.get("cb", np.zeros(3)), dtype=float),
    )


def load_model(path: str | Path, mode: str = FULL_HYDRO) -> UvmsModel:
    """Load a model description file; matrices are body-axis ordered."""
    with open(path) as f:
        doc = yaml.safe_load(f)
    vd = doc["vehicle"]
    rigid_fossen = np.asarray(vd["rigid_inertia"], dtype=float)
    vehicle = VehicleDescriptor(
        rigid_inertia=SpatialInertia(fossen_to_spatial_matrix(rigid_fossen)),
        hydro=LinkHydrodynamics(
            added_mass=np.asarray(vd["added_mass"], dtype=float),
            linear_drag=np.asarray(vd["drag_linear"], dtype=float),
            quad_drag=np.asarray(vd["drag_quadratic"], dtype=float),
            buoyancy=float(vd["buoyancy"]),
            center_of_buoyancy=np.asarray(vd.get("cb", [0, 0, 0]), dtype=float),
        ),
        cg=np.asarray(vd.get("cg", [0, 0, 0]), dtype=float),
        weight=float(vd["weight"]),
    )
    joints = []
    inertias = []
    hydros = []
    for idx, entry in enumerate(doc["links"]):
        joints.append(_joint_from_dict(entry["joint"], idx))
        I6 = np.asarray(entry["inertia"], dtype=float).reshape(6)
        Ibar = np.array(
            [
                [I6[0], I6[1], I6[2]],
                [I6[1], I6[3], I6[4]],
                [I6[2], I6[4], I6[5]],
            ]
        )
        inertias.append(
            SpatialInertia(
                inertia_from_mass_com(
                    float(entry["mass"]), np.asarray(entry["com"], dtype=float), Ibar
                )
            )
        )
        hydros.append(_hydro_from_dict(entry.get("hydro")))
    b = doc.get("bounds") or {}
    bounds = WeightBounds(float(b.get("w_min", 0.0)), float(b.get("w_max", np.inf)))
    model = UvmsModel(
        joints=tuple(joints),
        link_inertias=tuple(inertias),
        link_hydro=tuple(hydros),
        vehicle_lumps=VehicleLumps(
            vehicle_inertia_lumps_from_matrix(
                spatial_to_fossen_matrix(vehicle.rigid_inertia.matrix)
                + vehicle.hydro.added_mass,
                strict=False,
            ),
            vehicle.hydro.linear_drag,
            vehicle.hydro.quad_drag,
            vehicle.restoring_lumps(),
        ),
        vehicle=vehicle,
        mode=FULL_HYDRO,
        bounds=bounds,
    )
    if mode == LUMPED:
        return to_lumped(model)
    return model


def save_model(path: str | Path, model: UvmsModel) -> None:
    """Write the model description file; lumped models are realized as an
    equivalent physical description (all inertia in the rigid block)."""
    if model.mode == FULL_HYDRO:
        veh = model.vehicle
        rigid_fossen = spatial_to_fossen_matrix(veh.rigid_inertia.matrix)
        added = veh.hydro.added_mass
        weight = veh.weight
        buoyancy = veh.hydro.buoyancy
        cg = veh.cg
        cb = veh.hydro.center_of_buoyancy
        drag_lin = veh.hydro.linear_drag
        drag_quad = veh.hydro.quad_drag
    else:
        lumps = model.vehicle_lumps
        rigid_fossen = build_vehicle_inertia(lumps.inertia_lumps)
        added = np.zeros((6, 6))
        weight = float(lumps.restoring[0])
        buoyancy = float(lumps.restoring[1])
        cg = lumps.restoring[2:5] / weight
        cb = np.zeros(3)
        drag_lin = lumps.drag_linear
        drag_quad = lumps.drag_quad
    doc: dict = {
        "vehicle": {
            "rigid_inertia": [[float(v) for v in row] for row in rigid_fossen],
            "added_mass": [[float(v) for v in row] for row in added],
            "drag_linear": [float(v) for v in drag_lin],
            "drag_quadratic": [float(v) for v in drag_quad],
            "weight": weight,
            "buoyancy": buoyancy,
            "cg": [float(v) for v in cg],
            "cb": [float(v) for v in cb],
        },
        "links": [],
        "bounds": {"w_min": float(model.bounds.w_min), "w_max": float(model.bounds.w_max)},
    }
    for joint, inertia, hydro in zip(model.joints, model.link_inertias, model.link_hydro):
        I = inertia.matrix
        mass = float(I[3, 3])
        h = np.array([I[2, 4], I[0, 5], I[1, 3]])
        com = h / mass if mass > 0 else np.zeros(3)
        rot = I[:3, :3]
        R_pj = joint.origin_rotation.T  # stored as the coordinate transform
        rpy = [
            float(np.arctan2(R_pj[2, 1], R_pj[2, 2])),
            float(np.arcsin(np.clip(-R_pj[2, 0], -1.0, 1.0))),
            float(np.arctan2(R_pj[1, 0], R_pj[0, 0])),
        ]
        entry = {
            "joint": {
                "axis": [float(v) for v in joint.axis],
                "parent": joint.parent,
                "gear_ratio": float(joint.gear_ratio),
                "rotor_inertia": [[float(v) for v in row]
                                  for row in joint.rotor_inertia.matrix],
                "b_static": float(joint.static_friction),
                "b_viscous": float(joint.viscous_friction),
                "origin": {
                    "xyz": [float(v) for v in joint.origin_translation],
                    "rpy": rpy,
                },
            },
            "mass": mass,
            "com": [float(v) for v in com],
            "inertia": [float(rot[0, 0]), float(rot[0, 1]), float(rot[0, 2]),
                        float(rot[1, 1]), float(rot[1, 2]), float(rot[2, 2])],
        }
        if not hydro.is_zero():
            entry["hydro"] = {
                "added_mass": [[float(v) for v in row] for row in hydro.added_mass],
                "drag_linear": [float(v) for v in hydro.linear_drag],
                "drag_quadratic": [float(v) for v in hydro.quad_drag],
                "buoyancy": float(hydro.buoyancy),
                "cb": [float(v) for v in hydro.center_of_buoyancy],
            }
        doc["links"].append(entry)
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)
