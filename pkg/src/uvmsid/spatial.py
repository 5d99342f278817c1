"""6-D spatial vector algebra: motions, forces, Plucker transforms, spatial inertias.

Convention used project-wide: the angular components come first, the linear
components second, in every 6-vector and in every 6x6 block layout. Transforms
are kept as a (rotation, translation) pair; the dense 6x6 expansion only
appears in test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

_ORTHO_TOL = 1e-10


def _freeze(a: Array) -> Array:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def skew(v: Array) -> Array:
    """3x3 matrix S with S @ x == cross(v, x)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


# ---------------------------------------------------------------------------
# Raw-array core. These functions carry all the arithmetic; the dataclasses
# below are validated wrappers around them. E is the 3x3 coordinate rotation,
# r the translation expressed in the source frame.
# ---------------------------------------------------------------------------


def compose_er(E2: Array, r2: Array, E1: Array, r1: Array) -> tuple[Array, Array]:
    """Composition (E2, r2) o (E1, r1): apply (E1, r1) first."""
    return E2 @ E1, r1 + E1.T @ r2


def invert_er(E: Array, r: Array) -> tuple[Array, Array]:
    return E.T, -(E @ r)


def transform_motion(E: Array, r: Array, v: Array) -> Array:
    w, lin = v[:3], v[3:]
    out = np.empty(6)
    out[:3] = E @ w
    out[3:] = E @ (lin - np.cross(r, w))
    return out


def transform_force(E: Array, r: Array, f: Array) -> Array:
    n, lin = f[:3], f[3:]
    out = np.empty(6)
    out[:3] = E @ (n - np.cross(r, lin))
    out[3:] = E @ lin
    return out


def inv_transform_motion(E: Array, r: Array, v: Array) -> Array:
    w, lin = v[:3], v[3:]
    out = np.empty(6)
    wo = E.T @ w
    out[:3] = wo
    out[3:] = E.T @ lin + np.cross(r, wo)
    return out


def inv_transform_force(E: Array, r: Array, f: Array) -> Array:
    n, lin = f[:3], f[3:]
    out = np.empty(6)
    lo = E.T @ lin
    out[:3] = E.T @ n + np.cross(r, lo)
    out[3:] = lo
    return out


def cross_motion(v: Array, m: Array) -> Array:
    """Spatial motion-cross v x m for two motion vectors."""
    w, lin = v[:3], v[3:]
    out = np.empty(6)
    out[:3] = np.cross(w, m[:3])
    out[3:] = np.cross(w, m[3:]) + np.cross(lin, m[:3])
    return out


def cross_force(v: Array, f: Array) -> Array:
    """Spatial force-cross v x* f (dual of cross_motion)."""
    w, lin = v[:3], v[3:]
    out = np.empty(6)
    out[:3] = np.cross(w, f[:3]) + np.cross(lin, f[3:])
    out[3:] = np.cross(w, f[3:])
    return out


def rot_about_axis(axis: Array, angle: float) -> Array:
    """Rotation matrix moving vectors by `angle` about the unit `axis`."""
    c, s = np.cos(angle), np.sin(angle)
    K = skew(axis)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def inertia_from_mass_com(mass: float, com: Array, inertia_origin: Array) -> Array:
    """6x6 spatial inertia from mass, CoM and rotational inertia about the frame origin."""
    h = mass * np.asarray(com, dtype=float)
    I = np.zeros((6, 6))
    I[:3, :3] = inertia_origin
    I[:3, 3:] = skew(h)
    I[3:, :3] = skew(h).T
    I[3:, 3:] = mass * np.eye(3)
    return I


def inertia_params_to_matrix(block: Array) -> Array:
    """6x6 spatial inertia from the 10-vector [m, hx, hy, hz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]."""
    m = block[0]
    h = block[1:4]
    Ixx, Ixy, Ixz, Iyy, Iyz, Izz = block[4:10]
    rot = np.array([[Ixx, Ixy, Ixz], [Ixy, Iyy, Iyz], [Ixz, Iyz, Izz]])
    I = np.zeros((6, 6))
    I[:3, :3] = rot
    I[:3, 3:] = skew(h)
    I[3:, :3] = skew(h).T
    I[3:, 3:] = m * np.eye(3)
    return I


def inertia_momentum_rows(v: Array) -> Array:
    """6x10 matrix L with L(v) @ params == I(params) @ v.

    Parameter order matches inertia_params_to_matrix. Used to build regressor
    columns without forming one inertia matrix per basis parameter.
    """
    w, lin = v[:3], v[3:]
    L = np.zeros((6, 10))
    # angular rows: Ibar @ w + h x lin
    L[:3, 1:4] = -skew(lin)
    L[0, 4:7] = w
    L[1, 5] = w[0]
    L[1, 7:9] = w[1:]
    L[2, 6] = w[0]
    L[2, 8] = w[1]
    L[2, 9] = w[2]
    # linear rows: m lin + w x h
    L[3:, 0] = lin
    L[3:, 1:4] = skew(w)
    return L


# ---------------------------------------------------------------------------
# Validated value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialMotion:
    """Spatial velocity or acceleration: angular part first, then linear."""

    angular: Array
    linear: Array

    def __post_init__(self):
        object.__setattr__(self, "angular", _freeze(np.asarray(self.angular).reshape(3)))
        object.__setattr__(self, "linear", _freeze(np.asarray(self.linear).reshape(3)))
        if not (np.isfinite(self.angular).all() and np.isfinite(self.linear).all()):
            raise ValueError("spatial motion entries must be finite")

    @classmethod
    def from_vector(cls, v: Array) -> "SpatialMotion":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    @property
    def vector(self) -> Array:
        return np.concatenate([self.angular, self.linear])


@dataclass(frozen=True)
class SpatialForce:
    """Spatial wrench: moment first, then force (dual ordering to SpatialMotion)."""

    moment: Array
    force: Array

    def __post_init__(self):
        object.__setattr__(self, "moment", _freeze(np.asarray(self.moment).reshape(3)))
        object.__setattr__(self, "force", _freeze(np.asarray(self.force).reshape(3)))
        if not (np.isfinite(self.moment).all() and np.isfinite(self.force).all()):
            raise ValueError("spatial force entries must be finite")

    @classmethod
    def from_vector(cls, f: Array) -> "SpatialForce":
        f = np.asarray(f, dtype=float).reshape(6)
        return cls(f[:3], f[3:])

    @property
    def vector(self) -> Array:
        return np.concatenate([self.moment, self.force])

    def dot(self, motion: SpatialMotion) -> float:
        return float(self.vector @ motion.vector)


@dataclass(frozen=True)
class PluckerTransform:
    """Coordinate transform between frames: rotate by `rotation` after shifting by `translation`."""

    rotation: Array = field(default_factory=lambda: np.eye(3))
    translation: Array = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        E = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        r = np.asarray(self.translation, dtype=float).reshape(3)
        if np.abs(E.T @ E - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(E) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", _freeze(E))
        object.__setattr__(self, "translation", _freeze(r))

    @classmethod
    def identity(cls) -> "PluckerTransform":
        return cls()

    def inverse(self) -> "PluckerTransform":
        E, r = invert_er(self.rotation, self.translation)
        return PluckerTransform(E, r)

    def motion_matrix(self) -> Array:
        """Dense 6x6 acting on motion vectors (test oracle helper)."""
        E, r = self.rotation, self.translation
        X = np.zeros((6, 6))
        X[:3, :3] = E
        X[3:, 3:] = E
        X[3:, :3] = -E @ skew(r)
        return X

    def force_matrix(self) -> Array:
        """Dense 6x6 acting on force vectors (inverse-transpose of motion_matrix)."""
        E, r = self.rotation, self.translation
        X = np.zeros((6, 6))
        X[:3, :3] = E
        X[3:, 3:] = E
        X[:3, 3:] = -E @ skew(r)
        return X


@dataclass(frozen=True)
class SpatialInertia:
    """6x6 spatial inertia (rigid body or added mass)."""

    matrix: Array

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float).reshape(6, 6)
        if np.abs(M - M.T).max() > _ORTHO_TOL * max(1.0, np.abs(M).max()):
            raise ValueError("spatial inertia must be symmetric")
        object.__setattr__(self, "matrix", _freeze(0.5 * (M + M.T)))

    @classmethod
    def zero(cls) -> "SpatialInertia":
        return cls(np.zeros((6, 6)))

    @classmethod
    def from_mass_com(cls, mass: float, com, inertia_origin) -> "SpatialInertia":
        return cls(inertia_from_mass_com(mass, np.asarray(com, dtype=float),
                                         np.asarray(inertia_origin, dtype=float)))

    def apply(self, v: SpatialMotion) -> SpatialForce:
        return SpatialForce.from_vector(self.matrix @ v.vector)

    def is_psd(self, tol: float = 1e-9) -> bool:
        return float(np.linalg.eigvalsh(self.matrix)[0]) >= -tol


# ---------------------------------------------------------------------------
# Public operations on the value types
# ---------------------------------------------------------------------------


def compose(outer: PluckerTransform, inner: PluckerTransform) -> PluckerTransform:
    """Transform mapping through `inner` first, then `outer`."""
    E, r = compose_er(outer.rotation, outer.translation, inner.rotation, inner.translation)
    return PluckerTransform(E, r)


def transform(X: PluckerTransform, v):
    """Apply X to a motion, or its force dual to a wrench, by argument kind."""
    if isinstance(v, SpatialMotion):
        return SpatialMotion.from_vector(transform_motion(X.rotation, X.translation, v.vector))
    if isinstance(v, SpatialForce):
        return SpatialForce.from_vector(transform_force(X.rotation, X.translation, v.vector))
    raise TypeError(f"expected SpatialMotion or SpatialForce, got {type(v).__name__}")


def motion_cross(v: SpatialMotion, w):
    """v x w for motions, v x* w for forces."""
    if isinstance(w, SpatialMotion):
        return SpatialMotion.from_vector(cross_motion(v.vector, w.vector))
    if isinstance(w, SpatialForce):
        return SpatialForce.from_vector(cross_force(v.vector, w.vector))
    raise TypeError(f"expected SpatialMotion or SpatialForce, got {type(w).__name__}")
