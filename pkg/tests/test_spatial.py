import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uvmsid.spatial import (
    PluckerTransform,
    SpatialForce,
    SpatialInertia,
    SpatialMotion,
    compose,
    inertia_momentum_rows,
    inertia_params_to_matrix,
    motion_cross,
    rot_about_axis,
    skew,
    transform,
)

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


def vec3(rng):
    return rng.uniform(-2, 2, 3)


def random_transform(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return PluckerTransform(rot_about_axis(axis, rng.uniform(-np.pi, np.pi)), vec3(rng))


def test_identity_compose(rng):
    X = random_transform(rng)
    I = PluckerTransform.identity()
    for Y in (compose(I, X), compose(X, I)):
        assert np.allclose(Y.rotation, X.rotation)
        assert np.allclose(Y.translation, X.translation)


def test_compose_with_inverse_is_identity(rng):
    X = random_transform(rng)
    Y = compose(X, X.inverse())
    assert np.abs(Y.rotation - np.eye(3)).max() < 1e-12
    assert np.abs(Y.translation).max() < 1e-12


def test_compose_matches_dense_matrix_product(rng):
    for _ in range(20):
        X1, X2 = random_transform(rng), random_transform(rng)
        m = SpatialMotion.from_vector(rng.uniform(-1, 1, 6))
        via_types = transform(compose(X1, X2), m).vector
        via_dense = X1.motion_matrix() @ X2.motion_matrix() @ m.vector
        assert np.abs(via_types - via_dense).max() < 1e-12


def test_compose_associative(rng):
    for _ in range(20):
        X1, X2, X3 = (random_transform(rng) for _ in range(3))
        a = compose(compose(X1, X2), X3)
        b = compose(X1, compose(X2, X3))
        assert np.abs(a.rotation - b.rotation).max() < 1e-12
        assert np.abs(a.translation - b.translation).max() < 1e-12


def test_identity_transform_preserves_vectors(rng):
    I = PluckerTransform.identity()
    m = SpatialMotion.from_vector(rng.uniform(-1, 1, 6))
    f = SpatialForce.from_vector(rng.uniform(-1, 1, 6))
    assert np.array_equal(transform(I, m).vector, m.vector)
    assert np.array_equal(transform(I, f).vector, f.vector)


def test_pure_translation_of_angular_motion():
    r = np.array([0.0, 0.0, 2.0])
    X = PluckerTransform(np.eye(3), r)
    m = SpatialMotion(angular=[1.0, 0.0, 0.0], linear=[0.0, 0.0, 0.0])
    out = transform(X, m)
    dense = X.motion_matrix() @ m.vector
    assert np.allclose(out.vector, dense)
    # linear part picks up the moment of the rotation about the shifted origin
    assert np.allclose(out.linear, np.cross(m.angular, r))
    assert np.allclose(out.angular, m.angular)


def test_force_transform_is_motion_adjoint(rng):
    for _ in range(100):
        X = random_transform(rng)
        m = SpatialMotion.from_vector(rng.uniform(-1, 1, 6))
        f = SpatialForce.from_vector(rng.uniform(-1, 1, 6))
        lhs = transform(X, f).dot(transform(X, m))
        assert abs(lhs - f.dot(m)) < 1e-12


def test_motion_self_cross_vanishes(rng):
    v = SpatialMotion.from_vector(rng.uniform(-1, 1, 6))
    assert np.abs(motion_cross(v, v).vector).max() == 0.0


def test_so3_cross_case():
    w = SpatialMotion(angular=[0.0, 0.0, 1.0], linear=[0.0, 0.0, 0.0])
    x = SpatialMotion(angular=[1.0, 0.0, 0.0], linear=[0.0, 0.0, 0.0])
    out = motion_cross(w, x)
    assert np.allclose(out.angular, [0.0, 1.0, 0.0])
    assert np.abs(out.linear).max() == 0.0


def test_force_cross_is_negative_transpose_of_motion_cross(rng):
    for _ in range(100):
        v = rng.uniform(-1, 1, 6)
        f = rng.uniform(-1, 1, 6)
        w, lin = v[:3], v[3:]
        M = np.zeros((6, 6))
        M[:3, :3] = skew(w)
        M[3:, :3] = skew(lin)
        M[3:, 3:] = skew(w)
        expected = -M.T @ f
        got = motion_cross(SpatialMotion.from_vector(v), SpatialForce.from_vector(f)).vector
        assert np.abs(got - expected).max() < 1e-12


def test_rotation_validation_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        PluckerTransform(np.eye(3) * 1.001, np.zeros(3))
    with pytest.raises(ValueError):
        PluckerTransform(-np.eye(3), np.zeros(3))  # det -1


def test_inertia_application_symmetric(rng):
    block = rng.uniform(0.1, 1.0, 10)
    I = SpatialInertia(inertia_params_to_matrix(block))
    v = SpatialMotion.from_vector(rng.uniform(-1, 1, 6))
    w = SpatialMotion.from_vector(rng.uniform(-1, 1, 6))
    assert abs(I.apply(v).dot(w) - I.apply(w).dot(v)) < 1e-12


def test_momentum_rows_match_inertia_product(rng):
    for _ in range(50):
        params = rng.uniform(-1, 1, 10)
        v = rng.uniform(-1, 1, 6)
        direct = inertia_params_to_matrix(params) @ v
        via_rows = inertia_momentum_rows(v) @ params
        assert np.abs(direct - via_rows).max() < 1e-12


@given(st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6))
@settings(max_examples=50, deadline=None)
def test_inner_product_preserved_under_random_transform(mv, fv):
    rng = np.random.default_rng(abs(hash((tuple(mv), tuple(fv)))) % 2**32)
    X = random_transform(rng)
    m = SpatialMotion.from_vector(np.asarray(mv))
    f = SpatialForce.from_vector(np.asarray(fv))
    assert transform(X, f).dot(transform(X, m)) == pytest.approx(f.dot(m), abs=1e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
