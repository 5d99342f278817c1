import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uvmsid.solver import (
    ConicProblem,
    HuberBlock,
    INFEASIBLE,
    MAX_ITERS,
    OPTIMAL,
    PsdBlock,
    huber_value,
    project_psd,
    prox_huber,
    solve,
    svec,
    unsvec,
)


def test_prox_huber_zero_fixed_point():
    assert np.abs(prox_huber(np.zeros(4), 1.0, 0.5)).max() == 0.0


def test_prox_huber_quadratic_region_matches_scaled_shrinkage(rng):
    step = 0.37
    z = rng.uniform(-0.1, 0.1, 5)
    out = prox_huber(z, rho=10.0, step=step)
    assert np.allclose(out, z / (1.0 + 2.0 * step))


def test_huber_value_branch_continuity():
    rho = 1.3
    v = np.array([rho, 0.0])
    quad = np.linalg.norm(v) ** 2
    lin = 2 * rho * np.linalg.norm(v) - rho**2
    assert quad == pytest.approx(lin)
    assert huber_value(v, rho) == pytest.approx(rho**2)


@given(st.floats(min_value=0.05, max_value=5.0), st.floats(min_value=0.05, max_value=5.0))
@settings(max_examples=40, deadline=None)
def test_prox_huber_is_contraction(rho, step):
    rng = np.random.default_rng(int(rho * 1000 + step * 17) % 2**31)
    a = rng.uniform(-3, 3, 6)
    b = rng.uniform(-3, 3, 6)
    pa = prox_huber(a, rho, step)
    pb = prox_huber(b, rho, step)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
    assert np.linalg.norm(pa) <= np.linalg.norm(a) + 1e-12


def test_project_psd_fixed_point_and_clip(rng):
    A = rng.normal(size=(5, 5))
    P = A @ A.T + 1e-3 * np.eye(5)
    assert np.abs(project_psd(P) - P).max() < 1e-12
    D = np.diag([1.0, -1.0])
    assert np.allclose(project_psd(D), np.diag([1.0, 0.0]))


def test_project_psd_matches_eigen_clipping_oracle(rng):
    S = rng.normal(size=(6, 6))
    S = 0.5 * (S + S.T)
    P = project_psd(S)
    vals, vecs = np.linalg.eigh(S)
    oracle = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    assert np.abs(P - oracle).max() < 1e-12
    assert np.linalg.eigvalsh(P).min() >= -1e-12
    # nearest in Frobenius norm among a few random PSD candidates
    base = np.linalg.norm(S - P)
    for _ in range(20):
        Q = rng.normal(size=(6, 6))
        cand = project_psd(S + 0.1 * (Q + Q.T))
        assert np.linalg.norm(S - cand) >= base - 1e-9


def test_svec_round_trip(rng):
    S = rng.normal(size=(4, 4))
    S = 0.5 * (S + S.T)
    v = svec(S)
    assert np.abs(unsvec(v, 4) - S).max() < 1e-12
    T = rng.normal(size=(4, 4))
    T = 0.5 * (T + T.T)
    assert float(v @ svec(T)) == pytest.approx(np.trace(S @ T), abs=1e-10)


def test_unconstrained_least_squares_matches_normal_equations(rng):
    dim = 15
    Y = rng.normal(size=(40, dim))
    b = Y @ rng.normal(size=dim)
    q = np.full(dim, 0.3)
    center = rng.normal(size=dim)
    prob = ConicProblem(dim=dim, q_diag=q, center=center,
                        huber_blocks=[HuberBlock(Y, b, np.inf)])
    sol = solve(prob)
    assert sol.status == OPTIMAL
    ref = np.linalg.solve(np.diag(q) + Y.T @ Y, q * center + Y.T @ b)
    assert np.abs(sol.x - ref).max() < 1e-6


def test_scalar_active_bound():
    prob = ConicProblem(dim=1, q_diag=[1.0], center=[1.0], upper=[0.0])
    sol = solve(prob)
    assert sol.status == OPTIMAL
    assert sol.x[0] == 0.0


def test_small_instance_matches_grid_refinement_oracle(rng):
    dim = 5
    Yr = rng.normal(size=(3, dim))
    off = rng.normal(size=3) * 2.0
    qd = np.full(dim, 8.0)
    ctr = np.array([0.5, 0.1, 0.8, 0.0, -0.3])
    basis = np.zeros((dim, 2, 2))
    basis[0, 0, 0] = 1.0
    basis[1, 0, 1] = basis[1, 1, 0] = 1.0
    basis[2, 1, 1] = 1.0
    prob = ConicProblem(
        dim=dim, q_diag=qd, center=ctr,
        huber_blocks=[HuberBlock(Yr, off, 1.0)],
        a_eq=np.array([[0.0, 0, 0, 1.0, 0]]), b_eq=np.array([0.7]),
        upper=np.array([np.inf, np.inf, np.inf, np.inf, 0.0]),
        psd_blocks=[PsdBlock.from_basis(basis)],
    )
    sol = solve(prob)
    assert sol.status == OPTIMAL

    def grid_objective(X):
        d = X - ctr
        val = (d * d * qd).sum(axis=1)
        r = off[None, :] - X @ Yr.T
        nr = np.linalg.norm(r, axis=1)
        val += np.where(nr <= 1.0, nr**2, 2 * nr - 1.0)
        feasible = (
            (X[:, 4] <= 1e-12)
            & (X[:, 0] >= -1e-12)
            & (X[:, 2] >= -1e-12)
            & (X[:, 0] * X[:, 2] - X[:, 1] ** 2 >= -1e-12)
        )
        return np.where(feasible, val, np.inf)

    free = [0, 1, 2, 4]
    centre = np.array([0.0, 0.0, 0.0, 0.7, 0.0])
    span = 3.0
    best = centre
    for _ in range(20):
        grids = [np.linspace(centre[i] - span, centre[i] + span, 11) for i in free]
        mesh = np.meshgrid(*grids, indexing="ij")
        X = np.zeros((mesh[0].size, dim))
        for k, i in enumerate(free):
            X[:, i] = mesh[k].ravel()
        X[:, 3] = 0.7
        vals = grid_objective(X)
        best = X[np.argmin(vals)]
        centre = best.copy()
        span *= 0.5
    assert np.abs(sol.x - best).max() < 1e-4


def test_infeasible_equalities_detected():
    prob = ConicProblem(dim=2, q_diag=np.ones(2), center=np.zeros(2),
                        a_eq=np.array([[1.0, 0.0], [1.0, 0.0]]),
                        b_eq=np.array([0.0, 1.0]))
    assert solve(prob).status == INFEASIBLE


def test_pin_outside_box_is_infeasible():
    prob = ConicProblem(dim=2, q_diag=np.ones(2), center=np.zeros(2),
                        a_eq=np.array([[1.0, 0.0]]), b_eq=np.array([2.0]),
                        upper=np.array([1.0, np.inf]))
    assert solve(prob).status == INFEASIBLE


def test_solution_respects_constraints(rng):
    dim = 12
    Y = rng.normal(size=(30, dim))
    b = Y @ rng.normal(size=dim)
    lower = np.full(dim, -np.inf)
    upper = np.full(dim, np.inf)
    lower[3] = 0.0
    upper[5] = 0.0
    a_eq = np.zeros((1, dim))
    a_eq[0, 7] = 1.0
    prob = ConicProblem(dim=dim, q_diag=np.ones(dim), center=rng.normal(size=dim),
                        huber_blocks=[HuberBlock(Y, b, 2.0)],
                        a_eq=a_eq, b_eq=np.array([0.33]),
                        lower=lower, upper=upper)
    sol = solve(prob)
    assert sol.status == OPTIMAL
    assert sol.x[7] == 0.33                # equalities exact
    assert sol.x[3] >= 0.0 and sol.x[5] <= 0.0  # bounds exact after projection


def test_warm_restart_of_unchanged_problem_converges_fast(rng):
    dim = 20
    Y = rng.normal(size=(50, dim))
    b = Y @ rng.normal(size=dim) + 0.01 * rng.normal(size=50)
    prob = ConicProblem(dim=dim, q_diag=np.ones(dim), center=np.zeros(dim),
                        huber_blocks=[HuberBlock(Y, b, 1.0)])
    first = solve(prob)
    again = solve(prob, warm=first.warm_state)
    assert again.status == OPTIMAL
    assert again.iterations <= 5


def test_objective_monotone_on_averaged_iterates(rng):
    # statistical check: the running-average iterate objective decreases
    dim = 8
    Y = rng.normal(size=(25, dim))
    b = Y @ rng.normal(size=dim)
    prob = ConicProblem(dim=dim, q_diag=np.full(dim, 0.5), center=rng.normal(size=dim),
                        huber_blocks=[HuberBlock(Y, b, 1.5)],
                        lower=np.full(dim, -3.0), upper=np.full(dim, 3.0))
    values = []
    xs = []
    warm = None
    # emulate the iterate sequence by single-iteration resolves
    for _ in range(60):
        sol = solve(prob, warm=warm, max_iters=1, tol=0.0, polish=False)
        warm = sol.warm_state
        xs.append(sol.x)
        values.append(prob.objective(np.mean(xs, axis=0)))
    diffs = np.diff(values[5:])
    assert (diffs <= 1e-9).mean() >= 0.95
    assert values[-1] <= values[5]


def test_psd_constraint_enforced(rng):
    basis = np.zeros((3, 2, 2))
    basis[0, 0, 0] = 1.0
    basis[1, 0, 1] = basis[1, 1, 0] = 1.0
    basis[2, 1, 1] = 1.0
    blk = PsdBlock.from_basis(basis, margin=1e-8)
    prob = ConicProblem(dim=3, q_diag=np.ones(3), center=np.array([1.0, 2.0, 1.0]),
                        psd_blocks=[blk])
    sol = solve(prob)
    assert sol.status == OPTIMAL
    S = blk.evaluate(sol.x)
    assert np.linalg.eigvalsh(S).min() >= -1e-5
    # truth: nearest PSD completion of [[1,2],[2,1]] under the quadratic pull
    assert sol.x[0] > 0.9


@pytest.fixture
def rng():
    return np.random.default_rng(42)
