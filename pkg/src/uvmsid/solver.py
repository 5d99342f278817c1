"""Self-contained solver for the horizon estimation problem class.

Problems have the shape

    minimize    (x - center)' diag(q) (x - center) + sum_k huber_rho(offset_k - Y_k x)
    subject to  A_eq x = b_eq
                lower <= x <= upper
                S_m(x) >= margin_m * I   for each affine symmetric map S_m

and are solved with ADMM over consensus copies of the box, every Huber
residual block, and every PSD block. The x-step is a KKT solve that keeps the
equalities exact; the cone and box copies are proximal steps with closed
forms. Over-relaxation and residual-balancing penalty adaptation are applied.
Deterministic: no randomness anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

Array = np.ndarray

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

_SQRT2 = np.sqrt(2.0)


def huber_value(v: Array, rho: float) -> float:
    """Vector Huber penalty: quadratic inside rho, linear growth outside."""
    norm = float(np.linalg.norm(v))
    if not np.isfinite(rho) or norm <= rho:
        return norm * norm
    return 2.0 * rho * norm - rho * rho


def prox_huber(z: Array, rho: float, step: float) -> Array:
    """Proximal point of step * huber_rho at z; contraction toward the origin."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if step <= 0:
        raise ValueError("step must be positive")
    z = np.asarray(z, dtype=float)
    norm = np.linalg.norm(z)
    if not np.isfinite(rho) or norm <= rho * (1.0 + 2.0 * step):
        return z / (1.0 + 2.0 * step)
    return z * (1.0 - 2.0 * step * rho / norm)


def project_psd(S: Array, margin: float = 0.0) -> Array:
    """Nearest (Frobenius) matrix with eigenvalues clipped at `margin`."""
    S = np.asarray(S, dtype=float)
    sym = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.maximum(vals, margin)) @ vecs.T


_SVEC_CACHE: dict[int, tuple[Array, Array, Array]] = {}


def _svec_indices(k: int) -> tuple[Array, Array, Array]:
    """Upper-triangle indices and off-diagonal scale factors, cached per size."""
    hit = _SVEC_CACHE.get(k)
    if hit is None:
        rows, cols = np.triu_indices(k)
        scale = np.where(rows != cols, _SQRT2, 1.0)
        hit = (rows, cols, scale)
        _SVEC_CACHE[k] = hit
    return hit


def svec(S: Array) -> Array:
    r, c, scale = _svec_indices(S.shape[-1])
    return S[..., r, c] * scale


def unsvec(v: Array, k: int) -> Array:
    r, c, scale = _svec_indices(k)
    S = np.zeros((k, k))
    vals = v / scale
    S[r, c] = vals
    S[c, r] = vals
    return S


@dataclass
class HuberBlock:
    """One residual block offset - rows @ x under the Huber penalty."""

    rows: Array
    offset: Array
    rho: float

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float).reshape(self.rows.shape[0])
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass
class PsdBlock:
    """Affine symmetric-matrix map x -> S(x) constrained to S(x) >= margin I."""

    size: int
    map: Array      # (k(k+1)/2, dim) in scaled svec coordinates
    const: Array    # (k(k+1)/2,)
    margin: float = 0.0

    @classmethod
    def from_basis(cls, basis: Array, const: Array | None = None,
                   margin: float = 0.0) -> "PsdBlock":
        """Build from per-parameter basis matrices: S(x) = sum_i x_i basis[i] + const."""
        basis = np.asarray(basis, dtype=float)
        dim, k, _ = basis.shape
        mat = svec(basis).T
        c = np.zeros(k * (k + 1) // 2) if const is None else svec(np.asarray(const, dtype=float))
        return cls(size=k, map=mat, const=c, margin=margin)

    def evaluate(self, x: Array) -> Array:
        return unsvec(self.map @ x + self.const, self.size)


@dataclass
class ConicProblem:
    """Quadratic increment penalty + Huber data terms + polyhedral and PSD feasibility."""

    dim: int
    q_diag: Array
    center: Array
    huber_blocks: list[HuberBlock] = field(default_factory=list)
    a_eq: Array | None = None
    b_eq: Array | None = None
    lower: Array | None = None
    upper: Array | None = None
    psd_blocks: list[PsdBlock] = field(default_factory=list)

    def __post_init__(self):
        self.q_diag = np.asarray(self.q_diag, dtype=float).reshape(self.dim)
        if (self.q_diag <= 0).any():
            raise ValueError("q_diag entries must be positive")
        self.center = np.asarray(self.center, dtype=float).reshape(self.dim)
        self.lower = (
            np.full(self.dim, -np.inf) if self.lower is None
            else np.asarray(self.lower, dtype=float).reshape(self.dim)
        )
        self.upper = (
            np.full(self.dim, np.inf) if self.upper is None
            else np.asarray(self.upper, dtype=float).reshape(self.dim)
        )
        if self.a_eq is not None:
            self.a_eq = np.asarray(self.a_eq, dtype=float).reshape(-1, self.dim)
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(self.a_eq.shape[0])

    def objective(self, x: Array) -> float:
        val = float(self.q_diag @ (x - self.center) ** 2)
        for blk in self.huber_blocks:
            val += huber_value(blk.offset - blk.rows @ x, blk.rho)
        return val


@dataclass
class Solution:
    x: Array
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    warm_state: dict | None = None


def _stack_problem(problem: ConicProblem):
    dim = problem.dim
    mats = [np.eye(dim)]
    consts = [np.zeros(dim)]
    pos = dim
    h_starts, h_lens, h_rhos, h_offsets = [], [], [], []
    for blk in problem.huber_blocks:
        m = blk.rows.shape[0]
        mats.append(blk.rows)
        consts.append(np.zeros(m))
        h_starts.append(pos)
        h_lens.append(m)
        h_rhos.append(blk.rho)
        h_offsets.append(blk.offset)
        pos += m
    p_slices = []
    for blk in problem.psd_blocks:
        m = blk.map.shape[0]
        # cone blocks tolerate positive rescaling; bring each to unit entry
        # scale so no block dominates the consensus residual. Powers of two
        # keep the scaling stable across consecutive warm-started solves.
        peak = max(np.abs(blk.map).max(), np.abs(blk.const).max(), 1e-12)
        kappa = 2.0 ** round(np.log2(1.0 / peak))
        mats.append(kappa * blk.map)
        consts.append(kappa * blk.const)
        p_slices.append((pos, pos + m, blk.size, kappa * blk.margin))
        pos += m
    A = np.vstack(mats)
    c = np.concatenate(consts)
    return A, c, (np.array(h_starts, dtype=int), np.array(h_lens, dtype=int),
                  np.array(h_rhos), h_offsets), p_slices


def solve(problem: ConicProblem, warm: dict | None = None, tol: float = 1e-6,
          max_iters: int = 2000, over_relaxation: float = 1.6,
          polish: bool = True) -> Solution:
    """ADMM solve; warm accepts the warm_state of a previous Solution.

    With polish enabled, solutions strictly inside every cone and box get a
    Newton refinement of the smooth objective, which resolves weakly excited
    directions far below the splitting's termination floor.
    """
    dim = problem.dim
    x0 = problem.center.copy()

    # upfront feasibility screens
    if (problem.lower > problem.upper).any():
        return Solution(x0, INFEASIBLE, 0, np.inf, np.inf, np.inf, None)
    pins: list[tuple[int, float]] = []
    if problem.a_eq is not None and problem.a_eq.size:
        sol, res, rank, _ = np.linalg.lstsq(problem.a_eq, problem.b_eq, rcond=None)
        eq_resid = np.linalg.norm(problem.a_eq @ sol - problem.b_eq)
        if eq_resid > 1e-8 * (1.0 + np.linalg.norm(problem.b_eq)):
            return Solution(x0, INFEASIBLE, 0, float(eq_resid), np.inf, np.inf, None)
        for i in range(problem.a_eq.shape[0]):
            row = problem.a_eq[i]
            nz = np.flatnonzero(row)
            if nz.size == 1 and abs(row[nz[0]] - 1.0) < 1e-12:
                idx = int(nz[0])
                val = float(problem.b_eq[i])
                pins.append((idx, val))
                if val < problem.lower[idx] - 1e-12 or val > problem.upper[idx] + 1e-12:
                    return Solution(x0, INFEASIBLE, 0, np.inf, np.inf, np.inf, None)

    A, c_aff, (h_starts, h_lens, h_rhos, h_offsets), p_slices = _stack_problem(problem)
    m_total = A.shape[0]
    rms = 1.0 / np.sqrt(m_total)

    # column equilibration: x = D xs. The consensus copies live in the row
    # space of A, so the change of variables never touches z, u, or the warm
    # state; only the x-update sees it.
    q2 = 2.0 * problem.q_diag
    col_norms = np.sqrt((A * A).sum(axis=0) + q2)
    D = 1.0 / np.clip(col_norms, 1e-10, 1e10)
    As = A * D[None, :]
    AtA = As.T @ As
    q2s = q2 * D * D
    a_eq_s = None if problem.a_eq is None else problem.a_eq * D[None, :]

    offsets_flat = (
        np.concatenate(h_offsets) if h_offsets else np.zeros(0)
    )
    h_stop = h_starts + h_lens

    sigma = 1.0
    z = None
    u = None
    if warm is not None and warm.get("m_total") == m_total and warm.get("dim") == dim:
        z = warm["z"].copy()
        u = warm["u"].copy()
        sigma = float(warm["sigma"])
    if z is None:
        z = A @ x0 + c_aff
        u = np.zeros(m_total)

    n_eq = 0 if problem.a_eq is None else problem.a_eq.shape[0]

    def factor(sig: float):
        H = sig * AtA
        H[np.diag_indices(dim)] += q2s
        if n_eq:
            K = np.zeros((dim + n_eq, dim + n_eq))
            K[:dim, :dim] = H
            K[:dim, dim:] = a_eq_s.T
            K[dim:, :dim] = a_eq_s
        else:
            K = H
        return lu_factor(K)

    lu = factor(sigma)
    lin_const = (q2 * problem.center) * D

    x = x0
    pr = dr = np.inf
    status = MAX_ITERS
    iterations = 0
    pr_history: list[float] = []

    for it in range(1, max_iters + 1):
        iterations = it
        rhs_top = lin_const + sigma * (As.T @ (z - u - c_aff))
        if n_eq:
            rhs = np.concatenate([rhs_top, problem.b_eq])
            xs = lu_solve(lu, rhs)[:dim]
        else:
            xs = lu_solve(lu, rhs_top)
        x = D * xs

        w = A @ x + c_aff
        v = over_relaxation * w + (1.0 - over_relaxation) * z
        y = v + u
        z_old = z
        z = np.empty_like(y)

        # box copy
        z[:dim] = np.clip(y[:dim], problem.lower, problem.upper)

        # Huber copies, all blocks at once
        if h_starts.size:
            sl = slice(h_starts[0], h_stop[-1])
            s_pt = offsets_flat - y[sl]
            sq = np.add.reduceat(s_pt * s_pt, h_starts - h_starts[0])
            norms = np.sqrt(sq)
            t = 1.0 / sigma
            quad = norms <= h_rhos * (1.0 + 2.0 * t)
            rho_safe = np.where(np.isfinite(h_rhos), h_rhos, 0.0)
            shrink = np.where(
                quad,
                1.0 / (1.0 + 2.0 * t),
                1.0 - 2.0 * t * rho_safe / np.maximum(norms, 1e-300),
            )
            z[sl] = offsets_flat - s_pt * np.repeat(shrink, h_lens)

        # PSD copies
        for start, stop, k, margin in p_slices:
            S = unsvec(y[start:stop], k)
            vals, vecs = np.linalg.eigh(S)
            z[start:stop] = svec((vecs * np.maximum(vals, margin)) @ vecs.T)

        u = u + v - z

        pr = float(np.linalg.norm(w - z)) * rms
        dr = float(sigma * np.linalg.norm(As.T @ (z - z_old))) / np.sqrt(dim)
        pr_history.append(pr)
        if pr <= tol and dr <= tol:
            status = OPTIMAL
            break

        if it % 10 == 0 and it < max_iters:
            if pr > 10.0 * dr and sigma < 1e6:
                sigma *= 2.0
                u *= 0.5
                lu = factor(sigma)
            elif dr > 10.0 * pr and sigma > 1e-6:
                sigma *= 0.5
                u *= 2.0
                lu = factor(sigma)

    if status == MAX_ITERS and len(pr_history) >= 200:
        early = np.median(pr_history[50:100])
        late = np.median(pr_history[-50:])
        if late > max(10.0 * early, 1e3 * tol):
            status = INFEASIBLE

    # final polish: exact bounds, exact pins
    x = np.clip(x, problem.lower, problem.upper)
    for idx, val in pins:
        x[idx] = val

    if status == OPTIMAL and polish:
        x = _polish(problem, x, pins, D)
    if status == OPTIMAL:
        x = _cone_repair(problem, x, pins)

    warm_state = {"z": z, "u": u, "sigma": sigma, "m_total": m_total, "dim": dim}
    return Solution(
        x=x,
        status=status,
        iterations=iterations,
        primal_residual=pr,
        dual_residual=dr,
        objective=problem.objective(x),
        warm_state=warm_state,
    )


def _polish(problem: ConicProblem, x0: Array, pins: list[tuple[int, float]],
            D: Array, max_newton: int = 30) -> Array:
    """Newton refinement on the smooth objective over the inactive set.

    The splitting above resolves strongly observable directions quickly but
    leaves weakly excited ones at the termination noise floor. Coordinates
    sitting on a box bound stay frozen; if a matrix cone is active the
    refinement is skipped entirely. Otherwise the problem reduces to the
    smooth penalty plus equalities, which Newton drives to machine accuracy.
    """
    for blk in problem.psd_blocks:
        S = blk.evaluate(x0)
        peak = max(np.abs(S).max(), 1.0)
        if np.linalg.eigvalsh(S)[0] < blk.margin + 1e-6 * peak:
            return x0

    dim = problem.dim
    free = np.ones(dim, dtype=bool)
    for idx, _ in pins:
        free[idx] = False
    bound_scale = 1e-9 * (1.0 + np.abs(x0))
    free &= ~(x0 <= problem.lower + bound_scale)
    free &= ~(x0 >= problem.upper - bound_scale)
    if not free.any():
        return x0
    if problem.a_eq is not None and problem.a_eq.shape[0] != len(pins):
        return x0  # general equalities: leave to the splitting

    x = x0.copy()
    scale = D.copy()

    def grad_hess(xv: Array):
        g = 2.0 * problem.q_diag * (xv - problem.center)
        H = np.diag(2.0 * problem.q_diag)
        for blk in problem.huber_blocks:
            r = blk.offset - blk.rows @ xv
            nrm = np.linalg.norm(r)
            if not np.isfinite(blk.rho) or nrm <= blk.rho:
                g -= 2.0 * (blk.rows.T @ r)
                H += 2.0 * (blk.rows.T @ blk.rows)
            else:
                g -= 2.0 * blk.rho * (blk.rows.T @ r) / nrm
                YtY = blk.rows.T @ blk.rows
                Ytr = blk.rows.T @ r
                H += 2.0 * blk.rho * (YtY / nrm - np.outer(Ytr, Ytr) / nrm**3)
        return g, H

    obj = problem.objective(x)
    for _ in range(max_newton):
        g, H = grad_hess(x)
        gf = (g * scale)[free]
        if np.linalg.norm(gf, np.inf) <= 1e-12 * max(1.0, abs(obj)):
            break
        Hf = (H * scale[None, :] * scale[:, None])[np.ix_(free, free)]
        try:
            step_f = np.linalg.solve(Hf + 1e-14 * np.eye(Hf.shape[0]), -gf)
        except np.linalg.LinAlgError:
            break
        step = np.zeros(dim)
        step[free] = step_f * scale[free]
        t = 1.0
        improved = False
        for _ in range(30):
            cand = x + t * step
            if _strictly_feasible(problem, cand):
                cand_obj = problem.objective(cand)
                if cand_obj <= obj + 1e-4 * t * float(g @ step) or cand_obj < obj:
                    x = cand
                    obj = cand_obj
                    improved = True
                    break
            t *= 0.5
        if not improved:
            break
    return x


def _cone_repair(problem: ConicProblem, x0: Array,
                 pins: list[tuple[int, float]], rounds: int = 12) -> Array:
    """Tiny least-squares correction pushing residual cone violations to zero.

    The splitting's consensus gap can leave matrix blocks a hair outside the
    cone; optimal solutions must satisfy them to eigenvalue tolerance, so the
    violation is mapped back through the affine maps and removed.
    """
    if not problem.psd_blocks:
        return x0
    x = x0.copy()
    pin_idx = [idx for idx, _ in pins]
    for _ in range(rounds):
        rows = []
        rhs = []
        for blk in problem.psd_blocks:
            S = blk.evaluate(x)
            vals, vecs = np.linalg.eigh(S)
            scale = max(np.abs(S).max(), 1.0)
            if vals[0] >= blk.margin - 1e-10 * scale:
                continue
            target = (vecs * np.maximum(vals, blk.margin)) @ vecs.T
            rows.append(blk.map)
            rhs.append(svec(target) - svec(S))
        if not rows:
            break
        A = np.vstack(rows)
        if pin_idx:
            A = A.copy()
            A[:, pin_idx] = 0.0
        delta, *_ = np.linalg.lstsq(A, np.concatenate(rhs), rcond=None)
        if pin_idx:
            delta[pin_idx] = 0.0
        x = np.clip(x + delta, problem.lower, problem.upper)
    return x


def _strictly_feasible(problem: ConicProblem, x: Array,
                       box_tol: float = 1e-9) -> bool:
    if (x < problem.lower - box_tol).any() or (x > problem.upper + box_tol).any():
        return False
    for blk in problem.psd_blocks:
        S = blk.evaluate(x)
        lam = np.linalg.eigvalsh(S)[0]
        peak = max(np.abs(S).max(), 1.0)
        if lam < blk.margin - 1e-9 * peak:
            return False
    return True
