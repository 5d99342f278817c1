"""Online moving-horizon parameter estimation.

Each incoming sample contributes one regressor/measurement pair to a ring
buffer of the N most recent samples. Every step solves a convex program over
the full parameter vector: a scale-invariant quadratic penalty on the change
from the previous estimate, a robust penalty on the horizon residuals, and
the physical-consistency constraints. Parameters outside the active stage
mask are pinned; rows outside the active row mask are dropped.

The solve runs in per-parameter scaled coordinates (unit quadratic weight),
which keeps the splitting well conditioned across lumps whose magnitudes span
five orders; results are identical to the raw formulation.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import GeneralizedForce, GeneralizedState, inverse_dynamics
from .model import (
    IDX_W,
    N_PER_LINK,
    N_VEHICLE,
    ParameterVector,
    UvmsModel,
    WeightBounds,
    build_pseudo_inertia,
    build_vehicle_inertia,
    feasibility_report,
    link_slice,
    model_from_parameters,
    n_parameters,
    project_to_feasible,
)
from .solver import ConicProblem, HuberBlock, OPTIMAL, PsdBlock, Solution, solve
from .spatial import Array
from .uncertainty import CovarianceState, param_covariance, update_covariance

__all__ = [
    "ConfigError",
    "Stage",
    "StageSchedule",
    "EstimatorConfig",
    "HorizonSample",
    "HorizonBuffer",
    "EstimateState",
    "TraceRow",
    "apply_stage_schedule",
    "push_sample",
    "step",
    "OnlineEstimator",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Stage:
    """One staged-excitation window: which parameters may move, which
    measurement rows are trusted."""

    t_start: float
    t_end: float
    active_params: tuple[int, ...]
    active_rows: tuple[int, ...]
    label: str = ""


@dataclass(frozen=True)
class StageSchedule:
    stages: tuple[Stage, ...]

    def __post_init__(self):
        prev_end = None
        for k, st in enumerate(self.stages):
            if st.t_end <= st.t_start:
                raise ConfigError(f"stage {k} window is empty")
            if prev_end is not None:
                if st.t_start < prev_end - 1e-12:
                    raise ConfigError(f"stage {k} overlaps the previous window")
                if st.t_start > prev_end + 1e-12:
                    raise ConfigError(f"gap in schedule before stage {k}")
            prev_end = st.t_end

    def stage_index(self, t: float) -> int:
        """Index of the window containing t; len(stages) once past the end."""
        for k, st in enumerate(self.stages):
            if st.t_start <= t < st.t_end:
                return k
        return len(self.stages)


@dataclass
class EstimatorConfig:
    """Estimator tuning; defaults size the horizon to one second at 50 Hz."""

    horizon: int = 50
    alpha: float = 0.05
    rho: float = 1.0
    q0: float = 10.0
    psd_margin: float = 1e-8
    huber_scope: str = "block"
    stage_schedule: StageSchedule | None = None
    scale_floor: float = 1e-3
    solver_tol: float = 1e-6
    solver_max_iters: int = 2000
    rms_beta: float = 0.02
    w_bounds: WeightBounds = field(default_factory=lambda: WeightBounds(0.0, np.inf))

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")
        if self.q0 <= 0:
            raise ConfigError("q0 must be positive")
        if self.huber_scope not in ("full", "block", "element"):
            raise ConfigError(f"unknown huber scope {self.huber_scope!r}")


def apply_stage_schedule(config: EstimatorConfig, t: float,
                         n_links: int) -> tuple[Array, Array]:
    """Boolean (parameter, row) masks active at time t; all-on past the end."""
    n_par = n_parameters(n_links)
    n_rows = 6 + n_links
    if config.stage_schedule is None:
        return np.ones(n_par, dtype=bool), np.ones(n_rows, dtype=bool)
    k = config.stage_schedule.stage_index(t)
    if k >= len(config.stage_schedule.stages):
        return np.ones(n_par, dtype=bool), np.ones(n_rows, dtype=bool)
    st = config.stage_schedule.stages[k]
    pmask = np.zeros(n_par, dtype=bool)
    pmask[list(st.active_params)] = True
    rmask = np.zeros(n_rows, dtype=bool)
    rmask[list(st.active_rows)] = True
    return pmask, rmask


@dataclass(frozen=True)
class HorizonSample:
    timestamp: float
    Y: Array
    tau: Array
    row_weights: Array


class HorizonBuffer:
    """Ring of the N most recent synchronized (Y, tau) samples.

    Row weights freeze the running per-channel RMS at push time so that the
    robust penalty sees comparably scaled residuals across force and torque
    channels.
    """

    def __init__(self, capacity: int, n_rows: int, rms_beta: float = 0.02):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.n_rows = n_rows
        self.rms_beta = rms_beta
        self.entries: deque[HorizonSample] = deque(maxlen=capacity)
        self._rms_sq = np.zeros(n_rows)
        self._rms_steps = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def last_timestamp(self) -> float | None:
        return self.entries[-1].timestamp if self.entries else None

    def channel_rms(self) -> Array:
        if self._rms_steps == 0:
            return np.ones(self.n_rows)
        correction = 1.0 - (1.0 - self.rms_beta) ** self._rms_steps
        return np.sqrt(self._rms_sq / correction)

    def push(self, timestamp: float, Y: Array, tau: Array) -> None:
        last = self.last_timestamp
        if last is not None and timestamp <= last:
            raise ValueError(
                f"non-monotone timestamp {timestamp:.6f} after {last:.6f}; sample rejected"
            )
        tau = np.asarray(tau, dtype=float).reshape(self.n_rows)
        self._rms_sq = (1.0 - self.rms_beta) * self._rms_sq + self.rms_beta * tau**2
        self._rms_steps += 1
        rms = self.channel_rms()
        weights = 1.0 / np.maximum(rms, max(1e-9, 1e-3 * rms.max()))
        self.entries.append(
            HorizonSample(timestamp, np.asarray(Y, dtype=float), tau, weights)
        )


def push_sample(buffer: HorizonBuffer, model: UvmsModel, state: GeneralizedState,
                tau: GeneralizedForce, tau_mv: Array, timestamp: float) -> HorizonBuffer:
    """Regress one sample and append it: measurement rows are [tau_v + tau_mv; tau_m]."""
    from .regressor import system_regressor
    from .spatial import SpatialForce

    if isinstance(tau_mv, SpatialForce):
        tau_mv = np.concatenate([tau_mv.force, tau_mv.moment])
    tau_mv = np.asarray(tau_mv, dtype=float).reshape(6)
    Y = system_regressor(model, state).assembled
    measurement = np.concatenate([tau.tau_v + tau_mv, tau.tau_m])
    buffer.push(timestamp, Y, measurement)
    return buffer


@dataclass
class EstimateState:
    """Posterior carried between updates."""

    pi: ParameterVector
    sigma: Array
    warm: dict | None = None
    stage: int = 0
    last_increment: Array | None = None
    status: str = "init"
    objective: float = np.nan
    solve_iterations: int = 0

    def __post_init__(self):
        if self.last_increment is None:
            self.last_increment = np.zeros(len(self.pi))


def _psd_basis(n_links: int) -> list[np.ndarray]:
    """Raw basis tensors mapping the parameter vector to each constrained matrix."""
    dim = n_parameters(n_links)
    basis6 = np.zeros((dim, 6, 6))
    eye10 = np.eye(10)
    for j in range(10):
        basis6[j] = build_vehicle_inertia(eye10[j])
    tensors = [basis6]
    eye12 = np.eye(N_PER_LINK)
    for j in range(n_links):
        basis4 = np.zeros((dim, 4, 4))
        sl = link_slice(j, n_links)
        for k in range(10):
            basis4[sl.start + k] = build_pseudo_inertia(eye12[k]).matrix
        tensors.append(basis4)
    return tensors


def _preconditioned_psd_blocks(tensors: list[np.ndarray], pi_prev: Array,
                               margin: float) -> list[PsdBlock]:
    """Congruence-preconditioned cone blocks.

    Each constraint S(pi) >= margin I is rewritten as T (S(pi) - margin I) T
    >= 0 with T chosen so the matrix at the previous (feasible) estimate is
    close to the identity. The transform is exact and keeps every eigen
    direction of the cone equally visible to the splitting, which is what
    makes the solve converge at physical parameter scales.
    """
    blocks = []
    for basis in tensors:
        k = basis.shape[1]
        S0 = np.tensordot(pi_prev, basis, axes=(0, 0))
        vals, vecs = np.linalg.eigh(0.5 * (S0 + S0.T))
        floor = max(vals.max(), 10.0 * margin, 1e-9) * 1e-3
        T = (vecs / np.sqrt(np.maximum(vals, floor))) @ vecs.T
        pre = np.einsum("ab,ibc,cd->iad", T, basis, T, optimize=True)
        const = -margin * (T @ T)
        blocks.append(PsdBlock.from_basis(pre, const=const, margin=0.0))
    return blocks


def _sign_bounds(n_links: int, bounds: WeightBounds) -> tuple[Array, Array]:
    dim = n_parameters(n_links)
    lower = np.full(dim, -np.inf)
    upper = np.full(dim, np.inf)
    upper[10:22] = 0.0  # drag coefficients stored nonpositive
    for j in range(n_links):
        sl = link_slice(j, n_links)
        lower[sl.start + 10] = 0.0
        lower[sl.start + 11] = 0.0
    lower[IDX_W] = bounds.w_min
    upper[IDX_W] = bounds.w_max
    return lower, upper


class _ProblemTemplate:
    """Constant problem structure for one chain length.

    The cone preconditioners depend on the current estimate but only through
    its rough magnitude, so they are refreshed on a stride instead of every
    step.
    """

    PSD_REFRESH = 20

    def __init__(self, n_links: int, config: EstimatorConfig):
        self.n_links = n_links
        self.dim = n_parameters(n_links)
        self.psd_tensors = _psd_basis(n_links)
        self.lower, self.upper = _sign_bounds(n_links, config.w_bounds)
        self._psd_cache: list[PsdBlock] | None = None
        self._psd_age = 0

    def psd_blocks(self, pi_prev: Array, margin: float) -> list[PsdBlock]:
        if self._psd_cache is None or self._psd_age >= self.PSD_REFRESH:
            self._psd_cache = _preconditioned_psd_blocks(self.psd_tensors, pi_prev, margin)
            self._psd_age = 0
        self._psd_age += 1
        return self._psd_cache


def _assemble(template: _ProblemTemplate, config: EstimatorConfig,
              pi_prev: Array, buffer: HorizonBuffer,
              pmask: Array, rmask: Array) -> tuple[ConicProblem, Array]:
    """Scaled-coordinate problem; returns (problem, scale vector)."""
    dim = template.dim
    s = np.maximum(np.abs(pi_prev), config.scale_floor)

    huber_blocks: list[HuberBlock] = []
    stacked_rows = []
    stacked_off = []
    for entry in buffer.entries:
        w = entry.row_weights[rmask]
        rows = (entry.Y[rmask] * w[:, None]) * s[None, :]
        off = entry.tau[rmask] * w
        if config.huber_scope == "block":
            huber_blocks.append(HuberBlock(rows, off, config.rho))
        elif config.huber_scope == "element":
            for r in range(rows.shape[0]):
                huber_blocks.append(HuberBlock(rows[r:r + 1], off[r:r + 1], config.rho))
        else:
            stacked_rows.append(rows)
            stacked_off.append(off)
    if config.huber_scope == "full" and stacked_rows:
        huber_blocks.append(
            HuberBlock(np.vstack(stacked_rows), np.concatenate(stacked_off), config.rho)
        )

    frozen = np.flatnonzero(~pmask)
    if frozen.size:
        a_eq = np.zeros((frozen.size, dim))
        a_eq[np.arange(frozen.size), frozen] = 1.0
        b_eq = pi_prev[frozen] / s[frozen]
    else:
        a_eq = None
        b_eq = None

    psd_blocks = [
        PsdBlock(b.size, b.map * s[None, :], b.const, b.margin)
        for b in template.psd_blocks(pi_prev, config.psd_margin)
    ]
    problem = ConicProblem(
        dim=dim,
        q_diag=np.full(dim, config.q0),
        center=pi_prev / s,
        huber_blocks=huber_blocks,
        a_eq=a_eq,
        b_eq=b_eq,
        lower=template.lower / s,
        upper=template.upper / s,
        psd_blocks=psd_blocks,
    )
    return problem, s


def step(state: EstimateState, buffer: HorizonBuffer, config: EstimatorConfig,
         template: _ProblemTemplate | None = None) -> EstimateState:
    """One horizon solve; holds the previous feasible estimate on failure."""
    if len(buffer) == 0:
        raise ValueError("horizon buffer is empty")
    n_links = state.pi.n_links
    if template is None:
        template = _ProblemTemplate(n_links, config)
    t = buffer.last_timestamp
    pmask, rmask = apply_stage_schedule(config, t, n_links)
    stage = (
        config.stage_schedule.stage_index(t)
        if config.stage_schedule is not None
        else 0
    )

    pi_prev = state.pi.values
    problem, s = _assemble(template, config, pi_prev, buffer, pmask, rmask)
    solution = solve(problem, warm=state.warm, tol=config.solver_tol,
                     max_iters=config.solver_max_iters)

    held = solution.status != OPTIMAL
    pi_new = pi_prev.copy()
    status = solution.status
    if not held:
        candidate = solution.x * s
        candidate[~pmask] = pi_prev[~pmask]
        pi_cand = ParameterVector(candidate, n_links)
        if feasibility_report(pi_cand, config.w_bounds) :
            repaired = project_to_feasible(pi_cand, config.w_bounds, config.psd_margin)
            values = repaired.values.copy()
            values[~pmask] = pi_prev[~pmask]
            pi_cand = ParameterVector(values, n_links)
            if feasibility_report(pi_cand, config.w_bounds):
                held = True
                status = "held:infeasible_iterate"
        if not held:
            pi_new = pi_cand.values
    else:
        status = f"held:{solution.status}"

    w_t = pi_new - pi_prev
    return EstimateState(
        pi=ParameterVector(pi_new, n_links),
        sigma=state.sigma,
        warm=solution.warm_state,
        stage=stage,
        last_increment=w_t,
        status=status,
        objective=solution.objective,
        solve_iterations=solution.iterations,
    )


@dataclass
class TraceRow:
    t: float
    pi: Array
    stage: int
    solve_time_s: float
    status: str
    objective: float
    sigma_diag_sqrt: Array


class OnlineEstimator:
    """Composed pipeline: buffer, horizon solves, and increment covariance.

    `skeleton` provides the chain kinematics used to rebuild a model from the
    running estimate when the coupling wrench is not measured.
    """

    def __init__(self, skeleton: UvmsModel, initial: ParameterVector,
                 config: EstimatorConfig):
        if initial.n_links != skeleton.n_links:
            raise ValueError("initial estimate does not match the chain length")
        self.skeleton = skeleton
        self.config = config
        # interior start: a boundary-projected guess would make the cones
        # active from the first step and slow everything that follows
        feasible = project_to_feasible(initial, config.w_bounds, config.psd_margin,
                                       eig_floor_rel=1e-3)
        self.template = _ProblemTemplate(skeleton.n_links, config)
        self.buffer = HorizonBuffer(config.horizon, 6 + skeleton.n_links, config.rms_beta)
        self.cov = CovarianceState.initial(len(initial), alpha=config.alpha)
        self.state = EstimateState(
            pi=feasible,
            sigma=param_covariance(self.cov, feasible.values),
        )
        self.trace: list[TraceRow] = []
        self.diagnostics: list[str] = []

    def estimated_tau_mv(self, state: GeneralizedState) -> Array:
        model = model_from_parameters(self.skeleton, self.state.pi)
        _, tau_mv = inverse_dynamics(model, state)
        return tau_mv

    def update(self, t: float, state: GeneralizedState, tau: GeneralizedForce,
               tau_mv: Array | None = None) -> EstimateState:
        from .regressor import system_regressor

        if tau_mv is None:
            tau_mv = self.estimated_tau_mv(state)
        Y = system_regressor(self.skeleton, state).assembled
        measurement = np.concatenate([tau.tau_v + np.asarray(tau_mv), tau.tau_m])
        try:
            self.buffer.push(t, Y, measurement)
        except ValueError as exc:
            self.diagnostics.append(str(exc))
            return self.state

        t0 = time.perf_counter()
        pi_prev = self.state.pi.values
        new_state = step(self.state, self.buffer, self.config, self.template)
        solve_time = time.perf_counter() - t0

        self.cov = update_covariance(self.cov, new_state.last_increment, pi_prev)
        new_state.sigma = param_covariance(self.cov, pi_prev)
        self.state = new_state
        self.trace.append(
            TraceRow(
                t=t,
                pi=new_state.pi.values.copy(),
                stage=new_state.stage,
                solve_time_s=solve_time,
                status=new_state.status,
                objective=new_state.objective,
                sigma_diag_sqrt=np.sqrt(np.clip(np.diag(new_state.sigma), 0.0, None)),
            )
        )
        return self.state
