"""Uncertainty from parameter increments and its propagation to predictions.

The estimator's step-to-step increments, normalized by the previous parameter
magnitudes, feed an exponentially weighted mean/covariance. Mapping back
through the scales and the effective memory length of the exponential window
gives a parameter covariance, from which confidence intervals and first-order
prediction covariances follow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .spatial import Array

__all__ = [
    "CovarianceState",
    "update_covariance",
    "param_covariance",
    "confidence_interval",
    "propagate_torque_cov",
    "propagate_accel_cov",
    "estimate_noise_covariance",
]


@dataclass(frozen=True)
class CovarianceState:
    """Exponentially weighted statistics of normalized increments."""

    mean_w: Array
    cov_w: Array
    alpha: float
    epsilon: float = 1e-6
    ridge: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        object.__setattr__(self, "mean_w", np.asarray(self.mean_w, dtype=float))
        object.__setattr__(self, "cov_w", np.asarray(self.cov_w, dtype=float))

    @classmethod
    def initial(cls, dim: int, alpha: float = 0.05, epsilon: float = 1e-6,
                ridge: float = 1e-9) -> "CovarianceState":
        return cls(np.zeros(dim), np.zeros((dim, dim)), alpha, epsilon, ridge)

    def scales(self, pi_prev: Array) -> Array:
        return np.maximum(np.abs(np.asarray(pi_prev, dtype=float)), self.epsilon)


def update_covariance(cs: CovarianceState, w_t: Array, pi_prev: Array) -> CovarianceState:
    """Fold one increment into the exponentially weighted statistics.

    The covariance recursion uses the mixed outer product
    (w - mean_old)(w - mean_new)', which equals (1 - alpha) times the
    symmetric outer product of (w - mean_old); the symmetric form is used so
    the stored matrix stays exactly symmetric PSD.
    """
    a = cs.alpha
    s = cs.scales(pi_prev)
    w_tilde = np.asarray(w_t, dtype=float) / s
    d = w_tilde - cs.mean_w
    mean_new = cs.mean_w + a * d
    cov_new = (1.0 - a) * cs.cov_w + a * (1.0 - a) * np.outer(d, d)
    cov_new[np.diag_indices_from(cov_new)] += cs.ridge
    return CovarianceState(mean_new, cov_new, a, cs.epsilon, cs.ridge)


def param_covariance(cs: CovarianceState, pi_prev: Array) -> Array:
    """Parameter covariance: rescale the normalized increment covariance and
    stretch by the effective window length L = 2 / alpha - 1."""
    s = cs.scales(pi_prev)
    L = 2.0 / cs.alpha - 1.0
    return L * (cs.cov_w * s[None, :] * s[:, None])


def confidence_interval(pi: Array, sigma: Array, level: float = 0.95) -> tuple[Array, Array]:
    """Per-parameter normal interval at the given two-sided level."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    pi = np.asarray(pi, dtype=float)
    z = float(ndtri(0.5 * (1.0 + level)))
    half = z * np.sqrt(np.clip(np.diag(np.asarray(sigma, dtype=float)), 0.0, None))
    return pi - half, pi + half


def propagate_torque_cov(Y: Array, sigma_pi: Array, sigma_noise: Array | None = None) -> Array:
    """Predictive torque covariance Y Sigma Y' plus the diagonal noise part."""
    Y = np.asarray(Y, dtype=float)
    out = Y @ np.asarray(sigma_pi, dtype=float) @ Y.T
    if sigma_noise is not None:
        out = out + np.asarray(sigma_noise, dtype=float)
    return out


def propagate_accel_cov(model, state, tau, pi, sigma_pi, rel_step: float = 1e-6,
                        epsilon: float = 1e-6) -> Array:
    """First-order acceleration covariance through the forward dynamics.

    The Jacobian of the acceleration with respect to the parameters is taken
    by central differences with per-parameter steps proportional to the
    parameter scale.
    """
    from .dynamics import forward_dynamics
    from .model import ParameterVector, model_from_parameters

    values = pi.values if isinstance(pi, ParameterVector) else np.asarray(pi, dtype=float)
    n_links = model.n_links
    scales = np.maximum(np.abs(values), epsilon)
    dim = values.size
    J = np.zeros((6 + n_links, dim))
    for i in range(dim):
        h = rel_step * scales[i]
        plus = values.copy()
        plus[i] += h
        minus = values.copy()
        minus[i] -= h
        a_plus = forward_dynamics(
            model_from_parameters(model, ParameterVector(plus, n_links)), state, tau
        )
        a_minus = forward_dynamics(
            model_from_parameters(model, ParameterVector(minus, n_links)), state, tau
        )
        J[:, i] = (a_plus - a_minus) / (2.0 * h)
    return J @ np.asarray(sigma_pi, dtype=float) @ J.T


def estimate_noise_covariance(residuals: Array, window: int | None = None) -> Array:
    """Diagonal noise covariance from trailing residual statistics.

    `residuals` is (samples, channels); `window` limits the estimate to the
    most recent rows.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 2:
        raise ValueError("residuals must be (samples, channels)")
    if window is not None:
        r = r[-window:]
    if r.shape[0] < 2:
        return np.zeros((r.shape[1], r.shape[1]))
    return np.diag(r.var(axis=0))
