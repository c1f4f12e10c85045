"""Kalman-Bucy filter recursions for the partially observed risk premium.

run_filter is the innovation-form Euler scheme an observer would actually run
on price data: the estimate feeds back into its own innovation. variance_path
integrates the deterministic conditional-variance equation. The discrete
correlated-noise Kalman recursion is an independent oracle for both: the state
noise (zeta dW0) and the observation noise (dW0) share the same Brownian
motion, so the plain uncorrelated predict/update recursion would converge to
the wrong limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BlowUpError, GridMismatchError, NumericalError
from .model import TimeGrid
from .equilibrium import ThetaCoefficients

__all__ = ["run_filter", "variance_path", "discrete_kalman_oracle", "KalmanResult"]


def _check_obs(observation_increments, grid: TimeGrid, d0: int):
    obs = np.asarray(observation_increments, dtype=np.float64)
    if obs.shape[-2] != grid.n_steps or obs.shape[-1] != d0:
        raise GridMismatchError(
            f"observation increments shaped {obs.shape} do not align with "
            f"n_steps={grid.n_steps}, d0={d0}")
    return obs


def run_filter(coeffs: ThetaCoefficients, observation_increments, grid: TimeGrid) -> np.ndarray:
    """Euler recursion of the conditional-mean SDE on observation increments.

    theta_hat_{k+1} = theta_hat_k + (alpha_k theta_hat_k + beta_k) dt
                      + (zeta_k + varrho_k)(dobs_k - theta_hat_k dt),
    started from the prior mean m. ``observation_increments`` has shape
    (n_steps, d0) or (batch..., n_steps, d0); the output appends the node axis
    (..., n_steps+1, d0).
    """
    if coeffs.grid.n_steps != grid.n_steps or coeffs.grid.horizon != grid.horizon:
        raise GridMismatchError("coefficient paths and grid are misaligned")
    d0 = coeffs.m.shape[0]
    obs = _check_obs(observation_increments, grid, d0)
    dt = grid.dt
    alpha, beta, gain = coeffs.alpha, coeffs.beta, coeffs.diffusion_hat

    out = np.empty(obs.shape[:-2] + (grid.n_steps + 1, d0))
    out[..., 0, :] = coeffs.m
    th = np.broadcast_to(coeffs.m, obs.shape[:-2] + (d0,)).copy()
    for k in range(grid.n_steps):
        drift = np.einsum("ij,...j->...i", alpha[k], th) + beta[k]
        innov = obs[..., k, :] - th * dt
        th = th + drift * dt + np.einsum("ij,...j->...i", gain[k], innov)
        out[..., k + 1, :] = th
    return out


def variance_path(alpha_half, zeta_half, eta_half, v, grid: TimeGrid, *,
                  blowup_bound: float = 1e8) -> np.ndarray:
    """Forward RK4 solution of the conditional-variance equation.

    drho/dt = eta eta^T + alpha rho + rho alpha^T - zeta rho - rho zeta - rho^2,
    rho(0) = v. Coefficient paths are sampled on the half grid (2n+1 points)
    so the RK4 stages see exact stage-time data. Deterministic: observations
    never enter.
    """
    alpha_half = np.ascontiguousarray(alpha_half, dtype=np.float64)
    zeta_half = np.ascontiguousarray(zeta_half, dtype=np.float64)
    eta_half = np.asarray(eta_half, dtype=np.float64)
    nh = 2 * grid.n_steps + 1
    if alpha_half.shape[0] != nh or zeta_half.shape[0] != nh or eta_half.shape[0] != nh:
        raise GridMismatchError(f"half-grid paths must have {nh} points")
    etaeta = np.ascontiguousarray(eta_half @ np.swapaxes(eta_half, -1, -2))
    v = np.ascontiguousarray(np.atleast_2d(np.asarray(v, dtype=np.float64)))
    out, status, blow_index = _kernels.variance_forward(
        alpha_half, zeta_half, etaeta, v, grid.dt, float(blowup_bound))
    if status == _kernels.STATUS_BLOWUP:
        raise BlowUpError(f"variance equation exceeded norm bound near t={blow_index * grid.dt:.6g}")
    return out


@dataclass
class KalmanResult:
    """Output of the discrete correlated-noise Kalman oracle."""

    theta_hat: np.ndarray  # (..., n_steps+1, d0) one-step predictors, node-aligned
    variance: np.ndarray  # (n_steps+1, d0, d0) predictor covariances
    n_clamped: int  # eigenvalue clamps applied during PSD repair


def discrete_kalman_oracle(alpha, beta, zeta, eta, observations, grid: TimeGrid,
                           m, v) -> KalmanResult:
    """Discrete-time Kalman filter for the Euler-discretized state space model.

    State:       theta_{k+1} = (I + alpha_k dt) theta_k + beta_k dt + w_k,
                 w_k = zeta_k dW0_k + eta_k dB0_k,  Q_k = (zeta zeta^T + eta eta^T) dt
    Observation: dobs_k = theta_k dt + dW0_k,       R_k = dt I
    Correlation: E[w_k dW0_k^T] = zeta_k dt.

    Uses the one-step-ahead predictor recursion with gain
    K = (F P H^T + S)(H P H^T + R)^{-1}, which handles the shared Brownian
    motion exactly; the output at node k+1 is E[theta_{k+1} | dobs_0..dobs_k],
    matching what the continuous-time filter conditions on. Covariances are
    path-independent and repaired to PSD (symmetrize + eigenvalue clamp at 0)
    against finite-dt round-off.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    m = np.atleast_1d(np.asarray(m, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    d0 = m.shape[0]
    n = grid.n_steps
    obs = _check_obs(observations, grid, d0)
    for name, arr in (("alpha", alpha), ("beta", beta), ("zeta", zeta), ("eta", eta)):
        if arr.shape[0] < n:
            raise GridMismatchError(f"{name} path too short for the grid")
    dt = grid.dt
    eye = np.eye(d0)

    # gains and covariances are deterministic: precompute once, then apply to
    # any batch of observation paths
    gains = np.empty((n, d0, d0))
    trans = np.empty((n, d0, d0))
    variance = np.empty((n + 1, d0, d0))
    variance[0] = v
    p = v.copy()
    n_clamped = 0
    for k in range(n):
        f = eye + alpha[k] * dt
        q = (zeta[k] @ zeta[k].T + eta[k] @ eta[k].T) * dt
        s_corr = zeta[k] * dt
        sig = p * (dt * dt) + dt * eye  # H P H^T + R with H = dt I
        try:
            gain = np.linalg.solve(sig.T, (f @ p * dt + s_corr).T).T
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"innovation covariance singular at node {k}; dt may be too large") from None
        p = f @ p @ f.T + q - gain @ sig @ gain.T
        p = 0.5 * (p + p.T)
        eigs, u = np.linalg.eigh(p)
        if eigs.min() < 0.0:
            n_clamped += 1
            p = (u * np.clip(eigs, 0.0, None)) @ u.T
        gains[k] = gain
        trans[k] = f
        variance[k + 1] = p

    out = np.empty(obs.shape[:-2] + (n + 1, d0))
    out[..., 0, :] = m
    x = np.broadcast_to(m, obs.shape[:-2] + (d0,)).copy()
    for k in range(n):
        innov = obs[..., k, :] - x * dt
        x = (np.einsum("ij,...j->...i", trans[k], x) + beta[k] * dt
             + np.einsum("ij,...j->...i", gains[k], innov))
        out[..., k + 1, :] = x
    return KalmanResult(theta_hat=out, variance=variance, n_clamped=n_clamped)
