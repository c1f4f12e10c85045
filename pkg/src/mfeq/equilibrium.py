"""Semi-analytic equilibrium objects built on top of the coefficient ODEs.

Given a solved coefficient system this module evaluates the value process and
its martingale loadings (Y, Z0, Zi), the equilibrium risk premium estimate
theta_hat, the optimal trading strategies, and the endogenous coefficient set
(m, alpha, beta, zeta, varrho) that makes the unobserved risk premium
consistent with its own filter. A Gaussian log-moment closed form for the
separable (no cross-term) case serves as an independent oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BlowUpError, NumericalError, SingularCoefficientError, ValidationError
from .model import AgentPopulation, ModelParams, ThetaPrior, TimeGrid
from .riccati import DEFAULT_BLOWUP_BOUND, RiccatiSolution, _hermite_mid, _interleave

__all__ = [
    "ThetaCoefficients",
    "yz_at",
    "yz_along",
    "conditional_z0",
    "equilibrium_theta_hat",
    "theta_hat_affine",
    "optimal_strategy",
    "strategy_response",
    "build_theta_coefficients",
    "driver_single_agent",
    "driver_mean_field",
    "separable_y0_oracle",
    "separable_yi_oracle",
    "gaussian_quadratic_log_moment",
]


@dataclass
class ThetaCoefficients:
    """Endogenous coefficients of the risk-premium dynamics and its filter.

    ``*_half`` arrays are sampled on the half grid (2n+1 points, even entries
    are nodes); node views are exposed under plain names. ``diffusion_hat``
    (= zeta + varrho) is stored directly as -gamma Sigma0^T A00(t) Sigma0, the
    filter gain actually used downstream; ``varrho`` is derived from it, with
    the initial node pinned to the prior variance v.
    """

    grid: TimeGrid
    m: np.ndarray  # (d0,)
    alpha_half: np.ndarray  # (2n+1, d0, d0)
    beta: np.ndarray  # (n+1, d0)
    zeta_half: np.ndarray  # (2n+1, d0, d0)
    varrho_half: np.ndarray  # (2n+1, d0, d0)
    diffusion_hat_half: np.ndarray  # (2n+1, d0, d0)
    eta_path: np.ndarray | None = None  # (n+1, d0, k_noise)

    @property
    def alpha(self):
        return self.alpha_half[::2]

    @property
    def zeta(self):
        return self.zeta_half[::2]

    @property
    def varrho(self):
        return self.varrho_half[::2]

    @property
    def diffusion_hat(self):
        return self.diffusion_hat_half[::2]

    @classmethod
    def from_constant(cls, grid: TimeGrid, m, alpha, beta, zeta, varrho, eta=None):
        """Constant-coefficient set (testing and degenerate configurations)."""
        m = np.atleast_1d(np.asarray(m, dtype=np.float64))
        d0 = m.shape[0]
        nh = 2 * grid.n_steps + 1

        def tile(mat):
            mat = np.asarray(mat, dtype=np.float64).reshape(d0, d0)
            return np.broadcast_to(mat, (nh, d0, d0)).copy()

        alpha_half = tile(alpha)
        zeta_half = tile(zeta)
        varrho_half = tile(varrho)
        beta_nodes = np.broadcast_to(
            np.atleast_1d(np.asarray(beta, dtype=np.float64)), (grid.n_steps + 1, d0)
        ).copy()
        if eta is None:
            eta_path = np.zeros((grid.n_steps + 1, d0, 1))
        else:
            eta = np.asarray(eta, dtype=np.float64)
            eta_path = np.broadcast_to(eta, (grid.n_steps + 1,) + eta.shape).copy()
        return cls(
            grid=grid, m=m, alpha_half=alpha_half, beta=beta_nodes,
            zeta_half=zeta_half, varrho_half=varrho_half,
            diffusion_hat_half=zeta_half + varrho_half, eta_path=eta_path,
        )


def yz_at(sol: RiccatiSolution, x0, xi, t_index: int):
    """Value process and its loadings at one grid node.

    Returns (Y, Z0, Zi): Y the quadratic form in (x0, xi); Z0 and Zi the
    loadings on the innovation and idiosyncratic Brownian motions (row
    vectors, returned as trailing-axis arrays). Broadcasts over leading axes
    of x0 and xi.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    p = sol.params
    if x0.shape[-1] != p.d0 or xi.shape[-1] != p.d:
        raise ValidationError(f"state dims {x0.shape[-1]}/{xi.shape[-1]} do not match model ({p.d0}/{p.d})")
    a00 = sol.a00[t_index]
    a11 = sol.a11[t_index]
    a10 = sol.a10[t_index]
    b0 = sol.b0[t_index]
    b1 = sol.b1[t_index]
    c = sol.c[t_index]
    y = (0.5 * np.einsum("...i,ij,...j->...", x0, a00, x0)
         + 0.5 * np.einsum("...i,ij,...j->...", xi, a11, xi)
         + np.einsum("...i,ij,...j->...", xi, a10, x0)
         + x0 @ b0 + xi @ b1 + c)
    z0 = np.einsum("ji,...j->...i", sol.params.sigma0,
                   np.einsum("ij,...j->...i", a00, x0)
                   + np.einsum("ji,...j->...i", a10, xi) + b0)
    zi = np.einsum("ji,...j->...i", sol.params.sigma_idio,
                   np.einsum("ij,...j->...i", a10, x0)
                   + np.einsum("ij,...j->...i", a11, xi) + b1)
    return y, z0, zi


def yz_along(sol: RiccatiSolution, x0_path, xi_path):
    """Vectorized yz_at over whole paths: inputs (..., n+1, d0)/(..., n+1, d)."""
    x0 = np.asarray(x0_path, dtype=np.float64)
    xi = np.asarray(xi_path, dtype=np.float64)
    a00, a11, a10 = sol.a00, sol.a11, sol.a10
    b0, b1, c = sol.b0, sol.b1, sol.c
    y = (0.5 * np.einsum("...ki,kij,...kj->...k", x0, a00, x0)
         + 0.5 * np.einsum("...ki,kij,...kj->...k", xi, a11, xi)
         + np.einsum("...ki,kij,...kj->...k", xi, a10, x0)
         + np.einsum("...ki,ki->...k", x0, b0)
         + np.einsum("...ki,ki->...k", xi, b1) + c)
    z0 = np.einsum("ji,...kj->...ki", sol.params.sigma0,
                   np.einsum("kij,...kj->...ki", a00, x0)
                   + np.einsum("kji,...kj->...ki", a10, xi) + b0)
    zi = np.einsum("ji,...kj->...ki", sol.params.sigma_idio,
                   np.einsum("kij,...kj->...ki", a10, x0)
                   + np.einsum("kij,...kj->...ki", a11, xi) + b1)
    return y, z0, zi


def conditional_z0(sol: RiccatiSolution, x0, t_index: int):
    """E[Z0 | common information]: the loading with xi replaced by its mean."""
    x0 = np.asarray(x0, dtype=np.float64)
    a00 = sol.a00[t_index]
    a10 = sol.a10[t_index]
    b0 = sol.b0[t_index]
    mu = sol.mu1[t_index]
    return np.einsum("ji,...j->...i", sol.params.sigma0,
                     np.einsum("ij,...j->...i", a00, x0) + a10.T @ mu + b0)


def theta_hat_affine(sol: RiccatiSolution):
    """Node-wise affine map theta_hat_k = G_k x0_k + g_k.

    G_k = -gamma Sigma0^T A00(t_k), g_k = -gamma Sigma0^T (A10^T mu1 + B0)(t_k).
    """
    p = sol.params
    s0t = p.sigma0.T
    gmat = -p.gamma * np.einsum("ab,kbc->kac", s0t, sol.a00)
    gvec = -p.gamma * np.einsum("ab,kb->ka",
                                s0t,
                                np.einsum("kji,kj->ki", sol.a10, sol.mu1) + sol.b0)
    return gmat, gvec


def equilibrium_theta_hat(sol: RiccatiSolution, x0_path):
    """Equilibrium risk-premium estimate along a common-factor path.

    theta_hat_t = -gamma Sigma0^T (A00 x0 + A10^T mu1 + B0); accepts
    (..., n+1, d0) paths and returns the same leading shape.
    """
    x0 = np.asarray(x0_path, dtype=np.float64)
    gmat, gvec = theta_hat_affine(sol)
    return np.einsum("kij,...kj->...ki", gmat, x0) + gvec


def strategy_response(sol: RiccatiSolution, vol=None):
    """Per-node maps behind the optimal strategy.

    Returns (r, pi_map) with r_k = Sigma0^T A10(t_k)^T so that the reduced-form
    strategy is p*_k = r_k (xi_k - mu1_k) (as a row vector), and
    pi_map_k = (sigma_k^T)^{-1} r_k giving the stock positions pi*_k.
    """
    p = sol.params
    vol = vol if vol is not None else p.vol
    r = np.einsum("ab,kcb->kac", p.sigma0.T, sol.a10)  # (n+1, d0, d)
    sig = vol.at_times(sol.grid.times())
    pi_map = np.empty_like(r)
    for k in range(r.shape[0]):
        try:
            pi_map[k] = np.linalg.solve(sig[k].T, r[k])
        except np.linalg.LinAlgError:
            raise SingularCoefficientError(f"sigma_t singular at node {k}") from None
    return r, pi_map


def optimal_strategy(sol: RiccatiSolution, xi_path, vol, t_index: int):
    """Optimal controls at one node from the idiosyncratic state alone.

    p* = Z0 + theta_hat^T / gamma collapses to Sigma0^T A10^T (xi - mu1): the
    common-factor terms cancel, so only xi enters. Returns (p_star, pi_star)
    with pi_star = (sigma_t^T)^{-1} p_star^T. Broadcasts over leading axes of
    the path array (time is axis -2).
    """
    xi_path = np.asarray(xi_path, dtype=np.float64)
    xi = xi_path[..., t_index, :]
    p = sol.params
    dev = xi - sol.mu1[t_index]
    r = p.sigma0.T @ sol.a10[t_index].T  # (d0, d)
    p_star = np.einsum("ij,...j->...i", r, dev)
    sig = (vol if vol is not None else p.vol)(sol.grid.times()[t_index])
    try:
        inv_sig_t = np.linalg.inv(sig.T)
    except np.linalg.LinAlgError:
        raise SingularCoefficientError(f"sigma_t singular at node {t_index}") from None
    pi_star = np.einsum("ij,...j->...i", inv_sig_t, p_star)
    return p_star, pi_star


def driver_single_agent(z0, zi, theta_hat, gamma):
    """BSDE driver of the single-agent problem: -Z0 theta_hat - |theta_hat|^2/(2 gamma) + gamma/2 |Zi|^2."""
    z0 = np.asarray(z0)
    zi = np.asarray(zi)
    th = np.asarray(theta_hat)
    return (-np.einsum("...i,...i->...", z0, th)
            - np.einsum("...i,...i->...", th, th) / (2.0 * gamma)
            + 0.5 * gamma * np.einsum("...i,...i->...", zi, zi))


def driver_mean_field(z0, z0_bar, zi, gamma):
    """Mean-field BSDE driver: gamma Z0 E[Z0]^T - gamma/2 |E[Z0]|^2 + gamma/2 |Zi|^2."""
    z0 = np.asarray(z0)
    zb = np.asarray(z0_bar)
    zi = np.asarray(zi)
    return (gamma * np.einsum("...i,...i->...", z0, zb)
            - 0.5 * gamma * np.einsum("...i,...i->...", zb, zb)
            + 0.5 * gamma * np.einsum("...i,...i->...", zi, zi))


def build_theta_coefficients(sol: RiccatiSolution, params: ModelParams, pop: AgentPopulation,
                             prior: ThetaPrior, grid: TimeGrid | None = None, *,
                             blowup_bound: float = DEFAULT_BLOWUP_BOUND) -> ThetaCoefficients:
    """Construct the endogenous coefficient set of the risk-premium dynamics.

    m and the alpha/beta paths are read off the stored coefficient paths and
    their stored right-hand-side derivatives (no numerical differentiation);
    zeta is integrated forward by RK4 from zeta_0 = -gamma Sigma0^T A00(0)
    Sigma0 - v; varrho follows from the algebraic identity
    varrho = -gamma Sigma0^T A00 Sigma0 - zeta with varrho_0 pinned to v.
    """
    grid = grid if grid is not None else sol.grid
    sol.require_grid(grid)
    params.require_invertible_sigma0()
    d0 = params.d0
    if prior.v.shape != (d0, d0):
        raise ValidationError("prior variance v inconsistent with model dims")
    s0 = params.sigma0
    s0t = s0.T
    inv_s0t = np.linalg.inv(s0t)

    a00h, da00h, a10h = sol.a00_half, sol.da00_half, sol.a10_half
    dets = np.abs(np.linalg.det(a00h))
    if dets.min() < 1e-12:
        k_bad = int(np.argmin(dets))
        raise SingularCoefficientError(
            f"A00(t) is numerically singular near t={k_bad * grid.dt / 2.0:.6g}; "
            "the filter construction needs A00 invertible on [0, T]"
        )
    # alpha = Sigma0^T (dA00 A00^{-1}) (Sigma0^T)^{-1} - K0 I; both A00 and dA00
    # are symmetric, so dA00 A00^{-1} = (A00^{-1} dA00)^T = solve(A00, dA00)^T
    w = np.swapaxes(np.linalg.solve(a00h, da00h), -1, -2)
    alpha_half = np.einsum("ab,kbc,cd->kad", s0t, w, inv_s0t) - params.k0 * np.eye(d0)

    # beta from node values and stored node derivatives
    a10n, da10n, b0n, db0n = sol.a10, sol.da10, sol.b0, sol.db0
    a00n = sol.a00
    mu, dmu = sol.mu1, sol.dmu1
    u = np.einsum("kji,kj->ki", a10n, mu) + b0n
    term1 = params.gamma * np.einsum("kij,kj->ki", alpha_half[::2],
                                     np.einsum("ab,kb->ka", s0t, u))
    inner = (params.k0 * np.einsum("kij,j->ki", a00n, params.m0_vec)
             + np.einsum("kji,kj->ki", da10n, mu)
             + np.einsum("kji,kj->ki", a10n, dmu)
             + db0n)
    beta = term1 - params.gamma * np.einsum("ab,kb->ka", s0t, inner)

    m = -params.gamma * s0t @ (sol.a00[0] @ params.x0_init
                               + sol.a10[0].T @ pop.x0i_mean + sol.b0[0])

    # forward Riccati for zeta with exact stage data on the half grid
    eta_half = prior.eta.at_times(grid.half_times())
    etaeta_half = eta_half @ np.swapaxes(eta_half, -1, -2)
    j = np.einsum("kja,jl,klb->kab", a10h, params.sigma_idio @ params.sigma_idio.T, a10h)
    forcing_half = -etaeta_half - params.gamma**2 * np.einsum("ab,kbc,cd->kad", s0t, j, s0)

    diffusion_hat_half = -params.gamma * np.einsum("ab,kbc,cd->kad", s0t, a00h, s0)
    zeta0 = diffusion_hat_half[0] - prior.v
    zeta_nodes, dzeta_nodes, status, blow_index = _kernels.symmetric_riccati_forward(
        np.ascontiguousarray(alpha_half), np.ascontiguousarray(forcing_half),
        np.ascontiguousarray(zeta0), grid.dt, float(blowup_bound))
    if status == _kernels.STATUS_BLOWUP:
        raise BlowUpError(f"zeta equation exceeded norm bound near t={blow_index * grid.dt:.6g}")
    zeta_mid = _hermite_mid(zeta_nodes, dzeta_nodes, grid.dt)
    zeta_mid = 0.5 * (zeta_mid + np.swapaxes(zeta_mid, -1, -2))
    zeta_half = _interleave(zeta_nodes, zeta_mid)

    varrho_half = diffusion_hat_half - zeta_half
    varrho_half[0] = prior.v  # exact initial condition of the variance equation

    eig_min = np.linalg.eigvalsh(varrho_half[::2]).min()
    if eig_min < -1e-10:
        warnings.warn(
            f"constructed filter variance varrho is not PSD (min eigenvalue {eig_min:.3e}); "
            "the scenario may violate the model's well-posedness assumptions",
            RuntimeWarning, stacklevel=2)

    return ThetaCoefficients(
        grid=grid, m=m, alpha_half=alpha_half, beta=beta, zeta_half=zeta_half,
        varrho_half=varrho_half, diffusion_hat_half=diffusion_hat_half,
        eta_path=prior.eta.at_times(grid.times()),
    )


def gaussian_quadratic_log_moment(mean, cov, a_quad, b_lin, c_const, gamma):
    """(1/gamma) log E[exp(gamma (0.5 X^T A X + b^T X + c))] for X ~ N(mean, cov).

    Raises NumericalError when I - cov^{1/2} (gamma A) cov^{1/2} is not
    positive definite (the exponential moment does not exist).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    a = gamma * np.atleast_2d(np.asarray(a_quad, dtype=np.float64))
    b = gamma * np.atleast_1d(np.asarray(b_lin, dtype=np.float64))
    c = gamma * float(c_const)

    evals, u = np.linalg.eigh(0.5 * (cov + cov.T))
    root = u * np.sqrt(np.clip(evals, 0.0, None))  # root @ root.T == cov
    s = root.T @ a @ root
    m_mat = np.eye(mean.shape[0]) - 0.5 * (s + s.T)
    eigs_m = np.linalg.eigvalsh(m_mat)
    if eigs_m.min() <= 0.0:
        raise NumericalError(
            "Gaussian quadratic-exponential moment does not exist "
            f"(min eigenvalue of I - cov^1/2 A cov^1/2 is {eigs_m.min():.3e})")
    v = root.T @ (a @ mean + b)
    val = (c + 0.5 * mean @ a @ mean + b @ mean
           + 0.5 * v @ np.linalg.solve(m_mat, v)
           - 0.5 * float(np.sum(np.log(eigs_m))))
    return float(val / gamma)


def _ou_conditional(state, kappa, long_run, loading, tau):
    """Conditional law of an OU factor tau ahead of the given state."""
    w = np.exp(-kappa * tau)
    mean = np.asarray(state) * w + long_run * (1.0 - w)
    cov = (loading @ loading.T) * (1.0 - np.exp(-2.0 * kappa * tau)) / (2.0 * kappa)
    return mean, cov


def separable_y0_oracle(params: ModelParams, term, x0_state, t: float) -> float:
    """Common-factor part of Y when the liability has no cross term.

    Computes (1/gamma) log E[exp(gamma F0~) | x0_t] by the Gaussian
    quadratic-exponential moment of the OU transition law. Requires a10F = 0.
    """
    if np.any(term.a10F != 0.0):
        raise ValidationError("separable oracle requires a liability with a10F = 0")
    mean, cov = _ou_conditional(x0_state, params.k0, params.m0_vec, params.sigma0,
                                params.horizon - t)
    return gaussian_quadratic_log_moment(mean, cov, term.a00F, term.b0F, term.cF, params.gamma)


def separable_yi_oracle(params: ModelParams, term, xi_state, t: float) -> float:
    """Idiosyncratic analogue of separable_y0_oracle (constant term lives in Y0)."""
    if np.any(term.a10F != 0.0):
        raise ValidationError("separable oracle requires a liability with a10F = 0")
    mean, cov = _ou_conditional(xi_state, params.k, params.m_vec, params.sigma_idio,
                                params.horizon - t)
    return gaussian_quadratic_log_moment(mean, cov, term.a11F, term.b1F, 0.0, params.gamma)
