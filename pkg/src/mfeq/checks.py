"""Named verification checks and the measurement helpers behind them.

Each check produces one machine-readable report line (name, measured value,
threshold, pass/fail). The measurement helpers are parameterized so the same
code drives both the ``verify`` subcommand (moderate sizes) and the acceptance
suite (full sizes and tolerances).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import (
    build_theta_coefficients,
    conditional_z0,
    driver_mean_field,
    driver_single_agent,
    equilibrium_theta_hat,
    separable_y0_oracle,
    separable_yi_oracle,
    yz_along,
    yz_at,
)
from .filtering import discrete_kalman_oracle, run_filter, variance_path
from .model import Scenario, TimeGrid, validate_clearing_condition
from .riccati import factor_mean_path, residual, scalar_a11_oracle, solve_system
from .simulate import (
    clearing_report,
    clearing_scaling,
    mc_optimality_check,
    default_perturbations,
    simulate_agents,
    simulate_common,
    simulate_market_ensemble,
    substream,
)

__all__ = [
    "CheckResult",
    "run_checks",
    "format_report",
    "measure_richardson",
    "measure_separable_gap",
    "measure_filter_gaps",
    "measure_bsde_residuals",
]

_STREAM_CHECKS = 101


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: str
    passed: bool

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{self.name}\t{self.value:.6e}\t{self.threshold}\t{status}"


def format_report(results) -> str:
    header = "check\tvalue\tthreshold\tstatus"
    return "\n".join([header] + [r.line() for r in results])


def _le(name, value, bound) -> CheckResult:
    return CheckResult(name, float(value), f"<={bound:g}", bool(value <= bound))


def _exact(name, value) -> CheckResult:
    return CheckResult(name, float(value), "==0", bool(value == 0.0))


def _within(name, value, lo, hi) -> CheckResult:
    return CheckResult(name, float(value), f"in[{lo:g},{hi:g}]", bool(lo <= value <= hi))


def measure_richardson(params, term, pop, n: int) -> float:
    """||sol(n) - sol(2n)||_inf / ||sol(2n) - sol(4n)||_inf on common nodes."""
    sols = [solve_system(params, term, pop, TimeGrid(params.horizon, m))
            for m in (n, 2 * n, 4 * n)]

    def gap(a, b, stride):
        worst = 0.0
        for name in ("a00", "a11", "a10", "b0", "b1", "c"):
            worst = max(worst, float(np.abs(getattr(a, name) - getattr(b, name)[::stride]).max()))
        return worst

    return gap(sols[0], sols[1], 2) / gap(sols[1], sols[2], 2)


def measure_separable_gap(scenario: Scenario, n_steps: int, n_states: int, seed: int) -> float:
    """Max |Y_pipeline - (Y0_oracle + Yi_oracle)| at random states, a10F forced to 0."""
    params, term, pop = scenario.model, scenario.liability, scenario.population
    term0 = replace(term, a10F=np.zeros_like(term.a10F))
    grid = TimeGrid(params.horizon, n_steps)
    sol = solve_system(params, term0, pop, grid)
    rng = substream(seed, _STREAM_CHECKS, 1)
    times = grid.times()
    worst = 0.0
    for _ in range(n_states):
        idx = int(rng.integers(0, n_steps + 1))
        x0 = rng.standard_normal(params.d0)
        xi = rng.standard_normal(params.d)
        y, _, _ = yz_at(sol, x0, xi, idx)
        oracle = (separable_y0_oracle(params, term0, x0, times[idx])
                  + separable_yi_oracle(params, term0, xi, times[idx]))
        worst = max(worst, abs(float(y) - oracle))
    return worst


def _coarsen(inc: np.ndarray, factor: int) -> np.ndarray:
    p, n, d = inc.shape
    return inc.reshape(p, n // factor, factor, d).sum(axis=2)


def measure_filter_gaps(scenario: Scenario, ns, n_paths: int, seed: int) -> dict:
    """Strong gaps on common noise, per resolution n in ns.

    Returns {n: (closed_gap, kalman_gap)} where closed_gap is the
    L2-in-time RMS distance between run_filter's estimate and the closed-form
    equilibrium theta_hat along the simulated market, and kalman_gap the same
    distance between the discrete Kalman oracle and run_filter. The underlying
    Brownian increments are drawn once at the finest resolution and summed
    into the coarser grids.
    """
    params, _, pop, prior, _ = scenario
    ns = sorted(int(n) for n in ns)
    n_fine = ns[-1]
    for n in ns:
        if n_fine % n:
            raise ValueError("resolutions must divide the finest one")
    rng = substream(seed, _STREAM_CHECKS, 2)
    z0 = rng.standard_normal((n_paths, params.d0))
    dw_f = rng.standard_normal((n_paths, n_fine, params.d0)) * math.sqrt(params.horizon / n_fine)
    db_f = rng.standard_normal((n_paths, n_fine, params.k_noise)) * math.sqrt(params.horizon / n_fine)

    out = {}
    for n in ns:
        grid = TimeGrid(params.horizon, n)
        sol = solve_system(params, scenario.liability, pop, grid)
        coeffs = build_theta_coefficients(sol, params, pop, prior, grid)
        f = n_fine // n
        theta0 = coeffs.m + z0 @ _psd_root(coeffs.varrho[0]).T
        arrs = simulate_market_ensemble(
            params, coeffs, sol, grid, seed, n_paths,
            keep=("theta", "theta_hat", "dW0"),
            increments=(theta0, _coarsen(dw_f, f), _coarsen(db_f, f)))
        dt = grid.dt
        obs = arrs["dW0"] + arrs["theta"][:, :-1] * dt
        fh = run_filter(coeffs, obs, grid)
        kal = discrete_kalman_oracle(coeffs.alpha, coeffs.beta, coeffs.zeta,
                                     coeffs.eta_path, obs, grid, coeffs.m,
                                     coeffs.varrho[0])

        def l2(a, b):
            return float(np.mean(np.sqrt(dt * np.sum((a - b) ** 2, axis=(-2, -1)))))

        out[n] = (l2(fh, arrs["theta_hat"]), l2(kal.theta_hat, fh))
    return out


def _psd_root(mat):
    evals, u = np.linalg.eigh(0.5 * (mat + mat.T))
    return u * np.sqrt(np.clip(evals, 0.0, None))


def measure_bsde_residuals(scenario: Scenario, ns, n_paths: int, seed: int) -> dict:
    """RMS pathwise defect of the mean-field BSDE per resolution.

    residual = Y_0 - Y_T + sum driver dt - sum Z0 dW0_hat - sum Zi dWi along
    simulated (x0, xi) paths; the Euler scheme leaves an O(sqrt(dt)) RMS.
    """
    params, term, pop, prior, _ = scenario
    ns = sorted(int(n) for n in ns)
    n_fine = ns[-1]
    rng = substream(seed, _STREAM_CHECKS, 3)
    z0 = rng.standard_normal((n_paths, params.d0))
    zx = rng.standard_normal((n_paths, params.d))
    dw_f = rng.standard_normal((n_paths, n_fine, params.d0)) * math.sqrt(params.horizon / n_fine)
    db_f = rng.standard_normal((n_paths, n_fine, params.k_noise)) * math.sqrt(params.horizon / n_fine)
    dwi_f = rng.standard_normal((n_paths, n_fine, params.d)) * math.sqrt(params.horizon / n_fine)
    chol = np.linalg.cholesky(pop.x0i_cov)
    xi0 = pop.x0i_mean + zx @ chol.T

    out = {}
    for n in ns:
        grid = TimeGrid(params.horizon, n)
        sol = solve_system(params, term, pop, grid)
        coeffs = build_theta_coefficients(sol, params, pop, prior, grid)
        f = n_fine // n
        dw, db, dwi = _coarsen(dw_f, f), _coarsen(db_f, f), _coarsen(dwi_f, f)
        theta0 = coeffs.m + z0 @ _psd_root(coeffs.varrho[0]).T
        arrs = simulate_market_ensemble(
            params, coeffs, sol, grid, seed, n_paths, keep=("x0", "dW0_hat"),
            increments=(theta0, dw, db))
        dt = grid.dt

        x = xi0.copy()
        xi_paths = np.empty((n_paths, n + 1, params.d))
        xi_paths[:, 0] = x
        for k in range(n):
            x = x - params.k * (x - params.m_vec) * dt + dwi[:, k] @ params.sigma_idio.T
            xi_paths[:, k + 1] = x

        y, z0l, zil = yz_along(sol, arrs["x0"], xi_paths)
        z0_bar = equilibrium_theta_hat(sol, arrs["x0"]) / (-params.gamma)
        driver = driver_mean_field(z0l, z0_bar, zil, params.gamma)
        resid = (y[:, 0] - y[:, -1]
                 + driver[:, :-1].sum(axis=1) * dt
                 - np.einsum("pki,pki->p", z0l[:, :-1], arrs["dW0_hat"])
                 - np.einsum("pki,pki->p", zil[:, :-1], dwi))
        out[n] = float(np.sqrt(np.mean(resid**2)))
    return out


def run_checks(scenario: Scenario, *, n_steps_ode: int | None = None,
               n_steps_sim: int | None = None, seed: int | None = None) -> list[CheckResult]:
    """The standard invariant report for a scenario."""
    params, term, pop, prior, run = scenario
    n_ode = n_steps_ode or run.n_steps_ode
    n_sim = n_steps_sim or run.n_steps_sim
    seed = run.seed if seed is None else seed
    results: list[CheckResult] = []

    grid = TimeGrid(params.horizon, n_ode)
    sol = solve_system(params, term, pop, grid)

    term_gap = max(
        float(np.abs(sol.a00[-1] - term.a00F).max()),
        float(np.abs(sol.a11[-1] - term.a11F).max()),
        float(np.abs(sol.a10[-1] - term.a10F).max()),
        float(np.abs(sol.b0[-1] - term.b0F).max()),
        float(np.abs(sol.b1[-1] - term.b1F).max()),
        abs(sol.c[-1] - term.cF),
    )
    results.append(_exact("riccati_terminal_bitwise", term_gap))
    sym_gap = max(
        float(np.abs(sol.a00 - np.swapaxes(sol.a00, -1, -2)).max()),
        float(np.abs(sol.a11 - np.swapaxes(sol.a11, -1, -2)).max()),
    )
    results.append(_exact("riccati_symmetry", sym_gap))
    results.append(_le("riccati_residual", residual(sol, params, term, pop), 1e-6))
    if params.d == 1 and float(term.a11F[0, 0]) != 0.0:
        oracle = scalar_a11_oracle(params.gamma, float(params.sigma_idio[0, 0]), params.k,
                                   float(term.a11F[0, 0]), grid.times(), params.horizon)
        results.append(_le("scalar_a11_oracle_gap",
                           float(np.abs(sol.a11[:, 0, 0] - oracle).max()), 1e-8))
    results.append(_within("richardson_ratio", measure_richardson(params, term, pop, 8),
                           16 * 0.7, 16 * 1.3))
    results.append(_le("separable_oracle_gap",
                       measure_separable_gap(scenario, min(n_ode, 4000), 100, seed), 1e-6))

    coeffs = build_theta_coefficients(sol, params, pop, prior, grid)
    results.append(_exact("varrho_initial_exact", float(np.abs(coeffs.varrho[0] - prior.v).max())))
    dh_recomputed = -params.gamma * np.einsum("ab,kbc,cd->kad", params.sigma0.T, sol.a00_half,
                                              params.sigma0)
    results.append(_exact("diffusion_identity_stored",
                          float(np.abs(coeffs.diffusion_hat_half - dh_recomputed).max())))
    scale = float(np.abs(coeffs.diffusion_hat).max())
    results.append(_le("diffusion_identity_sum",
                       float(np.abs((coeffs.zeta + coeffs.varrho) - coeffs.diffusion_hat).max()),
                       8 * np.finfo(float).eps * max(scale, 1.0)))

    h = grid.dt
    eta_nodes = prior.eta.at_times(grid.times())
    fd = (coeffs.varrho[2:] - coeffs.varrho[:-2]) / (2 * h)
    al, rho, ze = coeffs.alpha, coeffs.varrho, coeffs.zeta
    rhs = (eta_nodes @ np.swapaxes(eta_nodes, -1, -2) + al @ rho
           + rho @ np.swapaxes(al, -1, -2) - ze @ rho - rho @ ze - rho @ rho)
    results.append(_le("varrho_ode_residual", float(np.abs(fd - rhs[1:-1]).max()), 1e-5))

    rho_indep = variance_path(coeffs.alpha_half, coeffs.zeta_half,
                              prior.eta.at_times(grid.half_times()), prior.v, grid)
    results.append(_le("varrho_vs_variance_path",
                       float(np.abs(rho_indep - coeffs.varrho).max()), 1e-8))
    results.append(CheckResult("varrho_psd_min_eig",
                               float(np.linalg.eigvalsh(coeffs.varrho).min()),
                               ">=-1e-10", bool(np.linalg.eigvalsh(coeffs.varrho).min() >= -1e-10)))
    results.append(CheckResult("clearing_condition_pd",
                               1.0 if validate_clearing_condition(pop, sol.a11[0], params.gamma) else 0.0,
                               "==1", validate_clearing_condition(pop, sol.a11[0], params.gamma)))

    # algebraic identities at random states
    rng = substream(seed, _STREAM_CHECKS, 4)
    gen_gap = strat_gap = 0.0
    for _ in range(50):
        idx = int(rng.integers(0, n_ode + 1))
        x0 = rng.standard_normal(params.d0)
        xi = rng.standard_normal(params.d)
        _, z0v, ziv = yz_at(sol, x0, xi, idx)
        zbar = conditional_z0(sol, x0, idx)
        th = -params.gamma * zbar
        gen_gap = max(gen_gap, abs(float(driver_single_agent(z0v, ziv, th, params.gamma)
                                         - driver_mean_field(z0v, zbar, ziv, params.gamma))))
        reduced = params.sigma0.T @ sol.a10[idx].T @ (xi - sol.mu1[idx])
        strat_gap = max(strat_gap, float(np.abs((z0v + th / params.gamma) - reduced).max()))
    results.append(_le("generator_equivalence", gen_gap, 1e-12))
    results.append(_le("strategy_equivalence", strat_gap, 1e-12))

    # simulation-level invariants on the sim grid
    grid_s = TimeGrid(params.horizon, n_sim)
    sol_s = solve_system(params, term, pop, grid_s)
    coeffs_s = build_theta_coefficients(sol_s, params, pop, prior, grid_s)
    market = simulate_common(params, coeffs_s, sol_s, grid_s, seed, s0=run.s0)
    w1 = np.cumsum(market.dW0_hat + market.theta_hat_path[:-1] * grid_s.dt, axis=0)
    w2 = np.cumsum(market.dW0 + market.theta_path[:-1] * grid_s.dt, axis=0)
    results.append(_le("innovation_consistency", float(np.abs(w1 - w2).max()), 1e-12))
    results.append(CheckResult("stock_positivity", float(market.s_path.min()), ">0",
                               bool(market.s_path.min() > 0)))

    small_pop = replace(pop, n_agents=min(pop.n_agents, 256))
    agents = simulate_agents(small_pop, sol_s, market, params.vol, grid_s, seed)
    q = market.theta_hat_path[:-1] * grid_s.dt + market.dW0_hat
    acc = agents.xi.copy()
    for k in range(grid_s.n_steps):
        acc = acc + agents.strategy_paths[:, k] @ q[k]
    results.append(_exact("wealth_accounting",
                          float(np.abs(acc - agents.wealth_paths[:, -1]).max())))
    rep = clearing_report(agents, grid_s)
    results.append(_le("clearing_l2_small_pop", rep.l2_mean, 5.0 / math.sqrt(len(agents))))

    gaps = measure_filter_gaps(scenario, (n_sim // 2, n_sim), 20, seed)
    results.append(_le("filter_vs_closed_form_gap", gaps[n_sim][0], 1e-2))
    results.append(_le("kalman_oracle_vs_filter_gap", gaps[n_sim][1], 1e-2))
    ratio = gaps[n_sim // 2][0] / gaps[n_sim][0]
    results.append(_within("filter_gap_halving", ratio, 1.4, 2.6))

    res = measure_bsde_residuals(scenario, (max(n_sim // 8, 50), max(n_sim // 2, 200)), 200, seed)
    ns = sorted(res)
    results.append(_within("bsde_residual_order", res[ns[0]] / res[ns[1]], 1.4, 2.6))
    return results
