"""Monte Carlo engine: market paths, agent populations, clearing statistics.

Randomness discipline: one master seed; every consumer derives an independent
generator through ``substream(seed, label, *indices)``, which feeds the label
tuple into ``numpy``'s SeedSequence spawn key. Agent i of replication r always
draws from substream (AGENT, r, i), so results are independent of scheduling
and identical under any thread count. Agent blocks have a fixed size, making
the float operations themselves independent of how blocks are distributed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .equilibrium import ThetaCoefficients, strategy_response, theta_hat_affine
from .errors import GridMismatchError, ValidationError
from .model import AgentPopulation, ModelParams, TimeGrid
from .riccati import RiccatiSolution

__all__ = [
    "substream",
    "MarketPath",
    "AgentPath",
    "AgentPaths",
    "ClearingReport",
    "StrategyPerturbation",
    "PerturbationResult",
    "OptimalityReport",
    "ScalingResult",
    "simulate_common",
    "simulate_market_ensemble",
    "simulate_agents",
    "simulate_idio_paths",
    "strategy_from_factor_paths",
    "clearing_report",
    "mean_strategy_path",
    "mc_optimality_check",
    "default_perturbations",
    "clearing_scaling",
]

STREAM_MARKET = 1
STREAM_AGENT = 2
STREAM_ENSEMBLE = 3
STREAM_OPTIMALITY = 4
STREAM_SCALING = 5

_AGENT_BLOCK = 512  # fixed so float work is independent of thread count


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (master seed, stream label, indices...)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    """R with R R^T = mat for symmetric PSD mat (tolerates singular input)."""
    evals, u = np.linalg.eigh(0.5 * (mat + mat.T))
    return u * np.sqrt(np.clip(evals, 0.0, None))


@dataclass
class MarketPath:
    """One realization of the common quantities."""

    grid: TimeGrid
    dW0: np.ndarray  # (n, d0) Brownian increments of W0
    dB0: np.ndarray  # (n, k_noise)
    x0_path: np.ndarray  # (n+1, d0)
    theta_path: np.ndarray  # (n+1, d0) unobserved risk premium
    theta_hat_path: np.ndarray  # (n+1, d0) equilibrium estimate
    dW0_hat: np.ndarray  # (n, d0) innovation increments
    s_path: np.ndarray  # (n+1, d0) stock prices

    def observation_increments(self) -> np.ndarray:
        """Increments of the observation process: dW0_hat + theta_hat dt."""
        return self.dW0_hat + self.theta_hat_path[:-1] * self.grid.dt


@dataclass(frozen=True)
class AgentPath:
    """One agent's realized quantities (views into the shared arrays)."""

    agent_id: int
    xi: float
    x_path: np.ndarray
    dW: np.ndarray
    strategy_path: np.ndarray
    wealth_path: np.ndarray
    liability: float
    terminal_net: float
    utility: float


class AgentPaths:
    """Simulated population stored as dense arrays, viewable per agent."""

    def __init__(self, xi, x_paths, dW, strategy_paths, wealth_paths,
                 liabilities, utilities):
        self.xi = xi
        self.x_paths = x_paths
        self.dW = dW
        self.strategy_paths = strategy_paths
        self.wealth_paths = wealth_paths
        self.liabilities = liabilities
        self.terminal_net = wealth_paths[:, -1] - liabilities
        self.utilities = utilities

    def __len__(self):
        return self.xi.shape[0]

    def __getitem__(self, i: int) -> AgentPath:
        if not -len(self) <= i < len(self):
            raise IndexError(i)
        i = i % len(self)
        return AgentPath(
            agent_id=i, xi=float(self.xi[i]), x_path=self.x_paths[i], dW=self.dW[i],
            strategy_path=self.strategy_paths[i], wealth_path=self.wealth_paths[i],
            liability=float(self.liabilities[i]), terminal_net=float(self.terminal_net[i]),
            utility=float(self.utilities[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass
class ClearingReport:
    """Norms of the population-average strategy path."""

    n_agents: int
    sup_abs_mean: float  # sup over nodes of max-abs component of the mean strategy
    l2_mean: float  # time-RMS of the same series

    def to_dict(self):
        return {"n_agents": self.n_agents, "sup_abs_mean": self.sup_abs_mean, "l2_mean": self.l2_mean}


def _check_market_inputs(coeffs: ThetaCoefficients, sol: RiccatiSolution, grid: TimeGrid):
    sol.require_grid(grid)
    if coeffs.grid.n_steps != grid.n_steps or coeffs.grid.horizon != grid.horizon:
        raise GridMismatchError("theta coefficients not on the requested grid")
    if coeffs.eta_path is None:
        raise ValidationError("theta coefficients lack an eta path; simulation needs one")


def _market_arrays(params: ModelParams, coeffs: ThetaCoefficients, sol: RiccatiSolution,
                   grid: TimeGrid, rng: np.random.Generator | None, n_paths: int,
                   keep: tuple[str, ...], s0: np.ndarray | None,
                   increments=None):
    """Shared Euler recursion over a batch of independent market paths.

    Draw order: theta_0 block first, then per step (dW0, dB0). theta follows
    its linear SDE under Euler; x0 is driven by the innovation increments
    dW0_hat = dW0 + (theta - theta_hat) dt with theta_hat the closed-form
    equilibrium estimate; stocks use the positivity-preserving log-Euler step.
    ``increments=(theta0, dW0, dB0)`` bypasses the draws (strong-convergence
    studies refine one underlying Brownian path across resolutions).
    """
    n, dt = grid.n_steps, grid.dt
    d0, kn = params.d0, params.k_noise
    sqdt = math.sqrt(dt)
    gmat, gvec = theta_hat_affine(sol)
    alpha, beta = coeffs.alpha, coeffs.beta
    zeta, eta = coeffs.zeta, coeffs.eta_path

    want = {name: None for name in keep}
    def alloc(name, shape):
        if name in want:
            want[name] = np.empty(shape)
    alloc("x0", (n_paths, n + 1, d0))
    alloc("theta", (n_paths, n + 1, d0))
    alloc("theta_hat", (n_paths, n + 1, d0))
    alloc("dW0", (n_paths, n, d0))
    alloc("dB0", (n_paths, n, kn))
    alloc("dW0_hat", (n_paths, n, d0))
    alloc("s", (n_paths, n + 1, d0))

    if increments is None:
        theta = coeffs.m + rng.standard_normal((n_paths, d0)) @ _psd_factor(coeffs.varrho[0]).T
        given_dw = given_db = None
    else:
        theta0, given_dw, given_db = increments
        theta = np.array(theta0, dtype=np.float64, copy=True)
    x0 = np.broadcast_to(params.x0_init, (n_paths, d0)).copy()
    track_s = "s" in want
    if track_s:
        s = np.broadcast_to(np.ones(d0) if s0 is None else s0, (n_paths, d0)).copy()
        vols = params.vol.at_times(grid.times())
        vol_drift = -0.5 * np.einsum("kij,kij->ki", vols, vols)  # -diag(sigma sigma^T)/2
        want["s"][:, 0] = s

    if "x0" in want:
        want["x0"][:, 0] = x0
    if "theta" in want:
        want["theta"][:, 0] = theta

    for k in range(n):
        if given_dw is None:
            dw = rng.standard_normal((n_paths, d0)) * sqdt
            db = rng.standard_normal((n_paths, kn)) * sqdt
        else:
            dw = given_dw[:, k]
            db = given_db[:, k]
        theta_hat = x0 @ gmat[k].T + gvec[k]
        dwh = dw + (theta - theta_hat) * dt
        if "theta_hat" in want:
            want["theta_hat"][:, k] = theta_hat
        if "dW0" in want:
            want["dW0"][:, k] = dw
        if "dB0" in want:
            want["dB0"][:, k] = db
        if "dW0_hat" in want:
            want["dW0_hat"][:, k] = dwh
        if track_s:
            s = s * np.exp((theta_hat @ vols[k].T + vol_drift[k]) * dt + dwh @ vols[k].T)
            want["s"][:, k + 1] = s
        x0 = x0 - params.k0 * (x0 - params.m0_vec) * dt + dwh @ params.sigma0.T
        theta = theta + (theta @ alpha[k].T + beta[k]) * dt + dw @ zeta[k].T + db @ eta[k].T
        if "x0" in want:
            want["x0"][:, k + 1] = x0
        if "theta" in want:
            want["theta"][:, k + 1] = theta

    if "theta_hat" in want:
        want["theta_hat"][:, n] = x0 @ gmat[n].T + gvec[n]
    return want


def simulate_common(params: ModelParams, coeffs: ThetaCoefficients, sol: RiccatiSolution,
                    grid: TimeGrid, seed: int, *, s0: np.ndarray | None = None,
                    run_index: int = 0) -> MarketPath:
    """Generate one market path (common factors, premium, filter, stock)."""
    _check_market_inputs(coeffs, sol, grid)
    rng = substream(seed, STREAM_MARKET, run_index)
    keep = ("x0", "theta", "theta_hat", "dW0", "dB0", "dW0_hat", "s")
    arrs = _market_arrays(params, coeffs, sol, grid, rng, 1, keep, s0)
    return MarketPath(
        grid=grid,
        dW0=arrs["dW0"][0], dB0=arrs["dB0"][0], x0_path=arrs["x0"][0],
        theta_path=arrs["theta"][0], theta_hat_path=arrs["theta_hat"][0],
        dW0_hat=arrs["dW0_hat"][0], s_path=arrs["s"][0],
    )


def simulate_market_ensemble(params: ModelParams, coeffs: ThetaCoefficients,
                             sol: RiccatiSolution, grid: TimeGrid, seed: int,
                             n_paths: int, keep=("theta", "theta_hat"),
                             *, run_index: int = 0, increments=None) -> dict:
    """Batch of independent market paths; returns only the requested arrays.

    Pass ``increments=(theta0, dW0, dB0)`` with shapes (P, d0), (P, n, d0),
    (P, n, k) to drive the recursion with externally supplied noise.
    """
    _check_market_inputs(coeffs, sol, grid)
    rng = None if increments is not None else substream(seed, STREAM_ENSEMBLE, run_index)
    return _market_arrays(params, coeffs, sol, grid, rng, n_paths, tuple(keep), None,
                          increments=increments)


def simulate_idio_paths(params: ModelParams, pop: AgentPopulation, grid: TimeGrid,
                        rng: np.random.Generator, n_paths: int):
    """Euler paths of independent idiosyncratic factors (one draw block).

    Draw order per batch: x_0 block, then one (n_paths, d) normal block per
    step. Returns (x_paths, dW).
    """
    n, dt = grid.n_steps, grid.dt
    d = params.d
    sqdt = math.sqrt(dt)
    chol = np.linalg.cholesky(pop.x0i_cov)
    x = pop.x0i_mean + rng.standard_normal((n_paths, d)) @ chol.T
    x_paths = np.empty((n_paths, n + 1, d))
    dw = np.empty((n_paths, n, d))
    x_paths[:, 0] = x
    for k in range(n):
        dwk = rng.standard_normal((n_paths, d)) * sqdt
        dw[:, k] = dwk
        x = x - params.k * (x - params.m_vec) * dt + dwk @ params.sigma_idio.T
        x_paths[:, k + 1] = x
    return x_paths, dw


def strategy_from_factor_paths(sol: RiccatiSolution, x_paths, vol=None) -> np.ndarray:
    """Stock positions pi* along idiosyncratic paths (measurable in x alone).

    pi*_k = (sigma_k^T)^{-1} Sigma0^T A10(t_k)^T (x_k - mu1_k); accepts
    (..., n+1, d) and returns (..., n+1, d0).
    """
    _, pi_map = strategy_response(sol, vol)
    dev = np.asarray(x_paths, dtype=np.float64) - sol.mu1
    return np.einsum("kij,...kj->...ki", pi_map, dev)


def _simulate_agent_block(lo, hi, params, pop, sol, vol, grid, seed, run_index,
                          q_path, out):
    """Simulate agents [lo, hi): self-contained, writes disjoint slices."""
    n, dt = grid.n_steps, grid.dt
    d = params.d
    nb = hi - lo
    sqdt = math.sqrt(dt)
    chol = np.linalg.cholesky(pop.x0i_cov)
    xi = np.empty(nb)
    x0 = np.empty((nb, d))
    dw = np.empty((nb, n, d))
    for j in range(nb):
        gen = substream(seed, STREAM_AGENT, run_index, lo + j)
        xi[j] = pop.xi_mean + math.sqrt(pop.xi_var) * gen.standard_normal()
        x0[j] = pop.x0i_mean + chol @ gen.standard_normal(d)
        dw[j] = gen.standard_normal((n, d)) * sqdt

    x_paths = np.empty((nb, n + 1, d))
    x_paths[:, 0] = x0
    x = x0
    for k in range(n):
        x = x - params.k * (x - params.m_vec) * dt + dw[:, k] @ params.sigma_idio.T
        x_paths[:, k + 1] = x

    strat = strategy_from_factor_paths(sol, x_paths, vol)
    wealth = np.empty((nb, n + 1))
    wealth[:, 0] = xi
    w = xi.copy()
    for k in range(n):
        w = w + np.einsum("bi,i->b", strat[:, k], q_path[k])
        wealth[:, k + 1] = w

    liab = sol.term.evaluate(np.broadcast_to(out["x0_T"], (nb, params.d0)), x_paths[:, -1])
    util = -np.exp(-params.gamma * (wealth[:, -1] - liab))

    out["xi"][lo:hi] = xi
    out["x_paths"][lo:hi] = x_paths
    out["dW"][lo:hi] = dw
    out["strategy"][lo:hi] = strat
    out["wealth"][lo:hi] = wealth
    out["liab"][lo:hi] = liab
    out["util"][lo:hi] = util


def simulate_agents(pop: AgentPopulation, sol: RiccatiSolution, market: MarketPath,
                    vol, grid: TimeGrid, seed: int, *, n_threads: int = 1,
                    run_index: int = 0) -> AgentPaths:
    """Simulate the heterogeneous population against one market path.

    Per-agent substreams make every agent's draws independent of processing
    order; the fixed block size keeps results bitwise identical for any
    n_threads. Wealth follows W_{k+1} = W_k + p_k (theta_hat_k dt + dW0_hat_k)
    with p the strategy row vector; no other cash flows exist.
    """
    sol.require_grid(grid)
    if market.grid.n_steps != grid.n_steps or market.grid.horizon != grid.horizon:
        raise GridMismatchError("market path not on the requested grid")
    params = sol.params
    n_agents = pop.n_agents
    n = grid.n_steps
    q_path = market.theta_hat_path[:-1] * grid.dt + market.dW0_hat  # (n, d0)

    out = {
        "xi": np.empty(n_agents),
        "x_paths": np.empty((n_agents, n + 1, params.d)),
        "dW": np.empty((n_agents, n, params.d)),
        "strategy": np.empty((n_agents, n + 1, params.d0)),
        "wealth": np.empty((n_agents, n + 1)),
        "liab": np.empty(n_agents),
        "util": np.empty(n_agents),
        "x0_T": market.x0_path[-1],
    }
    blocks = [(lo, min(lo + _AGENT_BLOCK, n_agents)) for lo in range(0, n_agents, _AGENT_BLOCK)]
    if n_threads and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = [
                pool.submit(_simulate_agent_block, lo, hi, params, pop, sol, vol,
                            grid, seed, run_index, q_path, out)
                for lo, hi in blocks
            ]
            for f in futures:
                f.result()
    else:
        for lo, hi in blocks:
            _simulate_agent_block(lo, hi, params, pop, sol, vol, grid, seed,
                                  run_index, q_path, out)
    return AgentPaths(out["xi"], out["x_paths"], out["dW"], out["strategy"],
                      out["wealth"], out["liab"], out["util"])


def mean_strategy_path(agents) -> np.ndarray:
    """Population-average stock position per node: (n+1, d0)."""
    if isinstance(agents, AgentPaths):
        strat = agents.strategy_paths
    else:
        strat = np.stack([a.strategy_path for a in agents])
    if strat.shape[0] == 0:
        raise ValidationError("clearing report needs a nonempty agent collection")
    return strat.mean(axis=0)


def clearing_report(agents, grid: TimeGrid) -> ClearingReport:
    """Sup and time-RMS norms of the average strategy (market-clearing defect)."""
    mean_path = mean_strategy_path(agents)
    if mean_path.shape[0] != grid.n_steps + 1:
        raise GridMismatchError("agent strategy paths not on the requested grid")
    series = np.abs(mean_path).max(axis=-1)
    n = len(agents) if hasattr(agents, "__len__") else None
    return ClearingReport(
        n_agents=n if n is not None else -1,
        sup_abs_mean=float(series.max()),
        l2_mean=float(np.sqrt(np.mean(series**2))),
    )


@dataclass(frozen=True)
class StrategyPerturbation:
    """Bounded adapted modification of the optimal strategy.

    kind="shift": add ``amount`` to every component of p*;
    kind="scale": multiply p* by ``amount``;
    kind="time_shift": evaluate the strategy response matrix ``amount`` time
    units ahead (clamped to [0, T]), keeping the current factor state.
    """

    kind: str
    amount: float

    def __post_init__(self):
        if self.kind not in ("shift", "scale", "time_shift"):
            raise ValidationError(f"unknown perturbation kind {self.kind!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}({self.amount:+g})"


def default_perturbations():
    """The perturbation battery used by the acceptance suite."""
    return (
        StrategyPerturbation("shift", 0.0),
        StrategyPerturbation("shift", 0.1),
        StrategyPerturbation("shift", -0.1),
        StrategyPerturbation("shift", 0.5),
        StrategyPerturbation("shift", -0.5),
        StrategyPerturbation("scale", 0.5),
        StrategyPerturbation("scale", 2.0),
    )


@dataclass
class PerturbationResult:
    perturbation: StrategyPerturbation
    utility_mean: float
    utility_se: float
    diff_mean: float  # E[U(p*) - U(p)]
    diff_se: float  # paired (common random numbers) standard error

    def to_dict(self):
        return {
            "perturbation": self.perturbation.label,
            "utility_mean": self.utility_mean,
            "utility_se": self.utility_se,
            "diff_mean": self.diff_mean,
            "diff_se": self.diff_se,
        }


@dataclass
class OptimalityReport:
    n_paths: int
    n_steps: int
    base_utility_mean: float
    base_utility_se: float
    base_certainty_equivalent: float
    results: list[PerturbationResult] = field(default_factory=list)

    def passed(self, n_se: float = 2.0) -> bool:
        return all(r.diff_mean >= -n_se * r.diff_se for r in self.results)

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "base_utility_mean": self.base_utility_mean,
            "base_utility_se": self.base_utility_se,
            "base_certainty_equivalent": self.base_certainty_equivalent,
            "results": [r.to_dict() for r in self.results],
        }


def mc_optimality_check(sol: RiccatiSolution, coeffs: ThetaCoefficients,
                        pop: AgentPopulation, perturbations, n_paths: int,
                        seed: int, *, vol=None, run_index: int = 0) -> OptimalityReport:
    """Estimate E[-exp(-gamma(W_T - F))] for p* and perturbed strategies.

    One representative agent per path over a fresh ensemble of market and
    idiosyncratic draws; all strategy variants ride the same paths (common
    random numbers), so the reported differences have paired standard errors.
    Streams over time to keep memory at O(n_paths).
    """
    params = sol.params
    grid = sol.grid
    if coeffs.grid.n_steps != grid.n_steps or coeffs.grid.horizon != grid.horizon:
        raise GridMismatchError("theta coefficients not on the solution grid")
    perturbations = tuple(perturbations)
    n, dt = grid.n_steps, grid.dt
    d0, d, kn = params.d0, params.d, params.k_noise
    sqdt = math.sqrt(dt)
    rng = substream(seed, STREAM_OPTIMALITY, run_index)

    gmat, gvec = theta_hat_affine(sol)
    r_resp, _ = strategy_response(sol, vol)  # p* = (x - mu1) @ r^T
    alpha, beta = coeffs.alpha, coeffs.beta
    zeta, eta = coeffs.zeta, coeffs.eta_path
    chol = np.linalg.cholesky(pop.x0i_cov)

    theta = coeffs.m + rng.standard_normal((n_paths, d0)) @ _psd_factor(coeffs.varrho[0]).T
    xi0 = pop.xi_mean + math.sqrt(pop.xi_var) * rng.standard_normal(n_paths)
    x = pop.x0i_mean + rng.standard_normal((n_paths, d)) @ chol.T
    x0 = np.broadcast_to(params.x0_init, (n_paths, d0)).copy()

    wealth = np.zeros((1 + len(perturbations), n_paths))
    lag_steps = [int(round(p.amount / dt)) if p.kind == "time_shift" else 0
                 for p in perturbations]

    for k in range(n):
        dw = rng.standard_normal((n_paths, d0)) * sqdt
        db = rng.standard_normal((n_paths, kn)) * sqdt
        dwi = rng.standard_normal((n_paths, d)) * sqdt

        theta_hat = x0 @ gmat[k].T + gvec[k]
        dwh = dw + (theta - theta_hat) * dt
        q = theta_hat * dt + dwh  # (n_paths, d0)
        dev = x - sol.mu1[k]
        p_star = dev @ r_resp[k].T
        wealth[0] += np.einsum("pi,pi->p", p_star, q)
        for j, pert in enumerate(perturbations):
            if pert.kind == "shift":
                pj = p_star + pert.amount
            elif pert.kind == "scale":
                pj = p_star * pert.amount
            else:
                ks = min(max(k + lag_steps[j], 0), n)
                pj = (x - sol.mu1[ks]) @ r_resp[ks].T
            wealth[j + 1] += np.einsum("pi,pi->p", pj, q)

        x0 = x0 - params.k0 * (x0 - params.m0_vec) * dt + dwh @ params.sigma0.T
        theta = theta + (theta @ alpha[k].T + beta[k]) * dt + dw @ zeta[k].T + db @ eta[k].T
        x = x - params.k * (x - params.m_vec) * dt + dwi @ params.sigma_idio.T

    liab = sol.term.evaluate(x0, x)
    sq = math.sqrt(n_paths)
    utils_star = -np.exp(-params.gamma * (xi0 + wealth[0] - liab))
    base_mean = float(utils_star.mean())
    report = OptimalityReport(
        n_paths=n_paths, n_steps=n,
        base_utility_mean=base_mean,
        base_utility_se=float(utils_star.std(ddof=1) / sq),
        base_certainty_equivalent=float(-math.log(-base_mean) / params.gamma),
    )
    for j, pert in enumerate(perturbations):
        utils = -np.exp(-params.gamma * (xi0 + wealth[j + 1] - liab))
        diff = utils_star - utils
        report.results.append(PerturbationResult(
            perturbation=pert,
            utility_mean=float(utils.mean()),
            utility_se=float(utils.std(ddof=1) / sq),
            diff_mean=float(diff.mean()),
            diff_se=float(diff.std(ddof=1) / sq),
        ))
    return report


@dataclass
class ScalingResult:
    sizes: list[int]
    rows: list[tuple[int, int, float, float]]  # (n_agents, replication, l2_mean, sup_abs_mean)
    slope: float

    def to_dict(self):
        return {
            "sizes": self.sizes,
            "rows": [
                {"n_agents": n, "replication": r, "l2_mean": l2, "sup_abs_mean": sup}
                for (n, r, l2, sup) in self.rows
            ],
            "slope": self.slope,
        }


def clearing_scaling(sol: RiccatiSolution, coeffs: ThetaCoefficients,
                     pop: AgentPopulation, vol, grid: TimeGrid, sizes,
                     n_seeds: int, seed: int) -> ScalingResult:
    """Average-strategy norms across population sizes and replications.

    Fits the pooled log-log regression of l2_mean on N; the model predicts a
    slope of -1/2 (CLT rate of the market-clearing defect).
    """
    params = sol.params
    rows = []
    run = 0
    for n_agents in sizes:
        pop_n = replace(pop, n_agents=int(n_agents))
        for r in range(n_seeds):
            market = simulate_common(params, coeffs, sol, grid, seed, run_index=run)
            agents = simulate_agents(pop_n, sol, market, vol, grid, seed, run_index=run)
            rep = clearing_report(agents, grid)
            rows.append((int(n_agents), r, rep.l2_mean, rep.sup_abs_mean))
            run += 1
    logs = np.log([[row[0], row[2]] for row in rows])
    slope = float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])
    return ScalingResult(sizes=list(int(s) for s in sizes), rows=rows, slope=slope)
