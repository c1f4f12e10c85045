"""Command-line front end: solve | simulate | verify | clearing-scaling.

Exit codes: 0 success, 1 input/validation problems, 2 numerical failures
(blow-up, singular matrices), 3 verification failure. Stdout carries the
human summary; the emitted files are the data contract. CSV cells use
shortest round-trip float formatting, so identical runs produce identical
bytes. MFEQ_THREADS caps the agent-simulation thread pool (default 1);
results are bitwise independent of it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .equilibrium import build_theta_coefficients
from .errors import NumericalError, ScenarioError
from .model import RunSettings, Scenario, TimeGrid, load_scenario, scenario_to_dict
from .riccati import solve_system
from .simulate import (
    clearing_report,
    clearing_scaling,
    mean_strategy_path,
    simulate_agents,
    simulate_common,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; keep 2 reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) if not isinstance(x, str) else x for x in row) + "\n")


def _matrix_headers(prefix: str, rows: int, cols: int) -> list[str]:
    if rows == 1 and cols == 1:
        return [prefix]
    return [f"{prefix}_{i}_{j}" for i in range(rows) for j in range(cols)]


def _vector_headers(prefix: str, n: int) -> list[str]:
    if n == 1:
        return [prefix]
    return [f"{prefix}_{i}" for i in range(n)]


def _apply_overrides(scn: Scenario, args) -> Scenario:
    run = scn.run
    if args.seed is not None:
        run = RunSettings(seed=args.seed, n_steps_ode=run.n_steps_ode,
                          n_steps_sim=run.n_steps_sim, n_agents_override=run.n_agents_override,
                          out_dir=run.out_dir, subcommand=run.subcommand, s0=run.s0)
    if args.ode_steps is not None:
        run.n_steps_ode = args.ode_steps
    if args.sim_steps is not None:
        run.n_steps_sim = args.sim_steps
    if args.agents is not None:
        run.n_agents_override = args.agents
    if args.out is not None:
        run.out_dir = args.out
    run.subcommand = args.command
    return Scenario(scn.model, scn.liability, scn.population, scn.theta_prior, run)


def _out_dir(run: RunSettings) -> Path:
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ScenarioError(f"out dir {out} is not writable: {exc}") from None
    return out


def cmd_solve(scn: Scenario) -> int:
    params, term, pop, _, run = scn
    grid = TimeGrid(params.horizon, run.n_steps_ode)
    t0 = time.perf_counter()
    sol = solve_system(params, term, pop, grid)
    elapsed = time.perf_counter() - t0
    out = _out_dir(run)

    d0, d = params.d0, params.d
    header = (["t"] + _matrix_headers("a00", d0, d0) + _matrix_headers("a11", d, d)
              + _matrix_headers("a10", d, d0) + _vector_headers("b0", d0)
              + _vector_headers("b1", d) + ["c"])
    times = grid.times()
    rows = (
        [times[k]]
        + list(sol.a00[k].ravel()) + list(sol.a11[k].ravel()) + list(sol.a10[k].ravel())
        + list(sol.b0[k]) + list(sol.b1[k]) + [sol.c[k]]
        for k in range(grid.n_steps + 1)
    )
    _write_csv(out / "riccati.csv", header, rows)
    print(f"solved coefficient system on {grid.n_steps} steps in {elapsed:.3f}s -> {out / 'riccati.csv'}")
    print(f"A00(0)={sol.a00[0].ravel()} A11(0)={sol.a11[0].ravel()} A10(0)={sol.a10[0].ravel()}")
    print(f"B0(0)={sol.b0[0]} B1(0)={sol.b1[0]} C(0)={_fmt(sol.c[0])}")
    return EXIT_OK


def _threads() -> int:
    raw = os.environ.get("MFEQ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ScenarioError(f"MFEQ_THREADS must be an integer, got {raw!r}") from None


def cmd_simulate(scn: Scenario) -> int:
    params, term, pop, prior, run = scn
    if run.n_agents_override is not None:
        from dataclasses import replace

        pop = replace(pop, n_agents=int(run.n_agents_override))
    grid = TimeGrid(params.horizon, run.n_steps_sim)
    t0 = time.perf_counter()
    sol = solve_system(params, term, pop, grid)
    coeffs = build_theta_coefficients(sol, params, pop, prior, grid)
    market = simulate_common(params, coeffs, sol, grid, run.seed, s0=run.s0)
    agents = simulate_agents(pop, sol, market, params.vol, grid, run.seed,
                             n_threads=_threads())
    report = clearing_report(agents, grid)
    elapsed = time.perf_counter() - t0
    out = _out_dir(run)

    d0 = params.d0
    times = grid.times()
    header = (["t"] + _vector_headers("theta", d0) + _vector_headers("theta_hat", d0)
              + _vector_headers("s", d0) + _vector_headers("x0", d0))
    _write_csv(out / "paths.csv", header, (
        [times[k]] + list(market.theta_path[k]) + list(market.theta_hat_path[k])
        + list(market.s_path[k]) + list(market.x0_path[k])
        for k in range(grid.n_steps + 1)
    ))

    mean_pi = mean_strategy_path(agents)
    _write_csv(out / "clearing.csv", ["t"] + _vector_headers("mean_strategy", d0), (
        [times[k]] + list(mean_pi[k]) for k in range(grid.n_steps + 1)
    ))

    _write_csv(out / "wealth.csv", ["agent", "xi", "wealth_T", "liability", "net"], (
        [str(i), agents.xi[i], agents.wealth_paths[i, -1], agents.liabilities[i],
         agents.terminal_net[i]]
        for i in range(len(agents))
    ))

    summary = {
        "clearing": report.to_dict(),
        "moments": {
            "xi_mean": float(agents.xi.mean()),
            "xi_std": float(agents.xi.std(ddof=1)),
            "wealth_T_mean": float(agents.wealth_paths[:, -1].mean()),
            "wealth_T_std": float(agents.wealth_paths[:, -1].std(ddof=1)),
            "liability_mean": float(agents.liabilities.mean()),
            "liability_std": float(agents.liabilities.std(ddof=1)),
            "net_mean": float(agents.terminal_net.mean()),
            "net_std": float(agents.terminal_net.std(ddof=1)),
            "utility_mean": float(agents.utilities.mean()),
            "certainty_equivalent_mean": float(
                -np.log(-agents.utilities.mean()) / params.gamma),
        },
        "seeds": {"master": run.seed},
        "settings": {
            "n_agents": pop.n_agents,
            "n_steps_sim": run.n_steps_sim,
            "n_steps_ode": run.n_steps_ode,
            "threads": _threads(),
            "scenario": scenario_to_dict(Scenario(params, term, pop, prior, run)),
        },
        "runtime_seconds": elapsed,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"simulated N={pop.n_agents} agents on {grid.n_steps} steps in {elapsed:.3f}s -> {out}")
    print(f"clearing: sup|mean strategy| = {report.sup_abs_mean:.3e}, "
          f"time-RMS = {report.l2_mean:.3e}")
    return EXIT_OK


def cmd_verify(scn: Scenario) -> int:
    results = checks.run_checks(scn)
    print(checks.format_report(results))
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_VERIFICATION
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_clearing_scaling(scn: Scenario, sizes, n_seeds: int) -> int:
    params, term, pop, prior, run = scn
    grid = TimeGrid(params.horizon, run.n_steps_sim)
    sol = solve_system(params, term, pop, grid)
    coeffs = build_theta_coefficients(sol, params, pop, prior, grid)
    result = clearing_scaling(sol, coeffs, pop, params.vol, grid, sizes, n_seeds, run.seed)
    out = _out_dir(run)
    _write_csv(out / "scaling.csv", ["n_agents", "replication", "l2_mean", "sup_abs_mean"], (
        [str(n), str(r), l2, sup] for (n, r, l2, sup) in result.rows
    ))
    print("n_agents  mean_l2_over_seeds")
    for n in result.sizes:
        vals = [l2 for (nn, _, l2, _) in result.rows if nn == n]
        print(f"{n:8d}  {np.mean(vals):.6e}")
    print(f"fitted log-log slope: {result.slope:.4f} (theory: -0.5)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfeq", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="path to the scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--agents", type=int, default=None, help="population size override")
        p.add_argument("--ode-steps", type=int, default=None, help="coefficient ODE grid override")
        p.add_argument("--sim-steps", type=int, default=None, help="simulation grid override")
        p.add_argument("--out", default=None, help="output directory override")

    common(sub.add_parser("solve", help="solve the coefficient ODE system, write riccati.csv"))
    common(sub.add_parser("simulate",
                          help="simulate the economy, write paths/clearing/wealth CSVs + summary.json"))
    common(sub.add_parser("verify", help="run the invariant report; exit 3 on any failure"))
    ps = sub.add_parser("clearing-scaling", help="average-strategy norm vs population size")
    common(ps)
    ps.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1600, 6400])
    ps.add_argument("--replications", type=int, default=20)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scn = _apply_overrides(load_scenario(args.scenario), args)
        if args.command == "solve":
            return cmd_solve(scn)
        if args.command == "simulate":
            return cmd_simulate(scn)
        if args.command == "verify":
            return cmd_verify(scn)
        if args.command == "clearing-scaling":
            return cmd_clearing_scaling(scn, args.sizes, args.replications)
        parser.error(f"unknown command {args.command!r}")
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
