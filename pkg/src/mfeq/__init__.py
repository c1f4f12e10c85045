"""Mean-field equilibrium asset pricing under partial observation.

Pipeline: load a scenario, solve the backward coefficient ODE system, build
the endogenous risk-premium coefficients and their Kalman-Bucy filter, then
simulate a heterogeneous agent population and verify market clearing and
strategy optimality empirically.
"""

from .errors import (
    BlowUpError,
    GridMismatchError,
    NumericalError,
    ParseError,
    ScenarioError,
    SingularCoefficientError,
    ValidationError,
)
from .model import (
    AgentPopulation,
    EtaSpec,
    ModelParams,
    RunSettings,
    Scenario,
    TerminalLiability,
    ThetaPrior,
    TimeGrid,
    VolSpec,
    dump_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_clearing_condition,
)
from .riccati import (
    RiccatiSolution,
    factor_mean_path,
    residual,
    rhs_reference,
    scalar_a11_oracle,
    solve_system,
)
from .equilibrium import (
    ThetaCoefficients,
    build_theta_coefficients,
    conditional_z0,
    driver_mean_field,
    driver_single_agent,
    equilibrium_theta_hat,
    gaussian_quadratic_log_moment,
    optimal_strategy,
    separable_y0_oracle,
    separable_yi_oracle,
    strategy_response,
    theta_hat_affine,
    yz_along,
    yz_at,
)
from .filtering import KalmanResult, discrete_kalman_oracle, run_filter, variance_path
from .simulate import (
    AgentPath,
    AgentPaths,
    ClearingReport,
    MarketPath,
    OptimalityReport,
    PerturbationResult,
    ScalingResult,
    StrategyPerturbation,
    clearing_report,
    clearing_scaling,
    default_perturbations,
    mc_optimality_check,
    mean_strategy_path,
    simulate_agents,
    simulate_common,
    simulate_idio_paths,
    simulate_market_ensemble,
    strategy_from_factor_paths,
    substream,
)

__version__ = "0.1.0"
