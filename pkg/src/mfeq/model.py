"""Domain types, scenario file parsing, and shared validation.

A scenario is a single JSON document with five sections (``model``,
``liability``, ``population``, ``theta_prior``, ``run``). All matrices are
written as row-major nested lists of IEEE doubles so files round-trip
bit-exactly through ``json``. See ``scenarios/baseline.json`` for the schema
by example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ParseError, SingularCoefficientError, ValidationError

__all__ = [
    "TimeGrid",
    "VolSpec",
    "EtaSpec",
    "ModelParams",
    "TerminalLiability",
    "AgentPopulation",
    "ThetaPrior",
    "RunSettings",
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "dump_scenario",
    "validate_clearing_condition",
]


def _as_matrix(x, rows, cols, name):
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (rows, cols):
        raise ValidationError(f"{name} must be a {rows}x{cols} matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


def _as_vector(x, n, name):
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (n,):
        raise ValidationError(f"{name} must be a vector of length {n}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


def _require_symmetric(a, name):
    if not np.array_equal(a, a.T):
        raise ValidationError(f"{name} not symmetric")


def _require_positive(x, name):
    if not (np.isfinite(x) and x > 0):
        raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*horizon/n_steps, k = 0..n_steps."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        _require_positive(self.horizon, "horizon")
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 1):
            raise ValidationError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def half_times(self) -> np.ndarray:
        """Nodes interleaved with interval midpoints: 2*n_steps + 1 points."""
        return np.linspace(0.0, self.horizon, 2 * self.n_steps + 1)


@dataclass(frozen=True)
class VolSpec:
    """Stock volatility sigma_t: a constant matrix or a piecewise-linear table."""

    kind: str  # "constant" | "table"
    value: np.ndarray | None = None  # (d0, d0) for kind="constant"
    times: np.ndarray | None = None  # (m,) breakpoints for kind="table"
    values: np.ndarray | None = None  # (m, d0, d0) for kind="table"

    def __post_init__(self):
        if self.kind not in ("constant", "table"):
            raise ValidationError(f"vol.kind must be 'constant' or 'table', got {self.kind!r}")
        if self.kind == "constant":
            if self.value is None:
                raise ValidationError("vol.value required for constant vol")
        else:
            if self.times is None or self.values is None:
                raise ValidationError("vol.times and vol.values required for table vol")
            if len(self.times) != len(self.values) or len(self.times) < 2:
                raise ValidationError("vol table needs >= 2 aligned breakpoints")
            if not np.all(np.diff(self.times) > 0):
                raise ValidationError("vol.times must be strictly increasing")

    def at_times(self, t) -> np.ndarray:
        """Evaluate sigma on an array of times; returns (len(t), d0, d0)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if self.kind == "constant":
            return np.broadcast_to(self.value, (t.shape[0],) + self.value.shape).copy()
        out = np.empty((t.shape[0],) + self.values.shape[1:])
        for i in range(self.values.shape[1]):
            for j in range(self.values.shape[2]):
                out[:, i, j] = np.interp(t, self.times, self.values[:, i, j])
        return out

    def __call__(self, t: float) -> np.ndarray:
        return self.at_times([t])[0]


@dataclass(frozen=True)
class EtaSpec:
    """Loading eta_t of the orthogonal noise B0 in the risk-premium dynamics.

    kind="ramp" gives eta_t = scale * max(t - onset, 0); kind="constant"
    gives eta_t = scale. The baseline scenario uses the ramp starting at 0.6.
    """

    kind: str  # "ramp" | "constant"
    scale: np.ndarray  # (d0, k_noise)
    onset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ramp", "constant"):
            raise ValidationError(f"eta.kind must be 'ramp' or 'constant', got {self.kind!r}")

    def at_times(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if self.kind == "constant":
            w = np.ones_like(t)
        else:
            w = np.maximum(t - self.onset, 0.0)
        return w[:, None, None] * self.scale

    def __call__(self, t: float) -> np.ndarray:
        return self.at_times([t])[0]


@dataclass(frozen=True)
class ModelParams:
    """Market and factor-process constants.

    gamma: absolute risk aversion; k0/k: mean-reversion speeds of the common
    and idiosyncratic factors; m0_vec/m_vec: their long-run means; sigma0 /
    sigma_idio: their loadings; vol: stock volatility sigma_t; x0_init:
    deterministic initial common factor; horizon: terminal time T.
    """

    gamma: float
    k0: float
    k: float
    m0_vec: np.ndarray
    m_vec: np.ndarray
    sigma0: np.ndarray
    sigma_idio: np.ndarray
    vol: VolSpec
    x0_init: np.ndarray
    horizon: float
    d0: int = 1
    d: int = 1
    k_noise: int = 1
    vol_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        for nm in ("gamma", "k0", "k", "horizon"):
            _require_positive(getattr(self, nm), nm)
        for nm in ("d0", "d", "k_noise"):
            val = getattr(self, nm)
            if not (isinstance(val, (int, np.integer)) and val >= 1):
                raise ValidationError(f"{nm} must be a positive integer")
        object.__setattr__(self, "m0_vec", _as_vector(self.m0_vec, self.d0, "m0"))
        object.__setattr__(self, "m_vec", _as_vector(self.m_vec, self.d, "m"))
        object.__setattr__(self, "sigma0", _as_matrix(self.sigma0, self.d0, self.d0, "sigma0"))
        object.__setattr__(self, "sigma_idio", _as_matrix(self.sigma_idio, self.d, self.d, "sigma"))
        object.__setattr__(self, "x0_init", _as_vector(self.x0_init, self.d0, "x0_init"))
        self._validate_vol()

    def _validate_vol(self):
        # invertibility (and optional eigenvalue bounds on sigma sigma^T) probed
        # on a coarse grid; per-node checks happen again wherever sigma is used
        probe = np.linspace(0.0, self.horizon, 17)
        sigmas = self.vol.at_times(probe)
        if sigmas.shape[1:] != (self.d0, self.d0):
            raise ValidationError(f"vol must produce {self.d0}x{self.d0} matrices")
        for i, s in enumerate(sigmas):
            ssT = s @ s.T
            eigs = np.linalg.eigvalsh(ssT)
            if eigs.min() <= 0.0:
                raise ValidationError(f"vol(t={probe[i]:g}) is singular")
            if self.vol_bounds is not None:
                lo, hi = self.vol_bounds
                if eigs.min() < lo - 1e-12 or eigs.max() > hi + 1e-12:
                    raise ValidationError(
                        f"vol(t={probe[i]:g}) eigenvalues outside configured bounds [{lo}, {hi}]"
                    )

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.d0, self.d, self.k_noise)

    def require_invertible_sigma0(self):
        if abs(np.linalg.det(self.sigma0)) < 1e-300:
            raise SingularCoefficientError("sigma0 is singular; filter construction needs it invertible")


@dataclass(frozen=True)
class TerminalLiability:
    """Coefficients of the quadratic terminal liability F^i."""

    a00F: np.ndarray  # (d0, d0), symmetric
    a11F: np.ndarray  # (d, d), symmetric
    a10F: np.ndarray  # (d, d0)
    b0F: np.ndarray  # (d0,)
    b1F: np.ndarray  # (d,)
    cF: float

    def __post_init__(self):
        a00F = np.asarray(self.a00F, dtype=np.float64)
        a11F = np.asarray(self.a11F, dtype=np.float64)
        d0, d = a00F.shape[0], a11F.shape[0]
        object.__setattr__(self, "a00F", _as_matrix(self.a00F, d0, d0, "a00F"))
        object.__setattr__(self, "a11F", _as_matrix(self.a11F, d, d, "a11F"))
        object.__setattr__(self, "a10F", _as_matrix(self.a10F, d, d0, "a10F"))
        object.__setattr__(self, "b0F", _as_vector(self.b0F, d0, "b0F"))
        object.__setattr__(self, "b1F", _as_vector(self.b1F, d, "b1F"))
        object.__setattr__(self, "cF", float(self.cF))
        _require_symmetric(self.a00F, "a00F")
        _require_symmetric(self.a11F, "a11F")

    def evaluate(self, x0, xi) -> np.ndarray:
        """F at terminal states; broadcasts over leading axes of x0/xi."""
        x0 = np.asarray(x0, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        q0 = 0.5 * np.einsum("...i,ij,...j->...", x0, self.a00F, x0)
        qi = 0.5 * np.einsum("...i,ij,...j->...", xi, self.a11F, xi)
        qx = np.einsum("...i,ij,...j->...", xi, self.a10F, x0)
        return q0 + qi + qx + x0 @ self.b0F + xi @ self.b1F + self.cF


@dataclass(frozen=True)
class AgentPopulation:
    """Law of the i.i.d. agent inputs (xi^i, x^i_0)."""

    n_agents: int
    xi_mean: float
    xi_var: float
    x0i_mean: np.ndarray  # (d,)
    x0i_cov: np.ndarray  # (d, d), symmetric positive definite

    def __post_init__(self):
        if not (isinstance(self.n_agents, (int, np.integer)) and self.n_agents >= 1):
            raise ValidationError("n_agents must be a positive integer")
        if not (np.isfinite(self.xi_var) and self.xi_var >= 0):
            raise ValidationError("xi_var must be nonnegative")
        if not np.isfinite(self.xi_mean):
            raise ValidationError("xi_mean must be finite")
        mean = np.asarray(self.x0i_mean, dtype=np.float64)
        d = mean.shape[0]
        object.__setattr__(self, "x0i_mean", _as_vector(self.x0i_mean, d, "x0i_mean"))
        object.__setattr__(self, "x0i_cov", _as_matrix(self.x0i_cov, d, d, "x0i_cov"))
        _require_symmetric(self.x0i_cov, "x0i_cov")
        try:
            np.linalg.cholesky(self.x0i_cov)
        except np.linalg.LinAlgError:
            raise ValidationError("x0i_cov must be symmetric positive definite") from None


@dataclass(frozen=True)
class ThetaPrior:
    """Prior of the unobserved risk premium: theta_0 ~ N(m, v) with m derived
    endogenously; v and the B0 loading eta are scenario inputs."""

    v: np.ndarray  # (d0, d0), symmetric PSD
    eta: EtaSpec

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        d0 = v.shape[0]
        object.__setattr__(self, "v", _as_matrix(self.v, d0, d0, "v"))
        _require_symmetric(self.v, "v")
        if np.linalg.eigvalsh(self.v).min() < -1e-12:
            raise ValidationError("v must be positive semidefinite")


@dataclass
class RunSettings:
    """Resolved execution settings (file defaults, overridable from the CLI)."""

    seed: int = 0
    n_steps_ode: int = 10_000
    n_steps_sim: int = 2_000
    n_agents_override: int | None = None
    out_dir: str = "out"
    subcommand: str | None = None
    s0: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        if self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        if self.n_steps_ode < 2 or self.n_steps_sim < 2:
            raise ValidationError("n_steps must be >= 2")
        s0 = np.asarray(self.s0, dtype=np.float64)
        if np.any(s0 <= 0):
            raise ValidationError("s0 entries must be positive")
        self.s0 = s0


class Scenario(NamedTuple):
    model: ModelParams
    liability: TerminalLiability
    population: AgentPopulation
    theta_prior: ThetaPrior
    run: RunSettings


def _section(doc: dict, name: str) -> dict:
    if name not in doc:
        raise ParseError(f"scenario missing required section {name!r}")
    if not isinstance(doc[name], dict):
        raise ParseError(f"scenario section {name!r} must be an object")
    return doc[name]


_REQUIRED = object()


def _get(sec: dict, key: str, section: str, default=_REQUIRED):
    if key not in sec:
        if default is _REQUIRED:
            raise ParseError(f"scenario section {section!r} missing key {key!r}")
        return default
    return sec[key]


def scenario_from_dict(doc: dict) -> Scenario:
    """Build validated records from a parsed scenario document."""
    msec = _section(doc, "model")
    dims = _get(msec, "dims", "model", {"d0": 1, "d": 1, "k_noise": 1})
    d0, d, kn = int(dims.get("d0", 1)), int(dims.get("d", 1)), int(dims.get("k_noise", 1))

    volsec = _get(msec, "vol", "model")
    if not isinstance(volsec, dict) or "kind" not in volsec:
        raise ParseError("model.vol must be an object with a 'kind' key")
    if volsec["kind"] == "constant":
        vol = VolSpec(kind="constant", value=_as_matrix(volsec["value"], d0, d0, "vol.value"))
    elif volsec["kind"] == "table":
        times = np.asarray(volsec["times"], dtype=np.float64)
        values = np.asarray(volsec["values"], dtype=np.float64)
        vol = VolSpec(kind="table", times=times, values=values)
    else:
        raise ValidationError(f"vol.kind must be 'constant' or 'table', got {volsec['kind']!r}")

    bounds = _get(msec, "vol_bounds", "model", None)
    model = ModelParams(
        gamma=float(_get(msec, "gamma", "model")),
        k0=float(_get(msec, "k0", "model")),
        k=float(_get(msec, "k", "model")),
        m0_vec=_get(msec, "m0", "model"),
        m_vec=_get(msec, "m", "model"),
        sigma0=_get(msec, "sigma0", "model"),
        sigma_idio=_get(msec, "sigma", "model"),
        vol=vol,
        x0_init=_get(msec, "x0_init", "model"),
        horizon=float(_get(msec, "horizon", "model")),
        d0=d0,
        d=d,
        k_noise=kn,
        vol_bounds=tuple(bounds) if bounds is not None else None,
    )

    lsec = _section(doc, "liability")
    liability = TerminalLiability(
        a00F=_get(lsec, "a00F", "liability"),
        a11F=_get(lsec, "a11F", "liability"),
        a10F=_get(lsec, "a10F", "liability"),
        b0F=_get(lsec, "b0F", "liability"),
        b1F=_get(lsec, "b1F", "liability"),
        cF=float(_get(lsec, "cF", "liability")),
    )
    if liability.a00F.shape != (d0, d0) or liability.a11F.shape != (d, d) or liability.a10F.shape != (d, d0):
        raise ValidationError("liability coefficient shapes inconsistent with model dims")

    psec = _section(doc, "population")
    population = AgentPopulation(
        n_agents=int(_get(psec, "n_agents", "population")),
        xi_mean=float(_get(psec, "xi_mean", "population")),
        xi_var=float(_get(psec, "xi_var", "population")),
        x0i_mean=_get(psec, "x0i_mean", "population"),
        x0i_cov=_get(psec, "x0i_cov", "population"),
    )
    if population.x0i_mean.shape != (d,):
        raise ValidationError("x0i_mean length inconsistent with model dims")

    tsec = _section(doc, "theta_prior")
    etasec = _get(tsec, "eta", "theta_prior")
    if not isinstance(etasec, dict) or "kind" not in etasec:
        raise ParseError("theta_prior.eta must be an object with a 'kind' key")
    if etasec["kind"] == "zero":
        eta = EtaSpec(kind="constant", scale=np.zeros((d0, kn)))
    else:
        eta = EtaSpec(
            kind=etasec["kind"],
            scale=_as_matrix(etasec["scale"], d0, kn, "eta.scale"),
            onset=float(etasec.get("onset", 0.0)),
        )
    prior = ThetaPrior(v=_get(tsec, "v", "theta_prior"), eta=eta)
    if prior.v.shape != (d0, d0):
        raise ValidationError("v shape inconsistent with model dims")

    rsec = _get(doc, "run", "scenario", {})
    run = RunSettings(
        seed=int(rsec.get("seed", 0)),
        n_steps_ode=int(rsec.get("n_steps_ode", 10_000)),
        n_steps_sim=int(rsec.get("n_steps_sim", 2_000)),
        n_agents_override=rsec.get("n_agents_override"),
        out_dir=str(rsec.get("out_dir", "out")),
        s0=np.asarray(rsec.get("s0", np.ones(d0)), dtype=np.float64),
    )
    if run.s0.shape != (d0,):
        raise ValidationError("s0 length inconsistent with model dims")
    return Scenario(model, liability, population, prior, run)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file.

    Raises ParseError for unreadable/malformed files and ValidationError when
    a record violates one of its invariants.
    """
    p = Path(path)
    if not p.exists():
        raise ParseError(f"scenario file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario file {p} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    return scenario_from_dict(doc)


def _matrix_list(a: np.ndarray):
    return [[float(x) for x in row] for row in np.atleast_2d(a)]


def _vector_list(a: np.ndarray):
    return [float(x) for x in a]


def scenario_to_dict(s: Scenario) -> dict:
    """Serialize a scenario to the JSON document schema (lossless for doubles)."""
    m, liab, pop, prior, run = s
    volsec: dict = {"kind": m.vol.kind}
    if m.vol.kind == "constant":
        volsec["value"] = _matrix_list(m.vol.value)
    else:
        volsec["times"] = _vector_list(m.vol.times)
        volsec["values"] = [_matrix_list(v) for v in m.vol.values]
    etasec = {"kind": prior.eta.kind, "scale": _matrix_list(prior.eta.scale), "onset": prior.eta.onset}
    doc = {
        "model": {
            "gamma": m.gamma,
            "k0": m.k0,
            "k": m.k,
            "m0": _vector_list(m.m0_vec),
            "m": _vector_list(m.m_vec),
            "sigma0": _matrix_list(m.sigma0),
            "sigma": _matrix_list(m.sigma_idio),
            "vol": volsec,
            "x0_init": _vector_list(m.x0_init),
            "horizon": m.horizon,
            "dims": {"d0": m.d0, "d": m.d, "k_noise": m.k_noise},
        },
        "liability": {
            "a00F": _matrix_list(liab.a00F),
            "a11F": _matrix_list(liab.a11F),
            "a10F": _matrix_list(liab.a10F),
            "b0F": _vector_list(liab.b0F),
            "b1F": _vector_list(liab.b1F),
            "cF": liab.cF,
        },
        "population": {
            "n_agents": pop.n_agents,
            "xi_mean": pop.xi_mean,
            "xi_var": pop.xi_var,
            "x0i_mean": _vector_list(pop.x0i_mean),
            "x0i_cov": _matrix_list(pop.x0i_cov),
        },
        "theta_prior": {"v": _matrix_list(prior.v), "eta": etasec},
        "run": {
            "seed": run.seed,
            "n_steps_ode": run.n_steps_ode,
            "n_steps_sim": run.n_steps_sim,
            "n_agents_override": run.n_agents_override,
            "out_dir": run.out_dir,
            "s0": _vector_list(run.s0),
        },
    }
    if m.vol_bounds is not None:
        doc["model"]["vol_bounds"] = list(m.vol_bounds)
    return doc


def dump_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def validate_clearing_condition(pop: AgentPopulation, riccati_a11_at_0: np.ndarray, gamma: float) -> bool:
    """True iff Var(x^1_0)^{-1} - gamma*A11(0) is positive definite.

    This is the sufficient condition under which the optimal strategies are
    admissible and average out across the population.
    """
    a11 = np.asarray(riccati_a11_at_0, dtype=np.float64)
    try:
        inv_cov = np.linalg.inv(pop.x0i_cov)
    except np.linalg.LinAlgError:
        raise SingularCoefficientError("x0i_cov is singular") from None
    mat = 0.5 * (inv_cov + inv_cov.T) - gamma * a11
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    return bool(eigs.min() > 0.0)
