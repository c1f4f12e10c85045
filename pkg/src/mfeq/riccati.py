"""Backward solver for the coupled coefficient ODE system.

The equilibrium value function is the quadratic form
``Y = 0.5 <A00 x0, x0> + 0.5 <A11 xi, xi> + <A10 x0, xi> + <B0, x0> + <B1, xi> + C``
whose six time-dependent coefficients solve a terminal-value matrix Riccati
system on [0, T]. This module integrates the system with fixed-step classical
RK4 (backward from T), stores the right-hand sides at every node, densifies
to interval midpoints by cubic Hermite interpolation (needed later by the
forward coefficient integrations), and provides independent defect checks and
a scalar closed-form oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BlowUpError, GridMismatchError, ValidationError
from .model import AgentPopulation, ModelParams, TerminalLiability, TimeGrid

__all__ = [
    "RiccatiSolution",
    "factor_mean_path",
    "solve_system",
    "scalar_a11_oracle",
    "residual",
    "rhs_reference",
]

DEFAULT_BLOWUP_BOUND = 1e8


def factor_mean_path(params: ModelParams, pop: AgentPopulation, grid: TimeGrid):
    """Mean of the idiosyncratic factor and its time derivative at the nodes.

    mu1_t = E[x^1_0] e^{-K t} + m (1 - e^{-K t}), dmu1_t = -K (mu1_t - m).
    """
    t = grid.times()
    w = np.exp(-params.k * t)[:, None]
    mu1 = pop.x0i_mean * w + params.m_vec * (1.0 - w)
    dmu1 = -params.k * (mu1 - params.m_vec)
    return mu1, dmu1


def _mu1_at(params, pop, t):
    w = np.exp(-params.k * np.asarray(t, dtype=np.float64))[..., None]
    return pop.x0i_mean * w + params.m_vec * (1.0 - w)


def rhs_reference(params: ModelParams, mu1: np.ndarray, a00, a11, a10, b0, b1):
    """Vectorized (numpy) right-hand sides of the six equations.

    Independent of the compiled integrator; used for defect checks, dense
    output, and tests. All coefficient arguments carry a leading time axis.
    """
    g = params.gamma
    k0, k = params.k0, params.k
    ss0 = params.sigma0 @ params.sigma0.T
    ss1 = params.sigma_idio @ params.sigma_idio.T
    m0, m = params.m0_vec, params.m_vec
    a10t = np.swapaxes(a10, -1, -2)

    p0 = ss0 @ a00
    q1 = ss1 @ a10
    da00 = -g * (a00 @ p0) - g * (a10t @ q1) + 2.0 * k0 * a00
    da11 = -g * (a11 @ (ss1 @ a11)) + 2.0 * k * a11
    da10 = -g * (a10 @ p0) - g * (a11 @ q1) + (k0 + k) * a10

    ss0b0 = np.einsum("ij,...j->...i", ss0, b0)
    ss1b1 = np.einsum("ij,...j->...i", ss1, b1)
    a10t_mu = np.einsum("...ji,...j->...i", a10, mu1)
    w = np.einsum("...ij,...j->...i", a10, np.einsum("ij,...j->...i", ss0, a10t_mu))
    db0 = (-g * np.einsum("...ij,...j->...i", a00, ss0b0) + k0 * b0
           - g * np.einsum("...ji,...j->...i", a10, ss1b1)
           - k0 * np.einsum("...ij,j->...i", a00, m0)
           - k * np.einsum("...ji,j->...i", a10, m))
    db1 = (-g * np.einsum("...ij,...j->...i", a11, ss1b1) + k * b1
           - g * (w + np.einsum("...ij,...j->...i", a10, ss0b0))
           - k * np.einsum("...ij,j->...i", a11, m)
           - k0 * np.einsum("...ij,j->...i", a10, m0))
    dc = (-0.5 * g * np.einsum("...i,...i->...", b0, ss0b0)
          - 0.5 * g * np.einsum("...i,...i->...", b1, ss1b1)
          - k0 * b0 @ m0 - k * b1 @ m
          + 0.5 * g * np.einsum("...i,...i->...", mu1, w)
          - 0.5 * np.trace(a00 @ ss0, axis1=-2, axis2=-1)
          - 0.5 * np.trace(a11 @ ss1, axis1=-2, axis2=-1))
    return da00, da11, da10, db0, db1, dc


def _hermite_mid(y, dy, h):
    """Cubic Hermite value at interval midpoints from node values/derivatives."""
    return 0.5 * (y[:-1] + y[1:]) + (h / 8.0) * (dy[:-1] - dy[1:])


def _interleave(nodes, mids):
    out = np.empty((nodes.shape[0] + mids.shape[0],) + nodes.shape[1:])
    out[::2] = nodes
    out[1::2] = mids
    return out


@dataclass
class RiccatiSolution:
    """Grid-sampled coefficient paths with dense (half-grid) storage.

    The ``*_half`` arrays hold 2n+1 points: even entries are the RK4 nodes,
    odd entries are midpoint dense output. Node views are exposed under the
    plain names (a00, da00, ...). The terminal node equals the terminal
    liability inputs bitwise.
    """

    grid: TimeGrid
    params: ModelParams
    term: TerminalLiability
    pop: AgentPopulation
    a00_half: np.ndarray
    a11_half: np.ndarray
    a10_half: np.ndarray
    b0_half: np.ndarray
    b1_half: np.ndarray
    c_half: np.ndarray
    da00_half: np.ndarray
    da11_half: np.ndarray
    da10_half: np.ndarray
    db0_half: np.ndarray
    db1_half: np.ndarray
    dc_half: np.ndarray
    mu1: np.ndarray
    dmu1: np.ndarray

    @property
    def a00(self):
        return self.a00_half[::2]

    @property
    def a11(self):
        return self.a11_half[::2]

    @property
    def a10(self):
        return self.a10_half[::2]

    @property
    def b0(self):
        return self.b0_half[::2]

    @property
    def b1(self):
        return self.b1_half[::2]

    @property
    def c(self):
        return self.c_half[::2]

    @property
    def da00(self):
        return self.da00_half[::2]

    @property
    def da11(self):
        return self.da11_half[::2]

    @property
    def da10(self):
        return self.da10_half[::2]

    @property
    def db0(self):
        return self.db0_half[::2]

    @property
    def db1(self):
        return self.db1_half[::2]

    @property
    def dc(self):
        return self.dc_half[::2]

    def require_grid(self, grid: TimeGrid):
        if grid.n_steps != self.grid.n_steps or grid.horizon != self.grid.horizon:
            raise GridMismatchError(
                f"solution grid (T={self.grid.horizon}, n={self.grid.n_steps}) does not match "
                f"(T={grid.horizon}, n={grid.n_steps})"
            )


def solve_system(params: ModelParams, term: TerminalLiability, pop: AgentPopulation,
                 grid: TimeGrid, *, blowup_bound: float = DEFAULT_BLOWUP_BOUND,
                 symmetrize: bool = True) -> RiccatiSolution:
    """Integrate the six coefficient equations backward from T to 0.

    Classical fixed-step RK4; A00 and A11 are re-symmetrized ((M + M^T)/2)
    after every stage unless ``symmetrize=False`` (diagnostic mode). Raises
    BlowUpError as soon as any intermediate state exceeds ``blowup_bound`` in
    max-entry norm, which signals finite-time explosion of the Riccati flow.
    """
    d0, d = params.d0, params.d
    if term.a00F.shape != (d0, d0) or term.a11F.shape != (d, d) or term.a10F.shape != (d, d0):
        raise ValidationError("terminal liability shapes inconsistent with model dims")
    if pop.x0i_mean.shape != (d,):
        raise ValidationError("population x0i_mean inconsistent with model dims")
    if grid.horizon != params.horizon:
        raise GridMismatchError(f"grid horizon {grid.horizon} != model horizon {params.horizon}")

    ss0 = np.ascontiguousarray(params.sigma0 @ params.sigma0.T)
    ss1 = np.ascontiguousarray(params.sigma_idio @ params.sigma_idio.T)
    out = _kernels.riccati_backward(
        np.ascontiguousarray(term.a00F), np.ascontiguousarray(term.a11F),
        np.ascontiguousarray(term.a10F), np.ascontiguousarray(term.b0F),
        np.ascontiguousarray(term.b1F), float(term.cF),
        params.gamma, params.k0, params.k,
        np.ascontiguousarray(params.m0_vec), np.ascontiguousarray(params.m_vec),
        ss0, ss1, np.ascontiguousarray(pop.x0i_mean),
        grid.horizon, grid.n_steps, float(blowup_bound), symmetrize,
    )
    a00, a11, a10, b0, b1, c, da00, da11, da10, db0, db1, dc, status, blow_index = out
    if status == _kernels.STATUS_BLOWUP:
        t_blow = blow_index * grid.dt
        raise BlowUpError(
            f"coefficient ODE exceeded norm bound {blowup_bound:g} near t={t_blow:.6g} "
            "(finite-time Riccati explosion)"
        )

    h = grid.dt
    mid = {}
    for name, y, dy in (("a00", a00, da00), ("a11", a11, da11), ("a10", a10, da10),
                        ("b0", b0, db0), ("b1", b1, db1), ("c", c, dc)):
        mid[name] = _hermite_mid(y, dy, h)
    # keep the symmetric class exact at midpoints too
    mid["a00"] = 0.5 * (mid["a00"] + np.swapaxes(mid["a00"], -1, -2))
    mid["a11"] = 0.5 * (mid["a11"] + np.swapaxes(mid["a11"], -1, -2))
    mu_mid = _mu1_at(params, pop, grid.times()[:-1] + h / 2.0)
    dmid = rhs_reference(params, mu_mid, mid["a00"], mid["a11"], mid["a10"], mid["b0"], mid["b1"])

    mu1, dmu1 = factor_mean_path(params, pop, grid)
    sol = RiccatiSolution(
        grid=grid, params=params, term=term, pop=pop,
        a00_half=_interleave(a00, mid["a00"]),
        a11_half=_interleave(a11, mid["a11"]),
        a10_half=_interleave(a10, mid["a10"]),
        b0_half=_interleave(b0, mid["b0"]),
        b1_half=_interleave(b1, mid["b1"]),
        c_half=_interleave(c, mid["c"]),
        da00_half=_interleave(da00, dmid[0]),
        da11_half=_interleave(da11, dmid[1]),
        da10_half=_interleave(da10, dmid[2]),
        db0_half=_interleave(db0, dmid[3]),
        db1_half=_interleave(db1, dmid[4]),
        dc_half=_interleave(dc, dmid[5]),
        mu1=mu1, dmu1=dmu1,
    )
    for arr in (sol.a00_half, sol.a11_half, sol.a10_half, sol.b0_half, sol.b1_half, sol.c_half):
        if not np.all(np.isfinite(arr)):
            raise BlowUpError("non-finite values in the integrated coefficient paths")
    return sol


def scalar_a11_oracle(gamma: float, sigma_idio_scalar: float, k: float,
                      a11F: float, t, horizon: float):
    """Closed form for the decoupled scalar A11 equation.

    The Bernoulli substitution u = 1/A11 linearizes
    dA11/dt = -gamma Sigma^2 A11^2 + 2 K A11 into du/dt = -2 K u + gamma Sigma^2,
    giving A11(t) = 1 / ((1/a11F - gamma Sigma^2/(2K)) e^{-2K(t-T)} + gamma Sigma^2/(2K)).
    Raises BlowUpError when the denominator crosses zero inside [0, T].
    """
    if a11F == 0.0:
        raise ValidationError("scalar_a11_oracle requires a11F != 0 (the zero solution is trivial)")
    t = np.asarray(t, dtype=np.float64)
    q = gamma * sigma_idio_scalar**2 / (2.0 * k)
    u = (1.0 / a11F - q) * np.exp(-2.0 * k * (t - horizon)) + q
    # the reciprocal blows up where u crosses zero; check the whole interval
    u0 = (1.0 / a11F - q) * math.exp(2.0 * k * horizon) + q
    uT = 1.0 / a11F
    if u0 == 0.0 or uT == 0.0 or (u0 < 0) != (uT < 0):
        raise BlowUpError("scalar A11 closed form blows up inside [0, T] (1/A11 crosses zero)")
    if np.any(u == 0.0):
        raise BlowUpError("scalar A11 closed form blows up at a requested time")
    return 1.0 / u


def residual(sol: RiccatiSolution, params: ModelParams, term: TerminalLiability,
             pop: AgentPopulation) -> float:
    """Max-entry central-difference defect of the six equations at interior nodes.

    Uses the independent vectorized right-hand sides, not the integrator's
    stored derivatives.
    """
    grid = sol.grid
    if grid.n_steps < 2:
        raise ValidationError("residual needs a grid with at least 3 nodes")
    h = grid.dt
    mu1, _ = factor_mean_path(params, pop, grid)
    rhs = rhs_reference(params, mu1, sol.a00, sol.a11, sol.a10, sol.b0, sol.b1)
    worst = 0.0
    for y, dy in zip((sol.a00, sol.a11, sol.a10, sol.b0, sol.b1, sol.c), rhs):
        fd = (y[2:] - y[:-2]) / (2.0 * h)
        worst = max(worst, float(np.abs(fd - dy[1:-1]).max()))
    return worst
