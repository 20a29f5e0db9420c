"""Time stepping for the two-phase age-structured system.

One step of length dt = da: shift every node one cell along the
characteristics, damp by the exact exponential of the hazard accumulated
over the cell plus the competition pressure (frozen at the start of the
step), then fill the two boundary nodes from the renewal integrals of the
shifted densities.  The trapezoid rule includes the boundary node itself,
so the fill is a 2x2 linear solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (AgeFunction, AgeGrid, ModelParams, PopulationState, cumulative_hazard,
                   integrate, survival)
from .errors import ConfigError, DivergedError, DomainError

NONLINEAR = "nonlinear"
LINEAR = "linear"


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    record_every: int = 1
    mode: str = NONLINEAR
    prescribed_S: Callable[[float], tuple[float, float]] | None = None
    dt: float | None = None
    blowup_factor: float = 1e12

    def __post_init__(self):
        if self.mode not in (NONLINEAR, LINEAR):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == LINEAR and self.prescribed_S is None:
            raise ConfigError("linear mode needs a prescribed S(t)")
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    states: tuple = field(default_factory=tuple)

    @property
    def record_times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self):
        return self.states[-1]

    def summary(self) -> dict:
        return {"t": self.times, "N1": self.N1, "N2": self.N2, "S1": self.S1,
                "S2": self.S2, "n1_at_0": self.B1, "n2_at_0": self.B2}


def table_S(times: Sequence[float], S1: Sequence[float], S2: Sequence[float]):
    """Prescribed environment from a time table (linear interpolation)."""
    t = np.asarray(times, dtype=float)
    s1 = np.asarray(S1, dtype=float)
    s2 = np.asarray(S2, dtype=float)
    if np.any(s1 < 0) or np.any(s2 < 0):
        raise ConfigError("prescribed S must be nonnegative")

    def S(time):
        return float(np.interp(time, t, s1)), float(np.interp(time, t, s2))
    return S


class Stepper:
    """Precomputed coefficients for repeated steps on one grid."""

    def __init__(self, params: ModelParams):
        grid = params.grid
        self.params = params
        self.grid = grid
        self.h = grid.da
        w = grid.weights
        self.w = w
        Hk = cumulative_hazard(params.k).values
        Hd = cumulative_hazard(params.d).values
        self.s1 = np.exp(-np.diff(Hk))
        self.s2 = np.exp(-np.diff(Hd))
        b, bt, k = params.b.values, params.btilde.values, params.k.values
        self.b0, self.bt0, self.k0 = b[0], bt[0], k[0]
        self.wb = (w * b)[1:]
        self.wbt = (w * bt)[1:]
        self.wk = (w * k)[1:]
        self.w1 = w[1:]
        self.wpsi1 = w * params.psi1.values
        self.wpsi2 = w * params.psi2.values
        self.has_bt = bool(bt.any())
        self.comp = params.competition

    def aggregates(self, n1, n2):
        return (float(np.dot(self.w, n1)), float(np.dot(self.w, n2)),
                float(np.dot(self.wpsi1, n1)), float(np.dot(self.wpsi2, n2)))

    def advance(self, n1, n2, S1, S2, out1=None, out2=None):
        comp = self.comp
        h = self.h
        e1 = math.exp(-h * comp.c_tot(S1, S2))
        e2 = math.exp(-h * comp.ctilde(S1, S2))
        eta = comp.eta(S1, S2)
        y1 = np.empty_like(n1) if out1 is None else out1
        y2 = np.empty_like(n2) if out2 is None else out2
        np.multiply(n1[:-1], self.s1, out=y1[1:])
        y1[1:] *= e1
        np.multiply(n2[:-1], self.s2, out=y2[1:])
        y2[1:] *= e2
        P1 = float(np.dot(self.wb, y1[1:]))
        if self.has_bt:
            P1 += float(np.dot(self.wbt, y2[1:]))
        P2 = float(np.dot(self.wk, y1[1:]))
        if eta:
            P2 += eta * float(np.dot(self.w1, y1[1:]))
        w0 = 0.5 * h
        keta0 = self.k0 + eta
        D = 1.0 - w0 * self.b0 - w0 * w0 * self.bt0 * keta0
        if D <= 0:
            raise DomainError("age step too coarse for the boundary fill (D <= 0)")
        y1[0] = (P1 + w0 * self.bt0 * P2) / D
        y2[0] = P2 + w0 * keta0 * y1[0]
        return y1, y2


def step(state: PopulationState, params: ModelParams, dt: float | None = None,
         S: tuple[float, float] | None = None) -> PopulationState:
    """Advance one step of length da; S overrides the state's kernel totals."""
    grid = state.grid
    if dt is not None and not math.isclose(dt, grid.da, rel_tol=1e-12):
        raise ConfigError(f"dt must equal da = {grid.da}, got {dt}")
    if params.grid != grid:
        raise DomainError("state and params live on different grids")
    st = Stepper(params)
    S1, S2 = (state.S1, state.S2) if S is None else S
    y1, y2 = st.advance(state.n1.values, state.n2.values, S1, S2)
    return PopulationState.from_densities(state.t + grid.da, AgeFunction(grid, y1),
                                          AgeFunction(grid, y2), params)


def initial_state(params: ModelParams, n1, n2, t: float = 0.0) -> PopulationState:
    grid = params.grid
    if not isinstance(n1, AgeFunction):
        n1 = AgeFunction(grid, n1)
    if not isinstance(n2, AgeFunction):
        n2 = AgeFunction(grid, n2)
    return PopulationState.from_densities(t, n1, n2, params)


def n_steps_for(grid: AgeGrid, t_end: float) -> int:
    return int(round(t_end / grid.da))


def simulate(params: ModelParams, init: PopulationState, cfg: SolverConfig) -> Trajectory:
    grid = params.grid
    if init.grid != grid:
        raise DomainError("initial state and params live on different grids")
    if cfg.dt is not None and not math.isclose(cfg.dt, grid.da, rel_tol=1e-12):
        raise ConfigError(f"dt must equal da = {grid.da}, got {cfg.dt}")
    st = Stepper(params)
    n = n_steps_for(grid, cfg.t_end)
    h = grid.da
    n1 = init.n1.values.copy()
    n2 = init.n2.values.copy()
    buf1, buf2 = np.empty_like(n1), np.empty_like(n2)

    times = init.t + h * np.arange(n + 1)
    cols = np.empty((6, n + 1))
    N1, N2, S1, S2 = st.aggregates(n1, n2)
    cols[:, 0] = (N1, N2, S1, S2, n1[0], n2[0])
    mass0 = N1 + N2
    limit = cfg.blowup_factor * mass0 if mass0 > 0 else math.inf
    states = [init]
    linear = cfg.mode == LINEAR

    for i in range(1, n + 1):
        t_prev = times[i - 1]
        if linear:
            Sa, Sb = cfg.prescribed_S(t_prev)
        else:
            Sa, Sb = S1, S2
        buf1, buf2 = st.advance(n1, n2, Sa, Sb, buf1, buf2)
        n1, buf1 = buf1, n1
        n2, buf2 = buf2, n2
        N1, N2, S1, S2 = st.aggregates(n1, n2)
        if not (math.isfinite(N1) and math.isfinite(N2)) or N1 + N2 > limit:
            partial = _trajectory(times[:i], cols[:, :i], states)
            raise DivergedError(f"simulation diverged after t = {t_prev:g}", t_prev, partial)
        cols[:, i] = (N1, N2, S1, S2, n1[0], n2[0])
        if i % cfg.record_every == 0 or i == n:
            states.append(PopulationState(
                float(times[i]), AgeFunction(grid, n1), AgeFunction(grid, n2), N1, N2, S1, S2))
    return _trajectory(times, cols, states)


def _trajectory(times, cols, states) -> Trajectory:
    return Trajectory(times.copy(), *(c.copy() for c in cols), states=tuple(states))


def steady_residual(params: ModelParams, N1: float, N2: float) -> tuple[float, float]:
    """Residuals of the steady-state renewal system at totals (N1, N2)."""
    if N1 < 0 or N2 < 0:
        raise DomainError("steady totals must be nonnegative")
    grid = params.grid
    a, w = grid.nodes, grid.weights
    comp = params.competition
    ctot = comp.c_tot(N1, N2)
    ct = comp.ctilde(N1, N2)
    eta = comp.eta(N1, N2)
    s1 = survival(cumulative_hazard(params.k).values, a, ctot)
    s2 = survival(cumulative_hazard(params.d).values, a, ct)
    I1 = float(np.dot(w, s1))
    I2 = float(np.dot(w, s2))
    J = float(np.dot(w, (params.k.values + eta) * s1))
    Bt = float(np.dot(w, params.btilde.values * s2))
    Bb = float(np.dot(w, params.b.values * s1))
    r1 = Bt * J + Bb - 1.0
    r2 = N1 * I2 * J - N2 * I1
    return r1, r2


@dataclass(frozen=True)
class SBounds:
    M: float
    M_upper: float
    m_lower: float | None
    N0_tilde: float | None
    note: str


def bounds_S(params: ModelParams, init: PopulationState) -> SBounds:
    """Upper bound on S1+S2 and, when btilde is nonzero, a lower bound."""
    from .spectral import eigenfunctions, gre_mass

    comp = params.competition
    for name, f in (("psi1", params.psi1), ("psi2", params.psi2)):
        if not np.all(np.isfinite(f.values)):
            raise ConfigError(f"kernel {name} is unbounded")
    lo1, lo2 = params.psi1.inf(), params.psi2.inf()
    hi1, hi2 = params.psi1.sup(), params.psi2.sup()
    slope = min(comp.ctilde2 * lo2, comp.c1 * lo1)
    if slope <= 0:
        raise ConfigError(
            "upper bound needs c1 > 0, ctilde2 > 0 and kernels bounded below by a positive constant")
    beta = 2.0 * max(params.b.sup(), params.btilde.sup())
    # min of two linear maps: the crossing is explicit
    M = beta / slope
    M_upper = max(hi1, hi2) * max(2.0 * M, init.N1 + init.N2)

    if params.btilde.is_zero():
        return SBounds(M, M_upper, None, None, "lower bound needs btilde nonzero")
    eig = eigenfunctions(params.without_competition())
    phi1, phi2 = eig.phi1_0.values, eig.phi2_0.values
    psi1, psi2 = params.psi1.values, params.psi2.values

    def ratio_bounds(psi, phi):
        pos = phi > 0
        if not np.all(pos[:-1]):
            return 0.0, math.inf
        r = psi[:-1] / phi[:-1]
        return float(r.min()), float(r.max())

    c10, C10 = ratio_bounds(psi1, phi1)
    c20, C20 = ratio_bounds(psi2, phi2)
    denom = (comp.c1_tot + comp.ctilde1) * C10 + (comp.c2_tot + comp.ctilde2) * C20
    N0_tilde = eig.lambda0 / denom if denom > 0 else math.inf
    N0_init = gre_mass(init, eig)
    m_lower = min(c10, c20) * min(N0_init, N0_tilde)
    return SBounds(M, M_upper, m_lower, N0_tilde, "lower bound certified for this grid only")
