"""Hybrid reduction: age-structured phase 1 coupled to an ODE for phase 2.

With no births from phase 2 and a constant phase-2 death rate d, the
phase-2 density only enters through its total N2, giving

    d_t n1 + d_a n1 = -(k(a) + c1_tot N1 + c2_tot N2) n1,   n1(t,0) = int b n1
    N2' = -(d + ct1 N1 + ct2 N2) N2 + int (k + eta1 N1 + eta2 N2) n1

The positive equilibrium satisfies c1_tot N1 + c2_tot N2 = lambda0, which
turns the N2 balance into a quadratic A Y^2 + B Y + C = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (AgeFunction, Competition, ModelParams, cumulative_hazard, integrate,
                   survival)
from .errors import (AmbiguousSteadyState, ConfigError, DivergedError, DomainError,
                     NoPositiveRoot, NoPositiveSteadyState, NoSteadyState)
from .pde_full import SolverConfig, Trajectory, n_steps_for
from .spectral import RenewalMap, growth_rate

CASE_A_POSITIVE = "A_positive_two_roots"
CASE_A_NONPOSITIVE = "A_nonpositive_one_root"
CASE_C2TOT_ZERO = "c2tot_zero"


def hybrid_death_rate(params: ModelParams) -> float:
    """Validate the hybrid specialization and return the constant d."""
    if not params.btilde.is_zero():
        raise ConfigError("the hybrid model needs btilde == 0")
    if not params.d.is_constant():
        raise ConfigError("the hybrid model needs a constant phase-2 death rate d")
    return float(params.d.values[0])


@dataclass(frozen=True)
class HybridState:
    t: float
    n1: AgeFunction
    N1: float
    N2: float

    @property
    def grid(self):
        return self.n1.grid


def hybrid_state(params: ModelParams, n1, N2: float, t: float = 0.0) -> HybridState:
    if not isinstance(n1, AgeFunction):
        n1 = AgeFunction(params.grid, n1)
    if N2 < 0:
        raise DomainError("N2 must be nonnegative")
    return HybridState(float(t), n1, integrate(n1), float(N2))


def simulate_hybrid(params: ModelParams, init: HybridState, cfg: SolverConfig) -> Trajectory:
    """n1 by the unit-CFL transport step, N2 by explicit Euler in lockstep.

    Summary columns: S1, S2 hold N1, N2 (no kernels in this reduction), B1 the
    boundary value n1(t,0) and B2 the transition flux into phase 2.
    """
    d = hybrid_death_rate(params)
    grid = params.grid
    if init.grid != grid:
        raise DomainError("initial state and params live on different grids")
    if cfg.dt is not None and not math.isclose(cfg.dt, grid.da, rel_tol=1e-12):
        raise ConfigError(f"dt must equal da = {grid.da}, got {cfg.dt}")
    comp = params.competition
    h = grid.da
    w = grid.weights
    s1 = np.exp(-np.diff(cumulative_hazard(params.k).values))
    b = params.b.values
    wb = (w * b)[1:]
    wk = w * params.k.values
    D = 1.0 - 0.5 * h * b[0]
    if D <= 0:
        raise DomainError("age step too coarse for the boundary fill")

    n = n_steps_for(grid, cfg.t_end)
    n1 = init.n1.values.copy()
    y = np.empty_like(n1)
    N1 = float(np.dot(w, n1))
    N2 = init.N2
    times = init.t + h * np.arange(n + 1)
    cols = np.empty((6, n + 1))

    def flux(n1, N1, N2):
        return float(np.dot(wk, n1)) + (comp.eta1 * N1 + comp.eta2 * N2) * N1

    cols[:, 0] = (N1, N2, N1, N2, n1[0], flux(n1, N1, N2))
    mass0 = N1 + N2
    limit = cfg.blowup_factor * mass0 if mass0 > 0 else math.inf
    states = [HybridState(init.t, init.n1, N1, N2)]
    for i in range(1, n + 1):
        e1 = math.exp(-h * (comp.c1_tot * N1 + comp.c2_tot * N2))
        np.multiply(n1[:-1], s1, out=y[1:])
        y[1:] *= e1
        y[0] = float(np.dot(wb, y[1:])) / D
        F = flux(n1, N1, N2)
        N2 = N2 + h * (-(d + comp.ctilde1 * N1 + comp.ctilde2 * N2) * N2 + F)
        n1, y = y, n1
        N1 = float(np.dot(w, n1))
        if not (math.isfinite(N1) and math.isfinite(N2)) or N1 + N2 > limit or N2 < 0:
            partial = Trajectory(times[:i].copy(), *(c[:i].copy() for c in cols),
                                 states=tuple(states))
            why = "negative N2 (step too large)" if N2 < 0 else "diverged"
            raise DivergedError(f"hybrid simulation {why} after t = {times[i - 1]:g}",
                                float(times[i - 1]), partial)
        cols[:, i] = (N1, N2, N1, N2, n1[0], flux(n1, N1, N2))
        if i % cfg.record_every == 0 or i == n:
            states.append(HybridState(float(times[i]), AgeFunction(grid, n1), N1, N2))
    return Trajectory(times, *cols, states=tuple(states))


@dataclass(frozen=True)
class HybridSteadyState:
    lambda0: float
    I: float
    kappa0: float
    kappa0_identity_gap: float
    A: float
    B: float
    C: float
    Delta: float
    case_tag: str
    N1s: float
    N2s: float
    n1_profile: AgeFunction
    candidates: tuple = field(default_factory=tuple)

    @property
    def n1_at0(self) -> float:
        return float(self.n1_profile.values[0])


def _quadratic_roots(A: float, B: float, C: float) -> list[float]:
    scale = max(abs(A), abs(B), abs(C))
    if abs(A) <= 1e-14 * scale:
        return [] if B == 0 else [-C / B]
    disc = B * B - 4 * A * C
    if disc < 0:
        return []
    s = math.sqrt(disc)
    q = -0.5 * (B + math.copysign(s, B)) if B != 0 else -0.5 * s
    if q == 0:
        return [0.0]
    return sorted((q / A, C / q))


def quadratic_coefficients(comp: Competition, lam0: float, kappa0: float, d: float):
    c1, c2 = comp.c1_tot, comp.c2_tot
    e1, e2 = comp.eta1, comp.eta2
    ct1, ct2 = comp.ctilde1, comp.ctilde2
    rho = c2 / c1
    A = e1 * rho ** 2 + (ct1 - e2) * rho - ct2
    B = -kappa0 * rho - 2 * lam0 * e1 * c2 / c1 ** 2 - (ct1 - e2) * lam0 / c1 - d
    C = (lam0 / c1) * (kappa0 + e1 * lam0 / c1)
    return A, B, C


def steady_state_hybrid(params: ModelParams, lambda0: float | None = None) -> HybridSteadyState:
    d = hybrid_death_rate(params)
    comp = params.competition
    if not comp.c1_tot > 0:
        raise DomainError("the hybrid steady state needs c1_tot > 0")
    if lambda0 is None:
        try:
            gr = growth_rate(params)
        except NoPositiveRoot as exc:
            raise NoPositiveSteadyState(f"{exc}; the trivial state is the equilibrium") from exc
        if gr.degenerate:
            raise NoPositiveSteadyState("R0 = 1: the trivial state is the equilibrium")
        lambda0 = gr.value
    grid = params.grid
    a, w = grid.nodes, grid.weights
    surv = survival(cumulative_hazard(params.k).values, a, lambda0)
    I = float(np.dot(w, surv))
    kappa0 = float(np.dot(w, params.k.values * surv)) / I
    A, B, C = quadratic_coefficients(comp, lambda0, kappa0, d)
    Delta = B * B - 4 * A * C
    c1, c2 = comp.c1_tot, comp.c2_tot
    if c2 == 0:
        tag = CASE_C2TOT_ZERO
    elif A > 0:
        tag = CASE_A_POSITIVE
    else:
        tag = CASE_A_NONPOSITIVE

    scale = max(abs(A), abs(B), abs(C))
    cands = []
    for Y in _quadratic_roots(A, B, C):
        Y = _polish_quadratic(A, B, C, Y)
        N1 = (lambda0 - c2 * Y) / c1
        res = abs((A * Y + B) * Y + C)
        if Y > 0 and N1 > 0 and res <= 1e-10 * scale * max(1.0, Y * Y):
            cands.append((N1, Y))
    if not cands:
        raise NoSteadyState("no positive root of the steady-state quadratic")
    if len(cands) > 1:
        raise AmbiguousSteadyState(f"{len(cands)} admissible steady states", cands)
    N1s, N2s = cands[0]
    profile = AgeFunction(grid, (N1s / I) * surv)
    return HybridSteadyState(
        lambda0=float(lambda0), I=I, kappa0=kappa0,
        kappa0_identity_gap=abs(kappa0 - (1.0 / I - lambda0)),
        A=A, B=B, C=C, Delta=Delta, case_tag=tag, N1s=N1s, N2s=N2s,
        n1_profile=profile, candidates=tuple(cands))


def _polish_quadratic(A, B, C, Y):
    for _ in range(2):
        f = (A * Y + B) * Y + C
        df = 2 * A * Y + B
        if df == 0:
            break
        nY = Y - f / df
        if abs((A * nY + B) * nY + C) >= abs(f):
            break
        Y = nY
    return Y


def discriminant_identity(params: ModelParams, ss: HybridSteadyState) -> float:
    """Largest residual of the two algebraic identities tying B and Delta to A, C."""
    d = hybrid_death_rate(params)
    comp = params.competition
    c2 = comp.c2_tot
    if c2 == 0:
        raise DomainError("the identity needs c2_tot > 0")
    lam, A, B, C, ct2 = ss.lambda0, ss.A, ss.B, ss.C, comp.ctilde2
    r1 = abs(c2 * B - (-lam * A - lam * ct2 - (c2 ** 2 / lam) * C - c2 * d))
    x, y = lam / c2, c2 / lam
    completed = (-x * A - x * ct2 + y * C - d) ** 2 + 4 * y * C * (x * ct2 + d)
    r2 = abs(ss.Delta - completed)
    return max(r1, r2)


def identity_scale(params: ModelParams, ss: HybridSteadyState) -> float:
    d = hybrid_death_rate(params)
    comp = params.competition
    c2, lam = comp.c2_tot, ss.lambda0
    terms = (c2 * ss.B, lam * ss.A, lam * comp.ctilde2, c2 ** 2 / lam * ss.C, c2 * d)
    return max(1.0, max(abs(t) for t in terms) ** 2, abs(ss.Delta))


@dataclass(frozen=True)
class StabilityReport:
    b2_direct: float
    b2_identity: float
    b3_direct: float
    b3_identity: float
    coefficients: tuple
    constant_unsimplified: float
    verdict: str
    determinant_check: float
    trivial_R0: float
    trivial_verdict: str

    @property
    def identities_agree(self) -> bool:
        return (abs(self.b2_direct - self.b2_identity) <= 1e-8 * max(1.0, abs(self.b2_direct))
                and abs(self.b3_direct - self.b3_identity) <= 1e-8 * max(1.0, abs(self.b3_direct)))


def trivial_verdict(params: ModelParams) -> tuple[float, str]:
    R0 = RenewalMap(params)(0.0)
    return R0, ("stable" if R0 < 1 else "unstable")


def characteristic_determinant(params: ModelParams, ss: HybridSteadyState, lam: float) -> float:
    """3x3 determinant of the linearization at a real lam > 0, before simplification."""
    comp = params.competition
    c1, c2 = comp.c1_tot, comp.c2_tot
    grid = params.grid
    G = float(np.dot(grid.weights, survival(cumulative_hazard(params.k).values,
                                            grid.nodes, ss.lambda0 + lam)))
    b2s, b3s = _b_star_direct(params, ss)
    n0, N1, l0 = ss.n1_at0, ss.N1s, ss.lambda0
    a2 = c2 * n0 / lam
    a3 = c1 * n0 / lam
    b1 = -1 + (l0 + lam) * G
    b2 = b2s + lam + (l0 + lam) * G * a2 - l0 * N1 * c2 / lam
    b3 = b3s + (l0 + lam) * G * a3 - l0 * N1 * c1 / lam
    cc1 = -G
    cc2 = c2 * N1 / lam - G * a2
    cc3 = 1 + c1 * N1 / lam - G * a3
    return b2 * cc3 + b1 * cc2 * a3 + cc1 * a2 * b3 - a3 * b2 * cc1 - b3 * cc2 - cc3 * a2 * b1


def _b_star_direct(params, ss):
    c = params.competition
    d = hybrid_death_rate(params)
    N1, N2 = ss.N1s, ss.N2s
    b2 = c.ctilde1 * N1 + 2 * c.ctilde2 * N2 + d - c.eta2 * N1
    b3 = c.ctilde1 * N2 - 2 * c.eta1 * N1 - c.eta2 * N2
    return b2, b3


def stability_verdict(params: ModelParams, ss: HybridSteadyState | None = None) -> StabilityReport:
    R0, triv = trivial_verdict(params)
    if ss is None:
        nan = float("nan")
        return StabilityReport(nan, nan, nan, nan, (), nan, "n/a", nan, R0, triv)
    c = params.competition
    d = hybrid_death_rate(params)
    c1, c2 = c.c1_tot, c.c2_tot
    N1, N2 = ss.N1s, ss.N2s
    kn = integrate(params.k * ss.n1_profile)
    b2, b3 = _b_star_direct(params, ss)
    b2_id = (kn + c.eta1 * N1 ** 2 + c.ctilde2 * N2 ** 2) / N2
    b3_id = (kn - c.ctilde2 * N2 ** 2 - d * N2 - c.eta1 * N1 ** 2) / N1
    lin = b2 + c1 * N1
    const = b2 * c1 * N1 + c2 * (c.ctilde2 * N2 ** 2 + d * N2 + c.eta1 * N1 ** 2)
    const_raw = b2 * c1 * N1 - b3 * c2 * N1 + c2 * ss.n1_at0 - ss.lambda0 * c2 * N1
    coeffs = (1.0, lin, const)
    verdict = "stable" if lin > 0 and const > 0 else "not stable"

    worst = 0.0
    for lam in (0.25, 1.0, 4.0):
        lam = lam * max(ss.lambda0, 1e-3)
        det = characteristic_determinant(params, ss, lam)
        quad = (lam * lam + lin * lam + const) / lam
        worst = max(worst, abs(det - quad) / max(1.0, abs(quad)))
    return StabilityReport(b2, b2_id, b3, b3_id, coeffs, const_raw, verdict, worst, R0, triv)


@dataclass(frozen=True)
class SensitivityReport:
    analytic: float
    finite_difference: float
    R: float
    inv_lambda_I: float
    A: float


def _ratio(ss):
    return ss.N2s / (ss.N1s + ss.N2s)


def rescaled_for_lambda(params: ModelParams, lam: float) -> ModelParams:
    """Rescale b so that the growth rate becomes lam (solves a linear 1-D equation)."""
    grid = params.grid
    G = float(np.dot(grid.weights, params.b.values
                     * survival(cumulative_hazard(params.k).values, grid.nodes, lam)))
    return params.replace(b=params.b * (1.0 / G))


def smurf_ratio_sensitivity(params: ModelParams, ss: HybridSteadyState | None = None,
                            h: float = 1e-4) -> SensitivityReport:
    """d/d lambda0 of N2*/(N1*+N2*): closed form and a Richardson finite difference."""
    if ss is None:
        ss = steady_state_hybrid(params)
    c = params.competition
    d = hybrid_death_rate(params)
    c1, c2 = c.c1_tot, c.c2_tot
    A, B, Delta, lam = ss.A, ss.B, ss.Delta, ss.lambda0
    if abs(A) <= 1e-12 * max(1.0, abs(B), abs(ss.C)):
        raise DomainError("sensitivity formula needs A != 0")
    grid = params.grid
    surv = ss.n1_profile.values / ss.n1_at0
    R = float(np.dot(grid.weights, grid.nodes * params.k.values * surv)) / (lam * ss.I ** 2)
    sq = math.sqrt(Delta)
    tot = ss.N1s + ss.N2s
    analytic = lam / (c1 * tot ** 2) * (
        (1.0 / (2 * A)) * (d / lam + R * c2 / c1) * (-1.0 - B / sq) - lam * R / (c1 * sq))

    def ratio_at(l):
        return _ratio(steady_state_hybrid(rescaled_for_lambda(params, l), lambda0=l))

    def central(step):
        return (ratio_at(lam + step) - ratio_at(lam - step)) / (2 * step)

    fd = (4 * central(h / 2) - central(h)) / 3
    return SensitivityReport(analytic, fd, R, 1.0 / (lam * ss.I), A)


@dataclass(frozen=True)
class ComparisonReport:
    N_star: float
    N1s: float
    N2s: float
    N1ss: float
    N2ss: float
    sum_ge: bool | None
    n1_order: bool
    n2_order: bool
    total_order_iff: bool
    total_identity_gap: float


def one_phase_and_comparisons(params: ModelParams, tol: float = 1e-10) -> ComparisonReport:
    c = params.competition
    R0, _ = trivial_verdict(params)
    ss = steady_state_hybrid(params)
    N_star = ss.lambda0 / c.c1_tot if R0 > 1 else 0.0
    plain = Competition(0.0, 0.0, c.c1_tot, c.c2_tot, c.ctilde1, c.ctilde2)
    ss0 = steady_state_hybrid(params.replace(competition=plain), lambda0=ss.lambda0)
    tot, tot0 = ss.N1s + ss.N2s, ss0.N1s + ss0.N2s
    slack = tol * max(1.0, tot)
    sum_ge = (tot >= N_star - slack) if c.c2_tot <= c.c1_tot else None
    gap = abs(tot - (ss.lambda0 / c.c1_tot + (1 - c.c2_tot / c.c1_tot) * ss.N2s))
    return ComparisonReport(
        N_star=N_star, N1s=ss.N1s, N2s=ss.N2s, N1ss=ss0.N1s, N2ss=ss0.N2s, sum_ge=sum_ge,
        n1_order=ss0.N1s >= ss.N1s - slack,
        n2_order=ss0.N2s <= ss.N2s + slack,
        total_order_iff=(c.c2_tot <= c.c1_tot) == (tot0 <= tot + slack),
        total_identity_gap=gap)


def rate_series(params: ModelParams, states) -> tuple[np.ndarray, np.ndarray]:
    """lambda(n1,t) = int (b-k) n1 / N1 and kappa(n1,t) = int k n1 / N1 per state."""
    w = params.grid.weights
    bk = w * (params.b.values - params.k.values)
    kk = w * params.k.values
    lam_t, kap_t = [], []
    for s in states:
        n1 = s.n1.values
        N1 = float(np.dot(w, n1))
        if N1 > 0:
            lam_t.append(float(np.dot(bk, n1)) / N1)
            kap_t.append(float(np.dot(kk, n1)) / N1)
        else:
            lam_t.append(float("nan"))
            kap_t.append(float("nan"))
    return np.array(lam_t), np.array(kap_t)


def measure_t0(times, lam_t, threshold: float, run: int = 5) -> float | None:
    ok = lam_t >= threshold
    count = 0
    for i, flag in enumerate(ok):
        count = count + 1 if flag else 0
        if count == run:
            return float(times[i - run + 1])
    return None


@dataclass(frozen=True)
class BoundsReport:
    N1_bar: float
    N2_bar: float
    N2_bar_printed: float
    N1_under: float
    M_margin: float | None
    t0_estimate: float | None
    rates_assumption_flags: dict
    audit: dict


def bounds_and_assumptions(params: ModelParams, init: HybridState, traj: Trajectory | None = None,
                           ss: HybridSteadyState | None = None,
                           M: float | None = None) -> BoundsReport:
    d = hybrid_death_rate(params)
    c = params.competition
    k_low = params.k.inf()
    if not k_low > 0:
        raise DomainError("bounds need k bounded below by a positive constant")
    if ss is None:
        ss = steady_state_hybrid(params)
    lam = ss.lambda0
    c1, c2 = c.c1_tot, c.c2_tot
    bsup, ksup = params.b.sup(), params.k.sup()
    N1_0, N2_0 = init.N1, init.N2

    N1_bar = max(N1_0, (bsup - k_low) / c1)
    denom = d - c.eta2 * N1_bar
    if denom > 0:
        N2_bar = max(N2_0, (ksup * N1_bar + c.eta1 * N1_bar ** 2) / denom)
        N2_bar_printed = max(N2_0, (ksup + c.eta1 * N1_bar ** 2) / denom)
    else:
        N2_bar = N2_bar_printed = math.inf

    if M is None:
        if c2 == 0:
            M = 2.0
        else:
            M_sup = lam / (c2 * N2_bar)
            M = math.sqrt(M_sup) if M_sup > 1 else None
    if M is not None and not (M > 1 and c2 * N2_bar < lam / M):
        M = None
    if M is not None:
        N1_under = min(lam / (M * (bsup - k_low)) if bsup > k_low else math.inf,
                       (lam / M - c2 * N2_bar) / c1)
    else:
        N1_under = float("nan")

    N1s, N2s = ss.N1s, ss.N2s
    N2_under = 0.0
    ct1, ct2, e1, e2 = c.ctilde1, c.ctilde2, c.eta1, c.eta2
    if c2 == 0:
        flag2 = True
    elif ct1 > 0 and M is not None:
        flag2 = c1 / c2 >= ((ksup + ct1 * N2_bar + e2 * N2s + e1 * N1s) / (2 * ct1 * N1_under)
                            + e1 / (2 * ct1))
    else:
        flag2 = False
    flag3 = d >= -0.5 * ((ksup + 2 * e2 + e1) * N1_bar + ct1 * N2_bar - 2 * ct2 * N2_under
                         + (e2 - 2 * ct2) * N2s + (e1 - ct1) * N1s)
    flags = {
        "i": d >= e1 * N1_bar,
        "ii": bool(flag2),
        "iii": bool(flag3),
        "iv": M is not None,
        "N2_bar_finite": math.isfinite(N2_bar),
    }

    audit = {}
    t0 = None
    if traj is not None:
        lam_t, _ = rate_series(params, traj.states)
        rec_t = traj.record_times
        if M is not None:
            t0 = measure_t0(rec_t, lam_t, lam / M)
        eps = 1e-12
        sup1, sup2 = float(traj.N1.max()), float(traj.N2.max())
        audit["sup_N1"] = sup1
        audit["sup_N2"] = sup2
        audit["sup_N1_ok"] = sup1 <= N1_bar * (1 + eps)
        audit["sup_N2_ok"] = sup2 <= N2_bar * (1 + eps)
        if t0 is not None and math.isfinite(N1_under):
            after = traj.N1[traj.times >= t0 - 1e-12]
            inf1 = float(after.min())
            audit["inf_N1_after_t0"] = inf1
            audit["inf_N1_ok"] = inf1 >= N1_under * (1 - eps)
        else:
            audit["inf_N1_after_t0"] = None
            audit["inf_N1_ok"] = None
    return BoundsReport(N1_bar, N2_bar, N2_bar_printed, N1_under, M, t0, flags, audit)


@dataclass(frozen=True)
class ConvergenceDiagnostics:
    times: np.ndarray
    lambda_t: np.ndarray
    kappa_t: np.ndarray
    profile_gap: np.ndarray
    lyapunov_V: np.ndarray
    lyapunov_A: np.ndarray
    lyapunov_B: np.ndarray
    lyapunov_C: np.ndarray
    a_win: float
    t0: float | None
    V_monotone_after_t0: bool | None
    weight_defined: bool
    renewal_constant: float

    def at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


def default_age_window(ss: HybridSteadyState) -> float:
    prof = ss.n1_profile.values
    below = np.nonzero(prof < 1e-6 * prof.max())[0]
    nodes = ss.n1_profile.grid.nodes
    return float(nodes[below[0]]) if len(below) else float(nodes[-1])


def convergence_diagnostics(params: ModelParams, traj: Trajectory, ss: HybridSteadyState,
                            a_win: float | None = None, M: float = 2.0,
                            monotone_tol: float = 1e-8) -> ConvergenceDiagnostics:
    d = hybrid_death_rate(params)
    c = params.competition
    c1, c2, ct1 = c.c1_tot, c.c2_tot, c.ctilde1
    if a_win is None:
        a_win = default_age_window(ss)
    nodes = params.grid.nodes
    win = nodes <= a_win + 1e-12
    star = ss.n1_profile.values[win] / ss.N1s

    times = traj.record_times
    lam_t, kap_t = rate_series(params, traj.states)
    gaps, N1, N2 = [], [], []
    for s in traj.states:
        tot = s.N1
        gaps.append(float(np.max(np.abs(s.n1.values[win] / tot - star))) if tot > 0 else math.nan)
        N1.append(s.N1)
        N2.append(s.N2)
    N1, N2 = np.array(N1), np.array(N2)

    weight_defined = ct1 > 0 or c2 == 0
    r = c2 / ct1 if ct1 > 0 else 0.0
    V = 0.5 * (N1 - ss.N1s) ** 2 + 0.5 * r * (N2 - ss.N2s) ** 2
    if c2 > 0 and ct1 == 0:
        nanv = np.full_like(N1, np.nan)
        LA, LB, LC = nanv, nanv, nanv
    else:
        LA = ss.lambda0 - c1 * (N1 + ss.N1s) - c2 * N2
        LB = -r * d - ss.N1s * c2 - r * c.ctilde2 * (N2 + ss.N2s) + r * c.eta2 * N1
        LC = c2 * ss.N1s + r * (kap_t + ct1 * N2 + c.eta2 * ss.N2s + c.eta1 * (N1 + ss.N1s))

    t0 = measure_t0(times, lam_t, ss.lambda0 / M)
    monotone = None
    if t0 is not None:
        idx = times >= t0 - 1e-12
        Vt = V[idx]
        monotone = bool(np.all(np.diff(Vt) <= monotone_tol * Vt[0]))

    # renewal constant: exp(-lambda0 t + int c_tot) n1(t,0) / n1*(0)-shape, at the last step
    press = c1 * traj.N1 + c2 * traj.N2
    integral = float(np.sum(0.5 * (press[1:] + press[:-1]) * np.diff(traj.times)))
    expo = -ss.lambda0 * (traj.times[-1] - traj.times[0]) + integral
    renewal = math.exp(expo) * traj.B1[-1] if expo < 700 else math.inf
    return ConvergenceDiagnostics(
        times=times, lambda_t=lam_t, kappa_t=kap_t, profile_gap=np.array(gaps),
        lyapunov_V=V, lyapunov_A=LA, lyapunov_B=LB, lyapunov_C=LC, a_win=a_win, t0=t0,
        V_monotone_after_t0=monotone, weight_defined=weight_defined,
        renewal_constant=renewal)
