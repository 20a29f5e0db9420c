"""Constant-rate reduction: two coupled ODEs for the phase totals.

    N1' = -(k + c1_tot N1 + c2_tot N2) N1 + b N1 + bt N2
    N2' = -(d + ct1 N1 + ct2 N2) N2 + (k + eta1 N1 + eta2 N2) N1

Positive equilibria are found by eliminating N1 between the two
stationarity polynomials; the resulting cubic in N2 is solved in closed
form and each positive root is lifted back to a pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AgeGrid, Competition, ModelParams
from .errors import (AmbiguousSteadyState, DivergedError, DomainError, NoPositiveSteadyState,
                     NoSteadyState)


@dataclass(frozen=True)
class OdeParams:
    b: float
    btilde: float
    k: float
    d: float
    eta1: float = 0.0
    eta2: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    ctilde1: float = 0.0
    ctilde2: float = 0.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            v = float(v)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be a nonnegative number, got {v}")
            object.__setattr__(self, name, v)

    @property
    def c1_tot(self) -> float:
        return self.eta1 + self.c1

    @property
    def c2_tot(self) -> float:
        return self.eta2 + self.c2

    @property
    def reproduction(self) -> float:
        """b/k + bt/d; the positive equilibrium exists when this exceeds 1."""
        return self.b / self.k + self.btilde / self.d

    def competition(self) -> Competition:
        return Competition(self.eta1, self.eta2, self.c1, self.c2, self.ctilde1, self.ctilde2)

    @classmethod
    def from_model(cls, params: ModelParams) -> "OdeParams":
        rates = (params.b, params.btilde, params.k, params.d)
        if not all(f.is_constant() for f in rates):
            raise DomainError("the ODE reduction needs constant rates")
        c = params.competition
        return cls(*(f.values[0] for f in rates), c.eta1, c.eta2, c.c1, c.c2,
                   c.ctilde1, c.ctilde2)

    def to_model(self, grid: AgeGrid) -> ModelParams:
        return ModelParams.constant(grid, self.b, self.btilde, self.k, self.d,
                                    competition=self.competition())

    def require_exits(self):
        if not (self.k > 0 and self.d > 0):
            raise DomainError("k and d must be positive")


def ode_rhs(state, params: OdeParams):
    N1, N2 = state
    p = params
    dN1 = -(p.k + p.c1_tot * N1 + p.c2_tot * N2) * N1 + p.b * N1 + p.btilde * N2
    dN2 = -(p.d + p.ctilde1 * N1 + p.ctilde2 * N2) * N2 + (p.k + p.eta1 * N1 + p.eta2 * N2) * N1
    return dN1, dN2


@dataclass(frozen=True)
class OdeTrajectory:
    times: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    clip_events: int

    @property
    def final(self):
        return self.N1[..., -1], self.N2[..., -1]


def integrate_ode(params: OdeParams, init, t_end: float, dt: float = 0.01,
                  record_every: int = 1) -> OdeTrajectory:
    """Classical RK4.  ``init`` may be a pair or a (2, m) batch of pairs."""
    y = np.array(init, dtype=float)
    if y.shape[0] != 2:
        raise DomainError("init must have two components")
    if np.any(y < 0):
        raise DomainError("initial values must be nonnegative")
    n = int(round(t_end / dt))

    def f(v):
        return np.array(ode_rhs(v, params))

    times = [0.0]
    rec = [y.copy()]
    clips = 0
    for i in range(1, n + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergedError(f"ODE integration diverged after t = {(i - 1) * dt:g}",
                                (i - 1) * dt)
        neg = y < 0
        if np.any(neg):
            clips += int(np.count_nonzero(neg))
            y[neg] = 0.0
        if i % record_every == 0 or i == n:
            times.append(i * dt)
            rec.append(y.copy())
    arr = np.stack(rec, axis=-1)
    return OdeTrajectory(np.array(times), arr[0], arr[1], clips)


@dataclass(frozen=True)
class ResultantCubic:
    A3: float
    A2: float
    A1: float
    A0: float

    def __call__(self, Y):
        return ((self.A3 * Y + self.A2) * Y + self.A1) * Y + self.A0

    def coeffs(self):
        return (self.A3, self.A2, self.A1, self.A0)


def resultant_coefficients(params: OdeParams) -> ResultantCubic:
    """Coefficients of the cubic P(N2) whose roots carry the equilibria.

    The resultant in N1 of the two stationarity polynomials equals -Y P(Y).
    """
    p = params
    c1t, c2t = p.c1_tot, p.c2_tot
    e1 = p.eta1
    ct2 = p.ctilde2
    b, bt, k, d = p.b, p.btilde, p.k, p.d
    e = p.ctilde1 - p.eta2
    bk = b - k
    A3 = c1t * c2t * ct2 * e - c1t ** 2 * ct2 ** 2 + e1 * c2t ** 2 * ct2
    A2 = (2 * c1t * e1 * bt * ct2 + c1t * c2t * d * e - c1t * ct2 * (bk * e + k * c2t)
          - 2 * d * c1t ** 2 * ct2 + bt * c1t * e ** 2 + bt * e * e1 * c2t
          + e1 * d * c2t ** 2 - 2 * bk * c2t * e1 * ct2)
    A1 = (2 * e1 * d * bt * c1t - c1t * d * (bk * e + k * c2t) + c1t * ct2 * k * bk
          - d ** 2 * c1t ** 2 - 2 * bt * k * c1t * e - e1 * bt * (bk * e + k * c2t)
          - 2 * bk * d * e1 * c2t + e1 * ct2 * bk ** 2 - bt ** 2 * e1 ** 2)
    A0 = k * d * (bt / d + b / k - 1.0) * (p.c1 * k + b * e1)
    return ResultantCubic(A3, A2, A1, A0)


def _newton_polish(coeffs, x, steps=2):
    a3, a2, a1, a0 = coeffs
    for _ in range(steps):
        fx = ((a3 * x + a2) * x + a1) * x + a0
        dfx = (3 * a3 * x + 2 * a2) * x + a1
        if dfx == 0:
            break
        nx = x - fx / dfx
        if abs(((a3 * nx + a2) * nx + a1) * nx + a0) > abs(fx):
            break
        x = nx
    return x


def real_cubic_roots(a3: float, a2: float, a1: float, a0: float) -> list[float]:
    """Real roots of a3 x^3 + a2 x^2 + a1 x + a0, ascending.

    Falls back to the quadratic and linear cases when leading coefficients vanish.
    """
    scale = max(abs(a3), abs(a2), abs(a1), abs(a0))
    if scale == 0:
        raise DomainError("zero polynomial")
    if abs(a3) <= 1e-14 * scale:
        return _real_quadratic_roots(a2, a1, a0)
    a, b, c = a2 / a3, a1 / a3, a0 / a3
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    shift = -a / 3.0
    if disc > 0:
        s = math.sqrt(disc)
        w = -q / 2.0 + s if q <= 0 else -q / 2.0 - s
        u = math.copysign(abs(w) ** (1.0 / 3.0), w)
        if u != 0:
            v = -p / (3.0 * u)
            # u + v cancels when q is small; use u^3 + v^3 = -q instead
            t = -q / (u * u - u * v + v * v)
        else:
            t = 0.0
        roots = [t + shift]
    elif p >= 0:
        # disc underflowed with p and q both negligible
        roots = [shift - math.copysign(abs(q) ** (1.0 / 3.0), q)]
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [r * math.cos(theta - 2.0 * math.pi * j / 3.0) + shift for j in range(3)]
    # polish the largest root, deflate, and take the rest from a stable quadratic
    coeffs = (a3, a2, a1, a0)
    r = _newton_polish(coeffs, max(roots, key=abs), steps=4)
    terms = abs(a3 * r ** 3) + abs(a2 * r * r) + abs(a1 * r) + abs(a0)
    if r != 0 and abs(((a3 * r + a2) * r + a1) * r + a0) <= 1e-10 * terms:
        # forward (Horner) deflation is the stable direction for the largest root
        q1 = a2 + r * a3
        q0 = a1 + r * q1
        rest = _real_quadratic_roots(a3, q1, q0)
    elif r == 0:
        rest = _real_quadratic_roots(a3, a2, a1)
    else:
        # deflating by an inaccurate root is worse than keeping the closed form
        rest = sorted(roots, key=abs)[:-1]
    return sorted([r] + [_newton_polish(coeffs, x) for x in rest])


def _real_quadratic_roots(a: float, b: float, c: float) -> list[float]:
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0:
        return []
    if abs(a) <= 1e-14 * scale:
        if b == 0:
            return []
        return [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        if disc >= -1e-12 * b * b:
            return [-b / (2 * a)] * 2
        return []
    s = math.sqrt(disc)
    qq = -0.5 * (b + math.copysign(s, b)) if b != 0 else -0.5 * s
    if qq == 0:
        return [0.0, 0.0]
    return sorted((qq / a, c / qq))


def stationarity_residuals(params: OdeParams, N1: float, N2: float) -> tuple[float, float]:
    p = params
    r1 = p.c1_tot * N1 ** 2 + N1 * (p.k + p.c2_tot * N2 - p.b) - p.btilde * N2
    r2 = (-p.eta1 * N1 ** 2 + N1 * (N2 * (p.ctilde1 - p.eta2) - p.k)
          + p.ctilde2 * N2 ** 2 + p.d * N2)
    return r1, r2


def phase1_from_phase2(params: OdeParams, Y: float) -> float:
    """Positive root in N1 of the first stationarity polynomial at N2 = Y."""
    p = params
    B = p.k - p.b + p.c2_tot * Y
    C = p.btilde * Y
    if C <= 0:
        return -B / p.c1_tot
    s = math.sqrt(B * B + 4.0 * p.c1_tot * C)
    if B >= 0:
        return 2.0 * C / (B + s)
    return (s - B) / (2.0 * p.c1_tot)


def _polish_pair(params: OdeParams, N1: float, N2: float, steps: int = 3):
    p = params
    x = np.array([N1, N2])
    best = x.copy()
    best_res = max(abs(r) for r in stationarity_residuals(p, *x))
    for _ in range(steps):
        r = np.array(stationarity_residuals(p, *x))
        J = np.array([
            [2 * p.c1_tot * x[0] + p.k + p.c2_tot * x[1] - p.b, p.c2_tot * x[0] - p.btilde],
            [-2 * p.eta1 * x[0] + x[1] * (p.ctilde1 - p.eta2) - p.k,
             x[0] * (p.ctilde1 - p.eta2) + 2 * p.ctilde2 * x[1] + p.d],
        ])
        try:
            x = x - np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        res = max(abs(v) for v in stationarity_residuals(p, *x))
        if res < best_res:
            best, best_res = x.copy(), res
    return float(best[0]), float(best[1])


@dataclass(frozen=True)
class OdeSteadyState:
    N1s: float
    N2s: float
    residuals: tuple[float, float]
    branch: dict
    cubic: ResultantCubic
    roots: tuple = field(default_factory=tuple)


def steady_state_ode(params: OdeParams, tol: float = 1e-9) -> OdeSteadyState:
    p = params
    p.require_exits()
    if not (p.c1_tot > 0 and p.ctilde2 > 0):
        raise DomainError("steady-state analysis needs c1_tot > 0 and ctilde2 > 0")
    if p.reproduction <= 1:
        raise NoPositiveSteadyState(
            f"b/k + bt/d = {p.reproduction:.6g} <= 1: only the trivial equilibrium")
    cubic = resultant_coefficients(p)
    roots = real_cubic_roots(*cubic.coeffs())
    accepted = []
    for idx, Y in enumerate(roots):
        if not Y > 0:
            continue
        N1 = phase1_from_phase2(p, Y)
        if not N1 > 0:
            continue
        N1, N2 = _polish_pair(p, N1, Y)
        res = tuple(abs(r) for r in stationarity_residuals(p, N1, N2))
        if N1 > 0 and N2 > 0 and max(res) <= tol * (1.0 + abs(N1) + abs(N2)):
            if any(abs(N1 - a.N1s) + abs(N2 - a.N2s) <= 1e-8 * (1 + N1 + N2) for a in accepted):
                continue
            branch = {"root_index": idx, "n_real_roots": len(roots), "N1_branch": "positive"}
            accepted.append(OdeSteadyState(N1, N2, res, branch, cubic, tuple(roots)))
    if not accepted:
        raise NoSteadyState(f"no admissible positive pair among cubic roots {roots}")
    if len(accepted) > 1:
        raise AmbiguousSteadyState(
            f"{len(accepted)} admissible positive pairs", [(a.N1s, a.N2s) for a in accepted])
    return accepted[0]


def dulac_divergence(params: OdeParams, N1, N2):
    """Divergence of the field multiplied by 1/(N1 N2)."""
    N1 = np.asarray(N1, dtype=float)
    N2 = np.asarray(N2, dtype=float)
    if np.any(N1 <= 0) or np.any(N2 <= 0):
        raise DomainError("Dulac divergence is defined on the open positive quadrant")
    p = params
    out = -p.c1_tot / N2 - p.btilde / N1 ** 2 - p.ctilde2 / N1 - p.k / N2 ** 2
    return float(out) if out.ndim == 0 else out


def asymptotic_small_btilde(params: OdeParams) -> tuple[float, float]:
    """Leading-order equilibrium as bt -> 0 when b <= k."""
    p = params
    p.require_exits()
    if p.b - p.k > 0:
        raise DomainError("asymptotics need b <= k")
    if not p.btilde * p.k / p.d + p.b - p.k > 0:
        raise DomainError("asymptotics need bt k / d + b - k > 0")
    denom = p.c1_tot * p.d + p.c2_tot * p.k
    if denom <= 0:
        raise DomainError("asymptotics need c1_tot d + c2_tot k > 0")
    N1 = (p.btilde * p.k + p.d * (p.b - p.k)) / denom
    return N1, p.k / p.d * N1


def sign_changes(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
