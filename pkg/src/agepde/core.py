"""Age grids, tabulated rates, quadrature and parameter checks.

Every age-dependent quantity lives on a uniform grid of nodes
0, da, ..., a_max.  Integrals use the composite trapezoid rule and
cumulative hazards are accumulated with the same rule, so survival
factors exp(-H) are consistent with the quadrature used elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

TRUNCATION_TOL = 1e-10


@dataclass(frozen=True)
class AgeGrid:
    a_max: float
    n_cells: int

    def __post_init__(self):
        if not (self.a_max > 0 and math.isfinite(self.a_max)):
            raise DomainError(f"a_max must be positive, got {self.a_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise DomainError(f"n_cells must be a positive integer, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def da(self) -> float:
        return self.a_max / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        a = np.arange(self.n_nodes, dtype=float) * self.da
        a[-1] = self.a_max
        return a

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights."""
        w = np.full(self.n_nodes, self.da)
        w[0] = w[-1] = 0.5 * self.da
        return w

    def refine(self, factor: int = 2) -> "AgeGrid":
        return AgeGrid(self.a_max, self.n_cells * factor)


def _freeze(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgeFunction:
    """Nonnegative function tabulated on the nodes of a grid."""

    grid: AgeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.shape != (self.grid.n_nodes,):
            raise DomainError(
                f"expected {self.grid.n_nodes} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("age function has non-finite values")
        if np.any(vals < 0):
            raise DomainError(f"age function has negative values (min {vals.min():g})")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: AgeGrid, value: float) -> "AgeFunction":
        return cls(grid, np.full(grid.n_nodes, float(value)))

    @classmethod
    def from_callable(cls, grid: AgeGrid, fn: Callable) -> "AgeFunction":
        vals = np.asarray(fn(grid.nodes), dtype=float)
        if vals.ndim == 0:
            vals = np.full(grid.n_nodes, float(vals))
        return cls(grid, vals)

    @classmethod
    def from_table(cls, grid: AgeGrid, table: Sequence[Sequence[float]]) -> "AgeFunction":
        """Linear interpolation through (a, v) pairs, held constant outside."""
        pts = np.asarray(table, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
            raise DomainError("table must be a non-empty list of (a, value) pairs")
        if np.any(np.diff(pts[:, 0]) < 0):
            raise DomainError("table ages must be nondecreasing")
        return cls(grid, np.interp(grid.nodes, pts[:, 0], pts[:, 1]))

    @classmethod
    def piecewise(cls, grid: AgeGrid, steps: Sequence[Sequence[float]]) -> "AgeFunction":
        """Piecewise constant: value v_i on [a_i, a_{i+1})."""
        pts = np.asarray(steps, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
            raise DomainError("piecewise spec must be a list of (a_start, value) pairs")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise DomainError("piecewise start ages must be increasing")
        idx = np.searchsorted(pts[:, 0], grid.nodes + 1e-12 * grid.da, side="right") - 1
        vals = np.where(idx >= 0, pts[np.clip(idx, 0, None), 1], 0.0)
        return cls(grid, vals)

    def with_values(self, values) -> "AgeFunction":
        return AgeFunction(self.grid, values)

    def sup(self) -> float:
        return float(self.values.max())

    def inf(self) -> float:
        return float(self.values.min())

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    def __mul__(self, other):
        if isinstance(other, AgeFunction):
            _check_same_grid(self, other)
            return AgeFunction(self.grid, self.values * other.values)
        return AgeFunction(self.grid, self.values * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, AgeFunction):
            _check_same_grid(self, other)
            return AgeFunction(self.grid, self.values + other.values)
        return AgeFunction(self.grid, self.values + float(other))

    __radd__ = __add__


def _check_same_grid(*fns: AgeFunction):
    g = fns[0].grid
    for f in fns[1:]:
        if f.grid != g:
            raise DomainError("age functions live on different grids")


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, AgeFunction) else np.asarray(f, dtype=float)


def integrate(f, grid: AgeGrid | None = None) -> float:
    """Composite trapezoid integral of f over [0, a_max].

    ``f`` is an AgeFunction or a raw array of node values (``grid`` required).
    """
    if isinstance(f, AgeFunction):
        grid = f.grid
        vals = f.values
    else:
        if grid is None:
            raise DomainError("a grid is required to integrate a raw array")
        vals = np.asarray(f, dtype=float)
    if vals.shape[-1] != grid.n_nodes:
        raise DomainError(
            f"integrand has {vals.shape[-1]} nodes, grid has {grid.n_nodes}")
    da = grid.da
    return float(da * (vals.sum(axis=-1) - 0.5 * (vals[..., 0] + vals[..., -1])))


def cumulative_trapezoid(vals: np.ndarray, da: float) -> np.ndarray:
    out = np.empty_like(vals, dtype=float)
    out[0] = 0.0
    np.cumsum(0.5 * da * (vals[1:] + vals[:-1]), out=out[1:])
    return out


def cumulative_hazard(k: AgeFunction) -> AgeFunction:
    """H(a) = int_0^a k, accumulated with the trapezoid rule."""
    if np.any(k.values < 0):
        raise DomainError("hazard rate must be nonnegative")
    h = cumulative_trapezoid(k.values, k.grid.da)
    # cumsum of nonnegative terms is already monotone; this guards round-off
    np.maximum.accumulate(h, out=h)
    return AgeFunction(k.grid, h)


def survival(hazard: np.ndarray, nodes: np.ndarray, lam: float) -> np.ndarray:
    """exp(-(H(a) + lam*a)) node-wise."""
    return np.exp(-(hazard + lam * nodes))


@dataclass(frozen=True)
class Competition:
    """Linear competition coefficients (all per capita, nonnegative)."""

    eta1: float = 0.0
    eta2: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    ctilde1: float = 0.0
    ctilde2: float = 0.0

    def __post_init__(self):
        for name in ("eta1", "eta2", "c1", "c2", "ctilde1", "ctilde2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"competition coefficient {name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def c1_tot(self) -> float:
        return self.eta1 + self.c1

    @property
    def c2_tot(self) -> float:
        return self.eta2 + self.c2

    def eta(self, S1: float, S2: float) -> float:
        return self.eta1 * S1 + self.eta2 * S2

    def c(self, S1: float, S2: float) -> float:
        return self.c1 * S1 + self.c2 * S2

    def ctilde(self, S1: float, S2: float) -> float:
        return self.ctilde1 * S1 + self.ctilde2 * S2

    def c_tot(self, S1: float, S2: float) -> float:
        return self.c1_tot * S1 + self.c2_tot * S2

    def is_zero(self) -> bool:
        return not any((self.eta1, self.eta2, self.c1, self.c2, self.ctilde1, self.ctilde2))


@dataclass(frozen=True)
class ModelParams:
    b: AgeFunction
    btilde: AgeFunction
    k: AgeFunction
    d: AgeFunction
    competition: Competition = field(default_factory=Competition)
    psi1: AgeFunction | None = None
    psi2: AgeFunction | None = None

    def __post_init__(self):
        grid = self.b.grid
        if self.psi1 is None:
            object.__setattr__(self, "psi1", AgeFunction.constant(grid, 1.0))
        if self.psi2 is None:
            object.__setattr__(self, "psi2", AgeFunction.constant(grid, 1.0))
        _check_same_grid(self.b, self.btilde, self.k, self.d, self.psi1, self.psi2)

    @classmethod
    def constant(cls, grid: AgeGrid, b: float, btilde: float, k: float, d: float,
                 competition: Competition | None = None, **coeffs) -> "ModelParams":
        if competition is None:
            competition = Competition(**coeffs)
        elif coeffs:
            raise TypeError("pass either competition or coefficients, not both")
        C = AgeFunction.constant
        return cls(C(grid, b), C(grid, btilde), C(grid, k), C(grid, d), competition)

    @property
    def grid(self) -> AgeGrid:
        return self.b.grid

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace
        return replace(self, **changes)

    def without_competition(self) -> "ModelParams":
        return self.replace(competition=Competition())


@dataclass(frozen=True)
class PopulationState:
    t: float
    n1: AgeFunction
    n2: AgeFunction
    N1: float
    N2: float
    S1: float
    S2: float

    @classmethod
    def from_densities(cls, t: float, n1: AgeFunction, n2: AgeFunction,
                       params: ModelParams | None = None) -> "PopulationState":
        _check_same_grid(n1, n2)
        N1, N2 = integrate(n1), integrate(n2)
        if params is None:
            S1, S2 = N1, N2
        else:
            S1 = integrate(params.psi1.values * n1.values, n1.grid)
            S2 = integrate(params.psi2.values * n2.values, n2.grid)
        return cls(float(t), n1, n2, N1, N2, S1, S2)

    @property
    def grid(self) -> AgeGrid:
        return self.n1.grid

    @property
    def mass(self) -> float:
        return self.N1 + self.N2


@dataclass(frozen=True)
class AssumptionReport:
    R0: float
    R0_quadrature_error: float
    non_extinction: bool
    rates_bounded: bool
    k_lower_bound: float
    truncation_tail: float
    truncation_admissible: bool
    flags: dict


def renewal_integrals(params: ModelParams, lam: float) -> tuple[float, float, float]:
    """(int b e^{-H_k-lam a}, int k e^{-H_k-lam a}, int btilde e^{-H_d-lam a})."""
    grid = params.grid
    a, w = grid.nodes, grid.weights
    Hk = cumulative_hazard(params.k).values
    s1 = survival(Hk, a, lam)
    Ib = float(np.dot(w, params.b.values * s1))
    Ik = float(np.dot(w, params.k.values * s1))
    if params.btilde.is_zero():
        return Ib, Ik, 0.0
    s2 = survival(cumulative_hazard(params.d).values, a, lam)
    return Ib, Ik, float(np.dot(w, params.btilde.values * s2))


def _coarse(params: ModelParams) -> ModelParams | None:
    """Same rates on every other node, for a Richardson error estimate."""
    g = params.grid
    if g.n_cells % 2 or g.n_cells < 4:
        return None
    cg = AgeGrid(g.a_max, g.n_cells // 2)
    sub = lambda f: AgeFunction(cg, f.values[::2])
    return ModelParams(sub(params.b), sub(params.btilde), sub(params.k), sub(params.d),
                       params.competition, sub(params.psi1), sub(params.psi2))


def basic_reproduction(params: ModelParams) -> tuple[float, float]:
    """R0 and an estimate of its quadrature error."""
    Ib, Ik, Ibt = renewal_integrals(params, 0.0)
    R0 = Ib + Ik * Ibt
    coarse = _coarse(params)
    err = 0.0
    if coarse is not None:
        cb, ck, cbt = renewal_integrals(coarse, 0.0)
        err = abs(R0 - (cb + ck * cbt)) / 3.0
    return R0, err


def check_assumptions(params: ModelParams, truncation_tol: float = TRUNCATION_TOL) -> AssumptionReport:
    R0, err = basic_reproduction(params)
    Hk_end = cumulative_hazard(params.k).values[-1]
    tail = math.exp(-Hk_end)
    rates = (params.b, params.btilde, params.k, params.d)
    bounded = all(np.all(np.isfinite(f.values)) for f in rates)
    comp = params.competition
    flags = {
        "rates_nonnegative": True,  # enforced by AgeFunction
        "k_positive_somewhere": bool(np.any(params.k.values > 0)),
        "d_positive_somewhere": bool(np.any(params.d.values > 0)),
        "truncation_admissible": tail <= truncation_tol,
        "competition_linear": True,
        "competition_nonnegative": True,
        "phase1_self_limiting": comp.c1 > 0,
        "phase2_self_limiting": comp.ctilde2 > 0,
        "btilde_nonzero": not params.btilde.is_zero(),
    }
    return AssumptionReport(
        R0=R0,
        R0_quadrature_error=err,
        non_extinction=R0 > 1.0,
        rates_bounded=bounded,
        k_lower_bound=params.k.inf(),
        truncation_tail=tail,
        truncation_admissible=tail <= truncation_tol,
        flags=flags,
    )


def bisect(f: Callable[[float], float], lo: float, hi: float,
           xtol: float = 1e-13, maxiter: int = 200) -> tuple[float, int]:
    """Root of f on [lo, hi] given a sign change; returns (root, iterations)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, 0
    if fhi == 0:
        return hi, 0
    if (flo > 0) == (fhi > 0):
        raise DomainError(f"no sign change on [{lo}, {hi}]")
    it = 0
    while hi - lo > xtol and it < maxiter:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        it += 1
        if fm == 0:
            return mid, it
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi), it


def illinois(f: Callable[[float], float], lo: float, hi: float,
             xtol: float = 1e-13, maxiter: int = 200) -> tuple[float, int]:
    """Bracketed regula falsi with the Illinois down-weighting.

    Keeps a sign-changing bracket like ``bisect`` but converges superlinearly
    on smooth monotone maps; falls back to a midpoint if a step leaves the
    bracket.  Returns (root, evaluations after the endpoints).
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, 0
    if fhi == 0:
        return hi, 0
    if (flo > 0) == (fhi > 0):
        raise DomainError(f"no sign change on [{lo}, {hi}]")
    side = 0
    x_prev = math.inf
    it = 0
    x = 0.5 * (lo + hi)
    while hi - lo > xtol and it < maxiter:
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        fx = f(x)
        it += 1
        if fx == 0 or abs(x - x_prev) <= xtol:
            return x, it
        x_prev = x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
    return x, it

