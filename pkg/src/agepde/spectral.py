"""Growth rate, direct and adjoint eigenfunctions, relative entropy.

The direct eigenfunctions are survival products.  The adjoint pair is
built from tail sums that make it the exact left eigenvector of the
unit-CFL transport step in ``pde_full``: pairing a density with the
adjoint via ``adjoint_pairing`` is then conserved by the linear scheme
(up to the truncation tail), which is what the entropy decay needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (AgeFunction, AgeGrid, ModelParams, PopulationState,
                   check_assumptions, illinois, cumulative_hazard, survival)
from .errors import DomainError, NoPositiveRoot

LAMBDA_XTOL = 1e-13
LAMBDA_MAXITER = 200


@dataclass(frozen=True)
class GrowthRate:
    value: float
    R0: float
    degenerate: bool
    iterations: int
    residual: float


@dataclass(frozen=True)
class EigenSolution:
    lambda0: float
    n1_0: AgeFunction
    n2_0: AgeFunction
    phi1_0: AgeFunction
    phi2_0: AgeFunction
    m0_normalizer: float
    bounds: dict

    @property
    def grid(self) -> AgeGrid:
        return self.n1_0.grid


class RenewalMap:
    """F(lam) for the two-phase renewal problem, with cached hazards."""

    def __init__(self, params: ModelParams):
        grid = params.grid
        self.a = grid.nodes
        w = grid.weights
        Hk = cumulative_hazard(params.k).values
        self.wb = w * params.b.values * np.exp(-Hk)
        self.wk = w * params.k.values * np.exp(-Hk)
        self.has_phase2 = not params.btilde.is_zero()
        if self.has_phase2:
            Hd = cumulative_hazard(params.d).values
            self.wbt = w * params.btilde.values * np.exp(-Hd)
            self._rows = np.stack((self.wb, self.wk, self.wbt))
        self._buf = np.empty_like(self.a)

    def __call__(self, lam: float) -> float:
        e = np.multiply(self.a, -lam, out=self._buf)
        np.exp(e, out=e)
        if self.has_phase2:
            fb, fk, fbt = self._rows @ e
            return float(fb + fk * fbt)
        return float(np.dot(self.wb, e))


def growth_map(params: ModelParams, lam: float) -> float:
    return RenewalMap(params)(lam)


def growth_rate(params: ModelParams, degeneracy_tol: float | None = None) -> GrowthRate:
    """Solve F(lam) = 1 on a bracket [0, lam_hi] (Illinois regula falsi)."""
    report = check_assumptions(params)
    if not report.truncation_admissible:
        raise DomainError(
            f"age truncation not admissible: exp(-int k) = {report.truncation_tail:.3g}")
    F = RenewalMap(params)
    R0 = F(0.0)
    if degeneracy_tol is None:
        qerr = report.R0_quadrature_error
        degeneracy_tol = 2.0 * qerr + 2.0 * report.truncation_tail * max(1.0, R0) + 1e-12
    if abs(R0 - 1.0) <= degeneracy_tol:
        return GrowthRate(0.0, R0, True, 0, R0 - 1.0)
    if R0 < 1.0:
        raise NoPositiveRoot(f"R0 = {R0:.6g} < 1: the growth map never reaches 1")
    hi = 1.0
    while F(hi) >= 1.0:
        hi *= 2.0
        if hi > 1e8:
            raise DomainError("could not bracket the growth rate")
    lam, it = illinois(lambda x: F(x) - 1.0, 0.0, hi, LAMBDA_XTOL, LAMBDA_MAXITER)
    return GrowthRate(lam, R0, False, it, F(lam) - 1.0)


def solve_lambda0(params: ModelParams) -> float:
    return growth_rate(params).value


def _tail_sums(Phi: np.ndarray, src: np.ndarray, terminal: float) -> np.ndarray:
    """x_i = sum_{j>i} exp(-(Phi_j - Phi_i)) src_j + exp(-(Phi_N - Phi_i)) terminal.

    Evaluated blockwise so that exponentials of large hazards never overflow.
    """
    n = len(Phi)
    out = np.empty(n)
    carry = terminal
    hi = n - 1
    out[hi] = terminal
    while hi > 0:
        lo = min(hi - 1, int(np.searchsorted(Phi, Phi[hi] - 300.0, side="left")))
        ref = Phi[lo]
        seg = slice(lo, hi + 1)
        scaled = src[seg] * np.exp(-(Phi[seg] - ref))
        # strict suffix sums inside the block
        suffix = np.concatenate((np.cumsum(scaled[::-1])[::-1][1:], [0.0]))
        grow = np.exp(Phi[seg] - ref)
        block = grow * suffix + np.exp(-(Phi[hi] - Phi[seg])) * carry
        out[lo:hi] = block[:-1]
        carry = out[lo]
        hi = lo
    return out


def adjoint_pairing(grid: AgeGrid, *products: np.ndarray) -> float:
    """Sum of da * f_i over nodes 0..N-1 (the quadrature the transport step conserves)."""
    total = 0.0
    for p in products:
        total += grid.da * float(np.sum(p[:-1]))
    return total


def eigenfunctions(params: ModelParams, lambda0: float | None = None) -> EigenSolution:
    if lambda0 is None:
        lambda0 = solve_lambda0(params)
    if not lambda0 > 0:
        raise DomainError(f"eigenfunctions need lambda0 > 0, got {lambda0}")
    grid = params.grid
    a, w, h = grid.nodes, grid.weights, grid.da
    b, bt, k, d = (f.values for f in (params.b, params.btilde, params.k, params.d))
    Phi1 = cumulative_hazard(params.k).values + lambda0 * a
    Phi2 = cumulative_hazard(params.d).values + lambda0 * a

    n1 = np.exp(-Phi1)
    n2_at0 = float(np.dot(w, k * n1))
    n2 = n2_at0 * np.exp(-Phi2)

    # Adjoint.  The implicit boundary fill of the scheme couples the two
    # boundary values through D; the frozen-rate extension past a_max is
    # summed as a geometric series.
    w0 = w[0]
    D = 1.0 - w0 * b[0] - w0 * w0 * bt[0] * k[0]
    c = np.full_like(a, h)
    c[0] = 0.0

    def closure(rate_end, src_end):
        q = math.exp(-rate_end * h)
        return q * h * src_end / (1.0 - q)

    r1_end = k[-1] + lambda0
    r2_end = d[-1] + lambda0
    if bt.any():
        T2 = _tail_sums(Phi2, c * bt, closure(r2_end, bt[-1]))[0]
        phi2_at0 = T2 / (D - w0 * k[0] * T2)
    else:
        phi2_at0 = 0.0
    alpha = (1.0 + w0 * k[0] * phi2_at0) / D
    gamma = alpha * w0 * bt[0] + phi2_at0
    g1 = alpha * b + gamma * k
    phi1 = _tail_sums(Phi1, c * g1, closure(r1_end, g1[-1]))
    if bt.any():
        g2 = alpha * bt
        phi2 = _tail_sums(Phi2, c * g2, closure(r2_end, g2[-1]))
    else:
        phi2 = np.zeros_like(a)

    m = adjoint_pairing(grid, phi1 * n1, phi2 * n2)
    phi1 = phi1 / m
    phi2 = phi2 / m

    p10, p20 = phi1[0], phi2[0]
    bounds = {
        "phi1_upper": p10 * params.b.sup() / lambda0 + p20,
        "phi2_upper": p10 * params.btilde.sup() / lambda0,
        "phi1_lower": p10 * params.b.inf() / (lambda0 + params.k.sup()),
        "phi2_lower": p10 * params.btilde.inf() / (lambda0 + params.d.sup()),
        "boundary_consistency": abs(phi1[0] * m - 1.0),
    }
    return EigenSolution(
        lambda0=float(lambda0),
        n1_0=AgeFunction(grid, n1),
        n2_0=AgeFunction(grid, n2),
        phi1_0=AgeFunction(grid, phi1),
        phi2_0=AgeFunction(grid, phi2),
        m0_normalizer=float(m),
        bounds=bounds,
    )


def gre_mass(state: PopulationState, eig: EigenSolution) -> float:
    """m0 = <phi1, n1> + <phi2, n2>."""
    if state.grid != eig.grid:
        raise DomainError("state and eigen solution live on different grids")
    return adjoint_pairing(eig.grid, eig.phi1_0.values * state.n1.values,
                           eig.phi2_0.values * state.n2.values)


def gre_entropy(state: PopulationState, eig: EigenSolution, m0: float) -> float:
    if state.grid != eig.grid:
        raise DomainError("state and eigen solution live on different grids")
    scale = math.exp(-eig.lambda0 * state.t)
    h1 = np.abs(scale * state.n1.values - m0 * eig.n1_0.values)
    h2 = np.abs(scale * state.n2.values - m0 * eig.n2_0.values)
    return adjoint_pairing(eig.grid, h1 * eig.phi1_0.values, h2 * eig.phi2_0.values)


def gre_rate(params: ModelParams, eig: EigenSolution) -> float:
    """Largest mu with b >= mu phi1/phi1(0) and btilde >= mu phi2/phi2(0).

    A value <= 0 means the decay hypothesis is unmet.
    """
    phi1, phi2 = eig.phi1_0.values, eig.phi2_0.values
    ratios = []
    pos = phi1 > 0
    ratios.append(np.min(params.b.values[pos] * phi1[0] / phi1[pos]))
    pos = phi2 > 0
    if np.any(pos) and phi2[0] > 0:
        ratios.append(np.min(params.btilde.values[pos] * phi2[0] / phi2[pos]))
    return float(min(ratios))
