"""The theorem-check suite behind ``agepde verify``.

Every check returns a CheckResult with status pass, fail or skipped.  A
check is skipped when its hypotheses do not hold for the scenario; it
never fails for that reason.  The ``check_*`` functions take explicit
inputs so the acceptance tests can drive them with their own scenarios;
``run_verify`` wires them to a loaded Scenario.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import AgeFunction, AgeGrid, Competition, ModelParams
from .errors import AgePdeError, DivergedError
from .ode_model import (OdeParams, asymptotic_small_btilde, dulac_divergence, integrate_ode,
                        steady_state_ode)
from .pde_full import SolverConfig, Stepper, initial_state, simulate
from .pde_ode import (HybridState, bounds_and_assumptions, convergence_diagnostics,
                      discriminant_identity, hybrid_state, identity_scale, one_phase_and_comparisons, simulate_hybrid,
                      smurf_ratio_sensitivity, stability_verdict, steady_state_hybrid,
                      trivial_verdict)
from .spectral import adjoint_pairing, eigenfunctions, growth_rate, gre_mass, gre_rate

PASS, FAIL, SKIP = "pass", "fail", "skipped"
SCHEMA = 1

CHECK_NAMES = (
    "lambda0_closed_form",
    "gre_decay",
    "comparison_principle",
    "l1_apriori_bound",
    "ode_global_stability",
    "dulac_negativity",
    "ode_extinction",
    "small_btilde_asymptotics",
    "hybrid_steady_state",
    "cross_model_steady_state",
    "local_stability",
    "ratio_sensitivity",
    "comparisons",
    "hybrid_bounds",
    "global_convergence",
    "grid_convergence",
)


def tol_scale() -> float:
    raw = os.environ.get("AGEPDE_TOL_SCALE", "1")
    try:
        s = float(raw)
    except ValueError:
        raise ValueError(f"AGEPDE_TOL_SCALE must be a number, got {raw!r}")
    if not s > 0:
        raise ValueError("AGEPDE_TOL_SCALE must be positive")
    return s


@dataclass
class CheckResult:
    name: str
    status: str
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tail = f" ({self.note})" if self.note else ""
        return f"{self.status.upper():7s} {self.name}: {vals}{tail}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


@dataclass
class VerifyReport:
    scenario: str
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "scenario": self.scenario,
                "checks": [_clean(asdict(c)) for c in self.checks]}


def _verdict(name, ok, measured, tolerances, note=""):
    return CheckResult(name, PASS if ok else FAIL, measured, tolerances, note)


def _skip(name, why):
    return CheckResult(name, SKIP, note=why)


def _guard(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DivergedError as exc:
        return CheckResult(name, FAIL, note=f"diverged: {exc}")
    except AgePdeError as exc:
        return CheckResult(name, FAIL, note=f"{type(exc).__name__}: {exc}")


# random draws shared by verify and the tests

def random_density(rng, grid: AgeGrid, support: float = 5.0) -> AgeFunction:
    a = grid.nodes
    vals = np.zeros_like(a)
    for _ in range(3):
        c = rng.uniform(0, support)
        s = rng.uniform(0.3, 1.5)
        vals += rng.uniform(0.1, 1.0) * np.exp(-0.5 * ((a - c) / s) ** 2)
    vals[a > support + 3] = 0.0
    return AgeFunction(grid, vals)


def random_rate(rng, grid: AgeGrid, lo: float, hi: float) -> AgeFunction:
    ages = np.array([0.0, 2.0, 5.0, 10.0])
    return AgeFunction.from_table(grid, np.column_stack((ages, rng.uniform(lo, hi, 4))))


def random_competition(rng, c2_max: float | None = None) -> Competition:
    e1, e2, c1, c2, t1, t2 = rng.uniform(0.0, 1.0, 6)
    c1 += 0.1
    t2 += 0.1
    if c2_max is not None and e2 + c2 > c2_max:
        f = c2_max / (e2 + c2)
        e2, c2 = e2 * f, c2 * f
    return Competition(e1, e2, c1, c2, t1, t2)


def random_hybrid_params(rng, grid: AgeGrid, constant_k: bool = False,
                         c2_max: float | None = None) -> ModelParams:
    if constant_k:
        k = AgeFunction.constant(grid, rng.uniform(1.0, 2.0))
        b = AgeFunction.constant(grid, k.values[0] * rng.uniform(1.3, 3.0))
    else:
        k = random_rate(rng, grid, 1.0, 2.0)
        b = random_rate(rng, grid, 1.0, 2.0) * float(rng.uniform(1.5, 3.0))
    d = AgeFunction.constant(grid, rng.uniform(0.5, 2.0))
    zero = AgeFunction.constant(grid, 0.0)
    return ModelParams(b, zero, k, d, random_competition(rng, c2_max))


def random_bounded_regime_params(rng, grid: AgeGrid) -> ModelParams:
    """Draws aimed at the rate assumptions behind the global bounds.

    Weak phase-2 pressure on phase 1 (small c2_tot) and a sizeable ctilde1;
    callers still filter on the assumption flags.
    """
    k = random_rate(rng, grid, 1.0, 2.0)
    b = random_rate(rng, grid, 1.0, 2.0) * float(rng.uniform(1.5, 3.0))
    d = AgeFunction.constant(grid, rng.uniform(1.0, 2.5))
    comp = Competition(rng.uniform(0, 0.05), rng.uniform(0, 0.05), rng.uniform(0.5, 1.5),
                       rng.uniform(0.001, 0.02), rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0))
    return ModelParams(b, AgeFunction.constant(grid, 0.0), k, d, comp)


def random_ode_params(rng, extinct: bool = False) -> OdeParams:
    k, d = rng.uniform(0.2, 3.0, 2)
    if extinct:
        total = rng.uniform(0.1, 0.8)
        share = rng.uniform(0, 1)
        b, bt = share * total * k, (1 - share) * total * d
    else:
        b, bt = rng.uniform(0.0, 4.0, 2)
    c = random_competition(rng)
    return OdeParams(b, bt, k, d, c.eta1, c.eta2, c.c1, c.c2, c.ctilde1, c.ctilde2)


# 1

def constant_rates(params: ModelParams) -> OdeParams | None:
    try:
        return OdeParams.from_model(params)
    except AgePdeError:
        return None


def closed_form_lambda0(op: OdeParams) -> float:
    """Positive root of (k+l)(d+l) = b(d+l) + k bt, or b - k when bt = 0."""
    if op.btilde == 0:
        return op.b - op.k
    p = op.k + op.d - op.b
    q = op.k * op.d - op.b * op.d - op.k * op.btilde
    return (-p + math.sqrt(p * p - 4 * q)) / 2


def check_lambda0(params: ModelParams, exact: float, tol: float) -> CheckResult:
    name = "lambda0_closed_form"
    gr = growth_rate(params)
    err = abs(gr.value - exact)
    return _verdict(name, err <= tol, {"lambda0": gr.value, "exact": exact, "abs_err": err},
                    {"abs_err": tol})


def fine_grid(grid: AgeGrid, min_cells: int = 1_000_000) -> AgeGrid:
    return AgeGrid(grid.a_max, max(grid.n_cells, min_cells))


# 2

def check_gre_decay(params: ModelParams, n1: AgeFunction, n2: AgeFunction, t_end: float = 3.0,
                    slack: float = 0.1, mono_tol: float = 1e-12) -> CheckResult:
    name = "gre_decay"
    lin = params.without_competition()
    eig = eigenfunctions(lin)
    mu = gre_rate(lin, eig)
    if not mu > 0:
        return _skip(name, f"decay hypothesis unmet (mu = {mu:.3g})")
    grid = params.grid
    st = Stepper(lin)
    init = initial_state(lin, n1, n2)
    m0 = gre_mass(init, eig)
    p1, p2 = eig.phi1_0.values, eig.phi2_0.values
    e1, e2 = eig.n1_0.values * m0, eig.n2_0.values * m0

    def H(t, x1, x2):
        s = math.exp(-eig.lambda0 * t)
        return adjoint_pairing(grid, np.abs(s * x1 - e1) * p1, np.abs(s * x2 - e2) * p2)

    x1, x2 = n1.values.copy(), n2.values.copy()
    b1, b2 = np.empty_like(x1), np.empty_like(x2)
    steps = int(round(t_end / grid.da))
    hist = [H(0.0, x1, x2)]
    for i in range(1, steps + 1):
        b1, b2 = st.advance(x1, x2, 0.0, 0.0, b1, b2)
        x1, b1 = b1, x1
        x2, b2 = b2, x2
        hist.append(H(i * grid.da, x1, x2))
    hist = np.array(hist)
    worst_rise = float(np.max(np.diff(hist) / hist[:-1])) if len(hist) > 1 else 0.0
    T = steps * grid.da
    ratio = hist[-1] / (hist[0] * math.exp(-mu * T))
    ok = worst_rise <= mono_tol and ratio <= 1 + slack
    return _verdict(name, ok, {"mu": mu, "H0": hist[0], "HT": hist[-1], "ratio_to_bound": ratio,
                               "worst_relative_rise": worst_rise},
                    {"ratio_to_bound": 1 + slack, "worst_relative_rise": mono_tol})


# 3

def default_environment(t):
    return 0.5 + 0.25 * math.sin(t), 0.3 + 0.1 * math.cos(2 * t)


def check_comparison(params: ModelParams, rng, n_pairs: int = 20, t_end: float = 5.0,
                     environment=default_environment) -> CheckResult:
    name = "comparison_principle"
    grid = params.grid
    st = Stepper(params)
    steps = int(round(t_end / grid.da))
    worst = math.inf
    for _ in range(n_pairs):
        lo1, lo2 = random_density(rng, grid), random_density(rng, grid)
        hi1 = lo1.values + random_density(rng, grid).values
        hi2 = lo2.values + random_density(rng, grid).values
        xs = [lo1.values.copy(), lo2.values.copy(), hi1.copy(), hi2.copy()]
        for i in range(steps):
            S = environment(i * grid.da)
            a1, a2 = st.advance(xs[0], xs[1], *S)
            c1, c2 = st.advance(xs[2], xs[3], *S)
            xs = [a1, a2, c1, c2]
            worst = min(worst, float(np.min(c1 - a1)), float(np.min(c2 - a2)))
    return _verdict(name, worst >= 0.0, {"pairs": n_pairs, "min_gap": worst}, {"min_gap": 0.0})


# 4

def check_l1_bound(runs, slack: float = 0.01) -> CheckResult:
    """runs: iterable of (params, init, t_end); init is a PopulationState or a HybridState."""
    name = "l1_apriori_bound"
    worst = 0.0
    count = 0
    for params, init, t_end in runs:
        sim = simulate_hybrid if isinstance(init, HybridState) else simulate
        traj = sim(params, init, SolverConfig(t_end, record_every=10 ** 9))
        rate = max(params.b.sup(), params.btilde.sup())
        mass = traj.N1 + traj.N2
        bound = np.exp(rate * (traj.times - traj.times[0])) * mass[0]
        worst = max(worst, float(np.max(mass / bound)))
        count += 1
    return _verdict(name, worst <= 1 + slack, {"scenarios": count, "max_mass_over_bound": worst},
                    {"max_mass_over_bound": 1 + slack})


# 5-8

def _ode_gate(op: OdeParams):
    if not (op.k > 0 and op.d > 0):
        return "needs k, d > 0"
    if not (op.c1_tot > 0 and op.ctilde2 > 0):
        return "needs c1_tot > 0 and ctilde2 > 0"
    return None


def check_ode_global(op: OdeParams, rng, n_inits: int = 100, t_end: float = 200.0,
                     tol: float = 1e-5, exact=None, exact_tol: float = 1e-10) -> CheckResult:
    name = "ode_global_stability"
    why = _ode_gate(op)
    if why:
        return _skip(name, why)
    if op.reproduction <= 1:
        return _skip(name, "b/k + bt/d <= 1: no positive steady state")
    ss = steady_state_ode(op)
    inits = rng.uniform(0.01, 5.0, size=(2, n_inits))
    traj = integrate_ode(op, inits, t_end, record_every=10 ** 9)
    F1, F2 = traj.final
    dist = float(np.max(np.hypot(F1 - ss.N1s, F2 - ss.N2s)))
    measured = {"N1s": ss.N1s, "N2s": ss.N2s, "max_final_distance": dist,
                "clip_events": traj.clip_events}
    tols = {"max_final_distance": tol, "clip_events": 0}
    ok = dist <= tol and traj.clip_events == 0
    if exact is not None:
        err = max(abs(ss.N1s - exact[0]), abs(ss.N2s - exact[1]))
        measured["closed_form_err"] = err
        tols["closed_form_err"] = exact_tol
        ok = ok and err <= exact_tol
    return _verdict(name, ok, measured, tols)


def check_dulac(param_list, rng, n_points: int = 10_000) -> CheckResult:
    name = "dulac_negativity"
    worst = -math.inf
    count = 0
    for op in param_list:
        if not op.k > 0:
            continue
        N1 = rng.uniform(1e-3, 10.0, n_points)
        N2 = rng.uniform(1e-3, 10.0, n_points)
        worst = max(worst, float(np.max(dulac_divergence(op, N1, N2))))
        count += 1
    if count == 0:
        return _skip(name, "needs k > 0")
    return _verdict(name, worst < 0, {"draws": count, "points": n_points, "max_divergence": worst},
                    {"max_divergence": 0.0})


def check_extinction(param_list, init=(1.0, 1.0), t_end: float = 300.0,
                     tol: float = 1e-6) -> CheckResult:
    name = "ode_extinction"
    ops = [op for op in param_list if op.k > 0 and op.d > 0 and op.reproduction < 1]
    if not ops:
        return _skip(name, "needs b/k + bt/d < 1")
    worst = 0.0
    for op in ops:
        F1, F2 = integrate_ode(op, init, t_end, record_every=10 ** 9).final
        worst = max(worst, float(F1), float(F2))
    return _verdict(name, worst <= tol, {"scenarios": len(ops), "max_final": worst},
                    {"max_final": tol})


def check_small_btilde(op: OdeParams, btildes=(0.1, 0.05, 0.025)) -> CheckResult:
    name = "small_btilde_asymptotics"
    why = _ode_gate(op)
    if why:
        return _skip(name, why)
    if not math.isclose(op.b, op.k, rel_tol=1e-12):
        return _skip(name, "needs b = k")
    errs = []
    for bt in btildes:
        p = OdeParams(op.b, bt, op.k, op.d, op.eta1, op.eta2, op.c1, op.c2, op.ctilde1,
                      op.ctilde2)
        ss = steady_state_ode(p)
        A1, A2 = asymptotic_small_btilde(p)
        errs.append(max(abs(A1 - ss.N1s) / ss.N1s, abs(A2 - ss.N2s) / ss.N2s))
    ok = all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    return _verdict(name, ok, {"relative_errors": errs}, {"monotone": True})


# 9-15

def check_hybrid_steady(params: ModelParams, draws=(), exact=None, exact_tol: float = 1e-8,
                        identity_tol: float = 1e-9) -> CheckResult:
    name = "hybrid_steady_state"
    ss = steady_state_hybrid(params)
    c = params.competition
    scale = max(1.0, abs(ss.A), abs(ss.B), abs(ss.C))
    inv = {
        "lambda0_balance": abs(c.c1_tot * ss.N1s + c.c2_tot * ss.N2s - ss.lambda0),
        "quadratic_residual": abs((ss.A * ss.N2s + ss.B) * ss.N2s + ss.C) / scale,
    }
    ok = inv["lambda0_balance"] <= 1e-10 and inv["quadratic_residual"] <= 1e-10
    ok = ok and ss.C > 0 and ss.Delta > 0 and ss.I < 1 / ss.lambda0 and len(ss.candidates) == 1
    measured = {"N1s": ss.N1s, "N2s": ss.N2s, **inv}
    tols = {"lambda0_balance": 1e-10, "quadratic_residual": 1e-10}
    if exact is not None:
        err = max(abs(ss.N1s - exact[0]), abs(ss.N2s - exact[1]))
        measured["closed_form_err"] = err
        tols["closed_form_err"] = exact_tol
        ok = ok and err <= exact_tol
    worst_id, single, n = 0.0, True, 0
    pool = list(draws)
    if c.c2_tot > 0:
        pool.append(params)
    for p in pool:
        s = ss if p is params else steady_state_hybrid(p)
        single = single and len(s.candidates) == 1
        worst_id = max(worst_id, discriminant_identity(p, s) / identity_scale(p, s))
        n += 1
    measured.update({"identity_draws": n, "max_identity_residual": worst_id,
                     "all_single_candidate": single})
    tols["max_identity_residual"] = identity_tol
    ok = ok and worst_id <= identity_tol and single
    return _verdict(name, ok, measured, tols)


def check_cross_model(param_list, tol: float = 1e-8) -> CheckResult:
    name = "cross_model_steady_state"
    worst, n = 0.0, 0
    for p in param_list:
        op = constant_rates(p)
        if op is None:
            continue
        h = steady_state_hybrid(p)
        o = steady_state_ode(op)
        worst = max(worst, abs(h.N1s - o.N1s), abs(h.N2s - o.N2s))
        n += 1
    if n == 0:
        return _skip(name, "needs constant rates")
    return _verdict(name, worst <= tol, {"draws": n, "max_abs_diff": worst},
                    {"max_abs_diff": tol})


def with_R0(params: ModelParams, R0: float) -> ModelParams:
    current, _ = trivial_verdict(params)
    return params.replace(b=params.b * (R0 / current))


def check_local_stability(param_list, trivial_base: ModelParams | None = None,
                          tol: float = 1e-8) -> CheckResult:
    name = "local_stability"
    stable, worst_id, worst_det, n = True, 0.0, 0.0, 0
    for p in param_list:
        rep = stability_verdict(p, steady_state_hybrid(p))
        stable = stable and rep.verdict == "stable"
        worst_id = max(worst_id,
                       abs(rep.b2_direct - rep.b2_identity) / max(1.0, abs(rep.b2_direct)),
                       abs(rep.b3_direct - rep.b3_identity) / max(1.0, abs(rep.b3_direct)))
        worst_det = max(worst_det, rep.determinant_check)
        n += 1
    measured = {"draws": n, "all_stable": stable, "max_identity_gap": worst_id,
                "max_determinant_discrepancy": worst_det}
    ok = stable and worst_id <= tol
    if trivial_base is not None:
        lo = trivial_verdict(with_R0(trivial_base, 0.5))[1]
        hi = trivial_verdict(with_R0(trivial_base, 2.0))[1]
        measured["trivial_R0_0.5"] = lo
        measured["trivial_R0_2"] = hi
        ok = ok and lo == "stable" and hi == "unstable"
    return _verdict(name, ok, measured, {"max_identity_gap": tol})


def check_sensitivity(param_list, large_eta_base: ModelParams | None = None,
                      tol: float = 1e-4) -> CheckResult:
    name = "ratio_sensitivity"
    worst, R_ok, n = 0.0, True, 0
    for p in param_list:
        rep = smurf_ratio_sensitivity(p)
        worst = max(worst, abs(rep.analytic - rep.finite_difference)
                    / max(abs(rep.finite_difference), 1e-12))
        R_ok = R_ok and rep.inv_lambda_I >= rep.R
        n += 1
    measured = {"draws": n, "max_relative_gap": worst, "inv_lambda_I_ge_R": R_ok}
    ok = worst <= tol and R_ok
    if large_eta_base is not None:
        c = large_eta_base.competition
        big = large_eta_base.replace(competition=Competition(
            1e3, c.eta2, c.c1, c.c2, c.ctilde1, c.ctilde2))
        sign = smurf_ratio_sensitivity(big).analytic
        measured["large_eta1_sensitivity"] = sign
        ok = ok and sign > 0
    return _verdict(name, ok, measured, {"max_relative_gap": tol})


def check_comparisons(param_list, boundary_list=(), tol: float = 1e-8) -> CheckResult:
    name = "comparisons"
    ok_sum, ok_order, n = True, True, 0
    for p in param_list:
        if p.competition.c2_tot > p.competition.c1_tot:
            continue
        rep = one_phase_and_comparisons(p)
        ok_sum = ok_sum and bool(rep.sum_ge)
        ok_order = ok_order and rep.n1_order and rep.n2_order and rep.total_order_iff
        n += 1
    worst_eq = 0.0
    for p in boundary_list:
        rep = one_phase_and_comparisons(p)
        worst_eq = max(worst_eq, abs((rep.N1s + rep.N2s) - (rep.N1ss + rep.N2ss)))
    if n == 0 and not boundary_list:
        return _skip(name, "needs c2_tot <= c1_tot")
    ok = ok_sum and ok_order and worst_eq <= tol
    return _verdict(name, ok, {"draws": n, "sum_ge": ok_sum, "orderings": ok_order,
                               "boundary_cases": len(boundary_list),
                               "boundary_total_gap": worst_eq},
                    {"boundary_total_gap": tol})


def assumption_flags_hold(rep) -> bool:
    return all(rep.rates_assumption_flags.values())


def check_bounds(runs, require_flags: bool = True) -> CheckResult:
    """runs: iterable of (params, HybridState, t_end)."""
    name = "hybrid_bounds"
    runs = [r for r in runs if r[0].k.inf() > 0]
    if not runs:
        return _skip(name, "needs k bounded below by a positive constant")
    n, skipped, ok = 0, 0, True
    worst = {"sup_N1_over_bar": 0.0, "sup_N2_over_bar": 0.0, "inf_N1_over_under": math.inf}
    for params, init, t_end in runs:
        ss = steady_state_hybrid(params)
        pre = bounds_and_assumptions(params, init, None, ss)
        if require_flags and not assumption_flags_hold(pre):
            skipped += 1
            continue
        rec = max(1, int(round(0.25 / params.grid.da)))
        traj = simulate_hybrid(params, init, SolverConfig(t_end, record_every=rec))
        rep = bounds_and_assumptions(params, init, traj, ss)
        a = rep.audit
        ok = ok and a["sup_N1_ok"] and a["sup_N2_ok"] and a["inf_N1_ok"] is True
        worst["sup_N1_over_bar"] = max(worst["sup_N1_over_bar"], a["sup_N1"] / rep.N1_bar)
        worst["sup_N2_over_bar"] = max(worst["sup_N2_over_bar"], a["sup_N2"] / rep.N2_bar)
        if a["inf_N1_after_t0"] is not None:
            worst["inf_N1_over_under"] = min(worst["inf_N1_over_under"],
                                             a["inf_N1_after_t0"] / rep.N1_under)
        n += 1
    if n == 0:
        return _skip(name, "Assumption flags unmet on every scenario")
    return _verdict(name, ok, {"scenarios": n, "skipped": skipped, **worst},
                    {"sup_N1_over_bar": 1.0, "sup_N2_over_bar": 1.0, "inf_N1_over_under": 1.0})


GAP_FLOOR = 1e-12


def check_global_convergence(params: ModelParams, inits, t_end: float = 80.0,
                             rate_tol: float = 1e-3, final_tol: float = 1e-3,
                             exact_rates=None, gap_floor: float = GAP_FLOOR) -> CheckResult:
    name = "global_convergence"
    if not params.k.inf() > 0:
        return _skip(name, "needs k bounded below by a positive constant")
    ss = steady_state_hybrid(params)
    pre = bounds_and_assumptions(params, inits[0], None, ss)
    lyap_gated = assumption_flags_hold(pre)
    M = pre.M_margin if pre.M_margin is not None else 2.0
    target = exact_rates if exact_rates is not None else (ss.lambda0, ss.kappa0)
    rec = max(1, int(round(1.0 / params.grid.da)))
    gap_ok, rate_ok, final_ok, lyap_ok = True, True, True, True
    worst = {"gap40_over_gap20": 0.0, "rate_err": 0.0, "final_err": 0.0}
    weight_defined = True
    for init in inits:
        traj = simulate_hybrid(params, init, SolverConfig(t_end, record_every=rec))
        cd = convergence_diagnostics(params, traj, ss, M=M)
        weight_defined = weight_defined and cd.weight_defined
        g20, g40 = cd.profile_gap[cd.at(20.0)], cd.profile_gap[cd.at(40.0)]
        gap_ok = gap_ok and (g40 < g20 / 2 or max(g20, g40) <= gap_floor)
        worst["gap40_over_gap20"] = max(worst["gap40_over_gap20"],
                                        g40 / g20 if g20 > gap_floor else 0.0)
        i = cd.at(t_end)
        rerr = max(abs(cd.lambda_t[i] - target[0]), abs(cd.kappa_t[i] - target[1]))
        ferr = max(abs(traj.N1[-1] - ss.N1s), abs(traj.N2[-1] - ss.N2s))
        worst["rate_err"] = max(worst["rate_err"], rerr)
        worst["final_err"] = max(worst["final_err"], ferr)
        rate_ok = rate_ok and rerr <= rate_tol
        final_ok = final_ok and ferr <= final_tol
        if lyap_gated:
            lyap_ok = lyap_ok and cd.V_monotone_after_t0 is True
    ok = gap_ok and rate_ok and final_ok and lyap_ok
    note = "" if lyap_gated else "Lyapunov audit skipped: Assumption flags unmet"
    if not weight_defined:
        note = (note + "; " if note else "") + "ctilde1 = 0: phase-2 Lyapunov weight set to 0"
    return _verdict(name, ok, {"inits": len(inits), **worst, "V_monotone": lyap_ok,
                               "lyapunov_audited": lyap_gated},
                    {"gap_ratio": 0.5, "gap_floor": gap_floor, "rate_err": rate_tol,
                     "final_err": final_tol}, note)


# 16

def check_grid_convergence(builders, t_end: float, grids, lo: float = 1.5,
                           hi: float = 2.5) -> CheckResult:
    """builders: callables grid -> (kind, params, init) with kind 'pde' or 'hybrid'."""
    name = "grid_convergence"
    ratios = []
    for build in builders:
        finals = []
        for g in grids:
            kind, params, init = build(g)
            cfg = SolverConfig(t_end, record_every=10 ** 9)
            traj = (simulate_hybrid if kind == "hybrid" else simulate)(params, init, cfg)
            finals.append(traj.N1[-1])
        diffs = np.abs(np.diff(finals))
        ratios.extend((diffs[:-1] / diffs[1:]).tolist())
    ok = all(lo <= r <= hi for r in ratios)
    orders = [math.log2(r) if r > 0 else float("nan") for r in ratios]
    return _verdict(name, ok, {"ratios": ratios, "observed_orders": orders},
                    {"ratio_range": [lo, hi]})


# scenario wiring

def _init_state(sc, params=None):
    params = params or sc.params
    if sc.model == "hybrid":
        return hybrid_state(params, sc.init["n1"], sc.init["N2"])
    return initial_state(params, sc.init["n1"], sc.init["n2"])


def run_verify(sc, seed: int = 0, quick: bool = False) -> VerifyReport:
    """Run every check that applies to the scenario, in the fixed order."""
    from .scenario import parse_scenario

    s = tol_scale()
    rng = np.random.default_rng(sc.verify.get("seed", seed))
    skip_list = set(sc.verify.get("skip", []))
    n = (lambda full, small: small if quick else full)
    results = {}
    grid_model = sc.model != "ode"
    op = sc.params if sc.is_ode else constant_rates(sc.params)

    def run(name, fn, *args, **kwargs):
        if name in skip_list:
            results[name] = _skip(name, "disabled in scenario")
        else:
            results[name] = _guard(name, fn, *args, **kwargs)

    if grid_model and op is not None:
        exact = closed_form_lambda0(op)
        if exact > 0:
            fine = sc.params if quick else _refine_params(sc, fine_grid(sc.grid))
            tol = (1e-9 if op.btilde == 0 else 1e-8) * s
            if quick:
                tol = max(tol, 10 * fine.grid.da ** 2 * (op.k + exact + op.d) ** 2)
            run("lambda0_closed_form", check_lambda0, fine, exact, tol)

    if grid_model:
        p, init = sc.params, _init_state(sc)
        n2 = init.n2 if sc.model != "hybrid" else AgeFunction.constant(sc.grid, 0.0)
        run("gre_decay", check_gre_decay, p, init.n1, n2, min(3.0, sc.solver["t_end"]),
            0.1 * s, 1e-12 * s)
        run("comparison_principle", check_comparison, p, rng, n(20, 3), 2.0,
            sc.prescribed_S or default_environment)
        run("l1_apriori_bound", check_l1_bound,
            [(p, init, min(sc.solver["t_end"], 5.0))], 0.01 * s)

    if op is not None:
        run("ode_global_stability", check_ode_global, op, rng, n(100, 10), 200.0, 1e-5 * s)
        run("dulac_negativity", check_dulac, [op], rng, n(10_000, 1000))
        run("ode_extinction", check_extinction, [op], (1.0, 1.0), 300.0, 1e-6 * s)
        run("small_btilde_asymptotics", check_small_btilde, op)

    if sc.model == "hybrid":
        p = sc.params
        init = _init_state(sc)
        draw_grid = AgeGrid(30.0, 3000)
        draws = [random_hybrid_params(rng, draw_grid) for _ in range(n(20, 3))]
        run("hybrid_steady_state", check_hybrid_steady, p, draws, None, 1e-8 * s, 1e-9 * s)
        if op is not None:
            fine = p if quick else _refine_params(sc, fine_grid(sc.grid))
            run("cross_model_steady_state", check_cross_model, [fine],
                max(1e-8, 10 * fine.grid.da ** 2) * s if quick else 1e-8 * s)
        run("local_stability", check_local_stability, [p], p, 1e-8 * s)
        if p.competition.c2_tot > 0:
            run("ratio_sensitivity", check_sensitivity, [p], None, 1e-4 * s)
        run("comparisons", check_comparisons, [p], (), 1e-8 * s)
        t_end = sc.solver["t_end"]
        run("hybrid_bounds", check_bounds, [(p, init, t_end)])
        if t_end >= 40:
            run("global_convergence", check_global_convergence, p, [init], t_end,
                1e-3 * s, 1e-3 * s)

    if sc.model == "pde" and not quick:
        def build(g, doc=sc.source):
            sub = parse_scenario(dict(doc, grid={"a_max": g.a_max, "n_cells": g.n_cells}))
            return "pde", sub.params, _init_state(sub)
        base = sc.grid.n_cells
        grids = [AgeGrid(sc.grid.a_max, base // 4), AgeGrid(sc.grid.a_max, base // 2), sc.grid]
        run("grid_convergence", check_grid_convergence, [build],
            min(sc.solver["t_end"], 1.0), grids)

    reasons = {"ode": "needs an age grid"}
    out = []
    for name in CHECK_NAMES:
        if name in results:
            out.append(results[name])
        else:
            why = reasons.get(sc.model) if name in _GRID_CHECKS else None
            if why is None and name in _HYBRID_CHECKS and sc.model != "hybrid":
                why = "hybrid model only"
            out.append(_skip(name, why or _DEFAULT_SKIP.get(name, "not applicable to this model")))
    return VerifyReport(sc.name, out)


_GRID_CHECKS = {"lambda0_closed_form", "gre_decay", "comparison_principle", "l1_apriori_bound",
                "hybrid_steady_state", "cross_model_steady_state", "local_stability",
                "ratio_sensitivity", "comparisons", "hybrid_bounds", "global_convergence",
                "grid_convergence"}
_HYBRID_CHECKS = {"hybrid_steady_state", "cross_model_steady_state", "local_stability",
                  "ratio_sensitivity", "comparisons", "hybrid_bounds", "global_convergence"}
_DEFAULT_SKIP = {
    "lambda0_closed_form": "needs constant rates with R0 > 1",
    "ode_global_stability": "needs constant rates",
    "dulac_negativity": "needs constant rates",
    "ode_extinction": "needs constant rates",
    "small_btilde_asymptotics": "needs constant rates",
    "cross_model_steady_state": "needs constant rates",
    "ratio_sensitivity": "needs c2_tot > 0",
    "global_convergence": "needs t_end >= 40",
    "grid_convergence": "runs on the full two-phase pde model, not in quick mode",
}


def _refine_params(sc, grid: AgeGrid) -> ModelParams:
    from .scenario import parse_scenario
    return parse_scenario(dict(sc.source, grid={"a_max": grid.a_max,
                                                 "n_cells": grid.n_cells})).params
