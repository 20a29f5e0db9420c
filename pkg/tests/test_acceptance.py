"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also collected into the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from agepde.core import AgeFunction, AgeGrid, Competition, ModelParams
from agepde.ode_model import OdeParams
from agepde.pde_full import initial_state
from agepde.pde_ode import (bounds_and_assumptions, hybrid_state, steady_state_hybrid,
                            trivial_verdict)
from agepde.verify import (FAIL, PASS, CheckResult, assumption_flags_hold, check_bounds,
                           check_comparison, check_comparisons, check_cross_model, check_dulac,
                           check_extinction, check_global_convergence, check_gre_decay,
                           check_grid_convergence, check_hybrid_steady, check_l1_bound,
                           check_lambda0, check_local_stability, check_ode_global,
                           check_sensitivity, check_small_btilde, random_bounded_regime_params,
                           random_competition, random_density, random_hybrid_params,
                           random_ode_params, random_rate)

from conftest import GOLDEN, indicator

LINES = []


def report(number, res: CheckResult, extra_ok=True, extra=""):
    ok = res.status == PASS and extra_ok
    tag = "PASS" if ok else "FAIL"
    body = res.line().split(" ", 1)[1].strip()
    line = f"[{number:2d}] {tag} {body}{' ' + extra if extra else ''}"
    LINES.append(line)
    print(line)
    return ok


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t


def merge(name, results):
    """Fold several CheckResults for one criterion into a single line."""
    status = PASS if all(r.status == PASS for r in results) else FAIL
    measured = {}
    for i, r in enumerate(results):
        measured.update({f"{k}#{i}" if k in measured else k: v for k, v in r.measured.items()})
    note = "; ".join(r.note for r in results if r.note)
    return CheckResult(name, status, measured, {}, note)


def test_01_lambda0_closed_forms():
    g = AgeGrid(24.0, 1_000_000)
    t = time.perf_counter()
    a = check_lambda0(ModelParams.constant(g, 2, 0, 1, 1), 1.0, 1e-9)
    b = check_lambda0(ModelParams.constant(g, 1, 1, 1, 1), GOLDEN, 1e-8)
    elapsed = time.perf_counter() - t
    res = merge("lambda0_closed_form", [a, b])
    assert report(1, res, elapsed < 1.0, f"runtime={elapsed:.2f}s")


def test_02_gre_decay():
    g = AgeGrid(24.0, 9600)
    p = ModelParams.constant(g, 2, 0, 1, 1)
    res, elapsed = timed(check_gre_decay, p, indicator(g, 0, 1), 0.5 * indicator(g, 0, 2),
                         3.0, 0.1, 1e-12)
    assert res.measured["mu"] == pytest.approx(2.0, rel=1e-3)
    assert report(2, res, elapsed < 30, f"runtime={elapsed:.2f}s")


def test_03_comparison_principle():
    rng = np.random.default_rng(3)
    g = AgeGrid(30.0, 3000)
    k = random_rate(rng, g, 0.5, 1.5)
    p = ModelParams(random_rate(rng, g, 0.5, 2.0), random_rate(rng, g, 0.0, 1.0), k,
                    random_rate(rng, g, 0.5, 1.5), random_competition(rng))
    res, elapsed = timed(check_comparison, p, rng, 20, 2.0)
    assert report(3, res, elapsed < 60, f"runtime={elapsed:.2f}s")


def test_04_l1_bound():
    rng = np.random.default_rng(4)
    g = AgeGrid(30.0, 3000)
    runs = []
    for _ in range(10):
        p = ModelParams(random_rate(rng, g, 0.5, 3.0), random_rate(rng, g, 0.0, 2.0),
                        random_rate(rng, g, 0.5, 2.0), random_rate(rng, g, 0.5, 2.0),
                        random_competition(rng))
        runs.append((p, initial_state(p, random_density(rng, g), random_density(rng, g)), 3.0))
    assert report(4, check_l1_bound(runs, 0.01))


def test_05_ode_global_stability():
    op = OdeParams(2, 0, 1, 1, c1=1, ctilde2=1)
    res, elapsed = timed(check_ode_global, op, np.random.default_rng(5), 100, 200.0, 1e-5,
                         (1.0, GOLDEN), 1e-10)
    assert report(5, res, elapsed < 30, f"runtime={elapsed:.2f}s")


def test_06_dulac():
    rng = np.random.default_rng(6)
    ops = [random_ode_params(rng) for _ in range(100)]
    res, elapsed = timed(check_dulac, ops, rng, 10_000)
    assert res.measured["draws"] == 100
    assert report(6, res, elapsed < 5, f"runtime={elapsed:.2f}s")


def test_07_extinction():
    rng = np.random.default_rng(7)
    ops = [random_ode_params(rng, extinct=True) for _ in range(20)]
    assert all(op.reproduction < 1 for op in ops)
    res = check_extinction(ops, (1.0, 1.0), 300.0, 1e-6)
    assert res.measured["scenarios"] == 20
    assert report(7, res)


def test_08_small_btilde():
    cases = [OdeParams(1, 0.1, 1, 1, c1=1, ctilde2=1),
             OdeParams(1.5, 0.1, 1.5, 0.8, eta1=0.2, c1=1, c2=0.3, ctilde1=0.2, ctilde2=1),
             OdeParams(0.7, 0.1, 0.7, 2.0, c1=0.5, c2=0.5, ctilde2=0.4)]
    res = merge("small_btilde_asymptotics", [check_small_btilde(op) for op in cases])
    assert report(8, res)


def test_09_hybrid_steady_state():
    g = AgeGrid(24.0, 1_000_000)
    base = ModelParams.constant(g, 2, 0, 1, 1, competition=Competition(c1=1, ctilde2=1))
    rng = np.random.default_rng(9)
    dg = AgeGrid(30.0, 3000)
    draws = [random_hybrid_params(rng, dg) for _ in range(200)]
    res = check_hybrid_steady(base, draws, (1.0, GOLDEN), 1e-8, 1e-9)
    assert res.measured["identity_draws"] == 200
    assert report(9, res)


def test_10_cross_model():
    rng = np.random.default_rng(10)
    g = AgeGrid(24.0, 1_000_000)
    draws = [random_hybrid_params(rng, g, constant_k=True) for _ in range(50)]
    res = check_cross_model(draws, 1e-8)
    assert res.measured["draws"] == 50
    assert report(10, res)


def test_11_local_stability():
    rng = np.random.default_rng(11)
    g = AgeGrid(30.0, 3000)
    draws = [random_hybrid_params(rng, g) for _ in range(200)]
    res = check_local_stability(draws, draws[0], 1e-8)
    assert report(11, res)


def test_12_ratio_sensitivity():
    rng = np.random.default_rng(12)
    # the closed form leans on 1/I = kappa0 + lambda0, which the trapezoid
    # grid only satisfies to O(da^2); da = 1/4000 keeps that below 1e-4
    g = AgeGrid(30.0, 120000)
    draws = []
    while len(draws) < 20:
        p = random_hybrid_params(rng, g)
        if p.competition.c2_tot > 0.05 and trivial_verdict(p)[0] > 1.05:
            draws.append(p)
    base = ModelParams.constant(g, 2, 0, 1, 1,
                                competition=Competition(c1=1, c2=0.5, ctilde2=1))
    res = check_sensitivity(draws, base, 1e-4)
    assert report(12, res)


def test_13_comparisons():
    rng = np.random.default_rng(13)
    g = AgeGrid(30.0, 3000)
    draws = []
    while len(draws) < 100:
        p = random_hybrid_params(rng, g)
        if p.competition.c2_tot <= p.competition.c1_tot:
            draws.append(p)
    boundary = []
    for p in draws[:10]:
        c = p.competition
        c2 = c.c1_tot - c.eta2
        if c2 >= 0:
            boundary.append(p.replace(competition=Competition(c.eta1, c.eta2, c.c1, c2,
                                                              c.ctilde1, c.ctilde2)))
    res = check_comparisons(draws, boundary, 1e-8)
    assert res.measured["draws"] == 100 and res.measured["boundary_cases"] > 0
    assert report(13, res)


def test_14_bounds():
    rng = np.random.default_rng(14)
    g = AgeGrid(30.0, 3000)
    runs = []
    tries = 0
    while len(runs) < 20 and tries < 500:
        tries += 1
        p = random_bounded_regime_params(rng, g)
        init = hybrid_state(p, random_density(rng, g), rng.uniform(0.0, 1.0))
        if assumption_flags_hold(bounds_and_assumptions(p, init, None, steady_state_hybrid(p))):
            runs.append((p, init, 30.0))
    assert len(runs) == 20
    res = check_bounds(runs)
    assert res.measured["scenarios"] == 20
    assert report(14, res, extra=f"draws_tried={tries}")


def test_15_global_convergence():
    rng = np.random.default_rng(15)
    g = AgeGrid(30.0, 12000)
    p = ModelParams.constant(g, 2, 0, 1, 1, competition=Competition(c1=1, ctilde2=1))
    inits = [hybrid_state(p, random_density(rng, g), rng.uniform(0.05, 2.0)) for _ in range(10)]
    res, elapsed = timed(check_global_convergence, p, inits, 80.0, 1e-3, 1e-3, (1.0, 1.0))
    assert res.measured["lyapunov_audited"]
    assert report(15, res, elapsed < 120, f"runtime={elapsed:.1f}s")


def _smooth(g, center, width, height=1.0):
    a = g.nodes
    return AgeFunction(g, height * np.exp(-((a - center) / width) ** 2))


def _builder_const_b(g):
    p = ModelParams.constant(g, 1, 1, 1, 1, competition=Competition(c1=1, c2=0.5, ctilde1=0.2,
                                                                     ctilde2=1))
    return "pde", p, initial_state(p, _smooth(g, 1, 1), _smooth(g, 2, 1, 0.5))


def _builder_tables(g):
    b = AgeFunction.from_table(g, [(0, 0.5), (3, 2.5), (10, 1.0)])
    bt = AgeFunction.from_table(g, [(0, 0.2), (5, 0.8)])
    k = AgeFunction.from_table(g, [(0, 0.6), (4, 1.4)])
    d = AgeFunction.from_table(g, [(0, 0.8), (6, 1.6)])
    p = ModelParams(b, bt, k, d, Competition(0.2, 0.1, 0.8, 0.4, 0.3, 0.9))
    return "pde", p, initial_state(p, _smooth(g, 2, 1.5), _smooth(g, 1, 0.7, 0.3))


def _builder_kernels(g):
    a = g.nodes
    psi1 = AgeFunction(g, np.exp(-a / 5))
    psi2 = AgeFunction(g, 1 + 0.5 * np.tanh(a - 2))
    p = ModelParams.constant(g, 1.5, 0.5, 0.8, 1.2, competition=Competition(0.1, 0.2, 1, 0.6,
                                                                             0.5, 1))
    p = ModelParams(p.b, p.btilde, p.k, p.d, p.competition, psi1=psi1, psi2=psi2)
    return "pde", p, initial_state(p, _smooth(g, 1.5, 1), _smooth(g, 3, 1, 0.4))


def test_16_grid_convergence():
    grids = [AgeGrid(30.0, n) for n in (12000, 24000, 48000)]
    res = check_grid_convergence([_builder_const_b, _builder_tables, _builder_kernels], 1.0,
                                 grids, 1.5, 2.5)
    assert len(res.measured["ratios"]) == 3
    assert report(16, res)
