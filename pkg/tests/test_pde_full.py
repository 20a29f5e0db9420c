import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agepde.core import AgeFunction, AgeGrid, Competition, ModelParams
from agepde.errors import ConfigError, DivergedError
from agepde.pde_full import (SolverConfig, bounds_S, initial_state, simulate, step,
                             steady_residual, table_S)
from agepde.spectral import eigenfunctions

from conftest import GOLDEN, indicator


def test_zero_is_fixed(const_a_comp):
    g = const_a_comp.grid
    z = AgeFunction.constant(g, 0.0)
    s = step(initial_state(const_a_comp, z, z), const_a_comp)
    assert s.mass == 0 and s.t == g.da
    tr = simulate(const_a_comp, initial_state(const_a_comp, z, z), SolverConfig(1.0))
    assert not np.any(tr.N1) and not np.any(tr.N2)


def test_free_transport_is_a_shift():
    g = AgeGrid(5.0, 500)
    p = ModelParams.constant(g, 0, 0, 0, 0)
    n1 = AgeFunction.from_callable(g, lambda a: np.exp(-(a - 1) ** 2))
    s = step(initial_state(p, n1, n1), p)
    assert np.array_equal(s.n1.values[1:], n1.values[:-1])
    assert np.array_equal(s.n2.values[1:], n1.values[:-1])


def test_eigen_growth_per_step(const_a):
    eig = eigenfunctions(const_a)
    s0 = initial_state(const_a, eig.n1_0, eig.n2_0)
    s1 = step(s0, const_a)
    dt = const_a.grid.da
    assert s1.N1 / s0.N1 == pytest.approx(math.exp(eig.lambda0 * dt), abs=dt ** 2)


def test_dt_must_match_grid(const_a):
    z = AgeFunction.constant(const_a.grid, 0.0)
    with pytest.raises(ConfigError):
        step(initial_state(const_a, z, z), const_a, dt=0.1)
    with pytest.raises(ConfigError):
        SolverConfig(1.0, mode="linear")


def test_record_every_and_times(const_a_comp):
    g = const_a_comp.grid
    init = initial_state(const_a_comp, indicator(g, 0, 1), AgeFunction.constant(g, 0.0))
    tr = simulate(const_a_comp, init, SolverConfig(1.0, record_every=50))
    assert len(tr.times) == 201 and np.all(np.diff(tr.times) > 0)
    assert [round(s.t, 9) for s in tr.states] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert tr.N1[-1] == pytest.approx(tr.final.N1)


def test_l1_bound_linear_mode(const_a):
    g = const_a.grid
    init = initial_state(const_a, indicator(g, 0, 2), AgeFunction.constant(g, 0.3))
    cfg = SolverConfig(3.0, mode="linear", prescribed_S=lambda t: (0.0, 0.0))
    tr = simulate(const_a, init, cfg)
    mass = tr.N1 + tr.N2
    assert np.all(mass <= np.exp(2 * tr.times) * mass[0] * 1.01)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    g = AgeGrid(25.0, 500)
    p = ModelParams.constant(g, *rng.uniform(0.5, 2, 4), Competition(c1=1, ctilde2=1))
    S = table_S([0, 10], [0.5, 1.0], [0.2, 0.1])
    lo1, lo2 = (AgeFunction(g, rng.uniform(0, 1, g.n_nodes)) for _ in range(2))
    hi1 = AgeFunction(g, lo1.values + rng.uniform(0, 1, g.n_nodes))
    hi2 = AgeFunction(g, lo2.values + rng.uniform(0, 1, g.n_nodes))
    cfg = SolverConfig(2.0, record_every=1, mode="linear", prescribed_S=S)
    a = simulate(p, initial_state(p, lo1, lo2), cfg)
    b = simulate(p, initial_state(p, hi1, hi2), cfg)
    for x, y in zip(a.states, b.states):
        assert np.all(x.n1.values <= y.n1.values) and np.all(x.n2.values <= y.n2.values)


def test_divergence_reported():
    g = AgeGrid(25.0, 250)
    p = ModelParams.constant(g, 8, 0, 1, 1)
    init = initial_state(p, indicator(g, 0, 1), AgeFunction.constant(g, 0.0))
    with pytest.raises(DivergedError) as exc:
        simulate(p, init, SolverConfig(20.0, blowup_factor=1e6))
    assert exc.value.t_last > 0
    assert exc.value.trajectory.times[-1] <= exc.value.t_last + 1e-12


def test_steady_residual_examples(const_a_comp, const_a):
    r1, r2 = steady_residual(const_a, 0.0, 0.0)
    assert r1 == pytest.approx(1.0, abs=1e-4) and r2 == 0.0
    r1, r2 = steady_residual(const_a_comp, 1.0, GOLDEN)
    assert abs(r1) < 1e-4 and abs(r2) < 1e-4  # da = 5e-3 here
    fine = ModelParams.constant(AgeGrid(30.0, 60000), 2, 0, 1, 1, Competition(c1=1, ctilde2=1))
    r1, r2 = steady_residual(fine, 1.0, GOLDEN)
    assert max(abs(r1), abs(r2)) < 1e-6
    r1, _ = steady_residual(fine, 1.1, GOLDEN + 0.1)
    assert abs(r1) > 1e-3


def test_bounds_S_example(const_a_comp):
    g = const_a_comp.grid
    init = initial_state(const_a_comp, indicator(g, 0, 1),
                         AgeFunction(g, 0.5 * indicator(g, 0, 1).values))
    b = bounds_S(const_a_comp, init)
    assert b.M == pytest.approx(4.0) and b.M_upper == pytest.approx(8.0)
    assert b.m_lower is None
    tr = simulate(const_a_comp, init, SolverConfig(20.0))
    assert np.all(tr.S1 + tr.S2 <= b.M_upper)
    big = initial_state(const_a_comp, AgeFunction.constant(g, 1.0), AgeFunction.constant(g, 0.0))
    assert bounds_S(const_a_comp, big).M_upper == pytest.approx(big.mass)


def test_bounds_S_lower_with_btilde():
    g = AgeGrid(30.0, 3000)
    p = ModelParams.constant(g, 1, 1, 1, 1, Competition(c1=1, c2=0.5, ctilde1=0.2, ctilde2=1))
    init = initial_state(p, indicator(g, 0, 1), indicator(g, 0, 2))
    b = bounds_S(p, init)
    assert b.m_lower is not None and b.m_lower > 0
    tr = simulate(p, init, SolverConfig(20.0))
    S = tr.S1 + tr.S2
    assert np.all(S <= b.M_upper)
    assert np.all(S >= b.m_lower)
