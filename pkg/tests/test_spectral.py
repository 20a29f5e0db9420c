import math

import numpy as np
import pytest

from agepde.core import AgeFunction, AgeGrid, ModelParams, PopulationState
from agepde.errors import DomainError, NoPositiveRoot
from agepde.pde_full import Stepper
from agepde.spectral import (adjoint_pairing, eigenfunctions, growth_map, growth_rate,
                             gre_entropy, gre_mass, gre_rate)

from conftest import GOLDEN, indicator


def test_lambda0_closed_forms(const_a, const_b):
    # trapezoid error on da = 5e-3 is about (k + lambda) da^2 / 6
    assert growth_rate(const_a).value == pytest.approx(1.0, abs=3e-5)
    assert growth_rate(const_b).value == pytest.approx(GOLDEN, abs=3e-5)


def test_lambda0_is_discrete_root(const_b):
    gr = growth_rate(const_b)
    assert abs(growth_map(const_b, gr.value) - 1) < 1e-12
    assert not gr.degenerate and gr.iterations <= 200


def test_lambda0_converges_second_order():
    errs = []
    for n in (1500, 3000, 6000):
        p = ModelParams.constant(AgeGrid(30.0, n), 2, 0, 1, 1)
        errs.append(abs(growth_rate(p).value - 1.0))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_degenerate_and_subcritical(grid):
    gr = growth_rate(ModelParams.constant(grid, 1, 0, 1, 1))
    assert gr.degenerate and gr.value == 0
    with pytest.raises(NoPositiveRoot):
        growth_rate(ModelParams.constant(grid, 0.5, 0, 1, 1))


def test_truncation_checked():
    with pytest.raises(DomainError):
        growth_rate(ModelParams.constant(AgeGrid(5.0, 500), 2, 0, 1, 1))


@pytest.mark.parametrize("name", ["const_a", "const_b"])
def test_eigen_invariants(name, request):
    p = request.getfixturevalue(name)
    eig = eigenfunctions(p)
    g = p.grid
    w = g.weights
    n1, n2 = eig.n1_0.values, eig.n2_0.values
    assert n1[0] == 1.0
    renewal = np.dot(w, p.b.values * n1 + p.btilde.values * n2)
    assert renewal == pytest.approx(1.0, abs=1e-8)
    assert n2[0] == pytest.approx(np.dot(w, p.k.values * n1), abs=1e-8)
    norm = adjoint_pairing(g, eig.phi1_0.values * n1, eig.phi2_0.values * n2)
    assert norm == pytest.approx(1.0, abs=1e-12)
    for f in (eig.n1_0, eig.n2_0, eig.phi1_0, eig.phi2_0):
        assert f.inf() >= 0


def test_const_a_eigenfunctions(const_a):
    eig = eigenfunctions(const_a)
    a = const_a.grid.nodes
    assert eig.phi2_0.is_zero()
    assert np.max(np.abs(eig.n1_0.values - np.exp(-2 * a))) < 1e-10 + 1e-5 * a.max()
    phi = eig.phi1_0.values
    assert (phi.max() - phi.min()) / phi.max() < 1e-8
    assert gre_rate(const_a, eig) == pytest.approx(2.0, rel=1e-8)


def test_eigen_requires_growth(grid):
    with pytest.raises(DomainError):
        eigenfunctions(ModelParams.constant(grid, 1, 0, 1, 1), 0.0)


def test_entropy_zero_on_eigen_data(const_b):
    eig = eigenfunctions(const_b)
    for scale in (1.0, 2.0):
        n1 = AgeFunction(const_b.grid, scale * eig.n1_0.values)
        n2 = AgeFunction(const_b.grid, scale * eig.n2_0.values)
        s = PopulationState.from_densities(0.0, n1, n2)
        m0 = gre_mass(s, eig)
        assert m0 == pytest.approx(scale)
        assert gre_entropy(s, eig, m0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["const_a", "const_b"])
def test_mass_conserved_and_entropy_decays(name, request):
    p = request.getfixturevalue(name)
    g = p.grid
    eig = eigenfunctions(p)
    st = Stepper(p)
    n1 = indicator(g, 0, 1).values
    n2 = indicator(g, 0, 2).values if name == "const_b" else np.zeros_like(n1)
    s0 = PopulationState.from_densities(0.0, AgeFunction(g, n1), AgeFunction(g, n2))
    m0 = gre_mass(s0, eig)
    H = [gre_entropy(s0, eig, m0)]
    steps = int(round(2.0 / g.da))
    for i in range(1, steps + 1):
        n1, n2 = st.advance(n1, n2, 0.0, 0.0)
        s = PopulationState.from_densities(i * g.da, AgeFunction(g, n1), AgeFunction(g, n2))
        H.append(gre_entropy(s, eig, m0))
    t = steps * g.da
    m_t = gre_mass(s, eig) * math.exp(-eig.lambda0 * t)
    assert m_t == pytest.approx(m0, rel=1e-9)
    assert np.all(np.diff(H) <= 1e-12 * H[0])
    mu = gre_rate(p, eig)
    assert H[-1] <= H[0] * math.exp(-mu * t) * 1.1
