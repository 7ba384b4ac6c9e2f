"""Mollifiers, indicator convolutions, cutoffs and the density pipeline."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import CutoffOracle, bump_constant_1d, bump_constant_2d, grad_l1_2d
from wfs.calculus import leibniz_1var
from wfs.core.domain import ball, closed_ball, empty_set, everything, full_space, half_space, product_domain
from wfs.core.grid import Grid, GridFunction
from wfs.core.seminorm import coordinate_abs, sup_norm
from wfs.errors import GridTooCoarse, HypothesisViolated, InvalidEpsilon
from wfs.mollify import (ConvergenceTable, boundary_constant, boundary_cutoff, density_pipeline,
                         derivative_bound_check, far_field_constant, far_field_cutoff, indicator_convolve,
                         make_mollifier, urysohn_approximation, urysohn_cutoff)
from wfs.weights import constant, constant_family, poly_radial, schwartz_family

# L1 norms of derivatives of the unit bump, from an independent quadrature before the build
FROZEN_L1 = {
    (1, (1,)): 1.657138, (1, (2,)): 7.193161, (1, (3,)): 80.28765,
    (2, (1, 0)): 1.90346, (2, (0, 2)): 8.746757, (2, (0, 3)): 91.087605,
    (2, (1, 1)): 3.808106, (2, (1, 2)): 44.294847,
}


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25])
def test_mollifier_mass_and_support(n, eps):
    m = make_mollifier(n, eps)
    assert abs(m.mass() - 1.0) <= 1e-6
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(2000, n))
    pts *= (eps * (1 + rng.uniform(1e-6, 2, size=(2000, 1)))) / np.linalg.norm(pts, axis=1, keepdims=True)
    assert np.all(m(pts) == 0)
    origin = np.zeros((1, n))
    assert m(origin)[0] == pytest.approx(eps ** -n * make_mollifier(n, 1.0)(origin)[0], rel=1e-14)


def test_normalization_against_independent_quadrature():
    assert make_mollifier(1, 1.0).c == pytest.approx(bump_constant_1d(), rel=1e-10)
    assert make_mollifier(2, 1.0).c == pytest.approx(bump_constant_2d(), rel=1e-10)


@pytest.mark.parametrize("key", sorted(FROZEN_L1))
def test_l1_norms_frozen(key):
    n, alpha = key
    assert make_mollifier(n, 1.0).l1_norm(alpha) == pytest.approx(FROZEN_L1[key], rel=2e-6)


def test_l1_norm_identities():
    m1 = make_mollifier(1, 1.0)
    assert m1.l1_norm((1,)) == pytest.approx(2 * m1(np.zeros((1, 1)))[0], rel=1e-9)
    assert make_mollifier(2, 1.0).l1_norm((1, 0)) == pytest.approx(grad_l1_2d(), rel=1e-6)
    assert m1.l1_norm((0,)) == pytest.approx(1.0, abs=1e-6)


def test_invalid_epsilon():
    with pytest.raises(InvalidEpsilon):
        make_mollifier(1, 0.0)


def test_indicator_convolve_trivial_sets():
    m = make_mollifier(2, 0.5)
    grid = Grid.uniform([(-1.0, 1.0)] * 2, 1 / 16)
    assert np.all(indicator_convolve(everything(2), m, grid).values == 1.0)
    assert np.all(indicator_convolve(empty_set(2), m, grid).values == 0.0)
    g = indicator_convolve(closed_ball([0.0, 0.0], 2.0), m, grid)
    assert g.values[16, 16, 0] == pytest.approx(1.0, abs=1e-6)


def test_indicator_convolve_range_and_plateaus():
    m = make_mollifier(1, 0.5)
    grid = Grid.uniform([(-3.0, 3.0)], 1 / 32)
    g = indicator_convolve(closed_ball([0.0], 1.0), m, grid)
    x = grid.axes()[0]
    v = g.values[..., 0]
    assert v.min() >= 0 and v.max() <= 1 + 1e-6
    assert np.all(v[np.abs(x) < 1 - 0.5 - 1e-9] == 1.0)
    assert np.all(v[np.abs(x) > 1 + 0.5 + 1e-9] == 0.0)


def test_indicator_convolve_matches_closed_form():
    oracle = CutoffOracle(0.5)
    grid = Grid.uniform([(-3.0, 3.0)], 1 / 128)
    g = indicator_convolve(closed_ball([0.0], 1.0), make_mollifier(1, 0.5), grid)
    x = grid.axes()[0]
    # a Riemann sum against a closed indicator whose edge sits on a node is off by
    # at most half a cell of kernel mass, i.e. first order in h
    h = grid.spacing[0]
    err = np.abs(g.values[..., 0] - oracle.derivatives(x, 1.0)[0]).max()
    assert err <= h * oracle.rho(np.zeros(1))[0]


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        indicator_convolve(everything(1), make_mollifier(1, 0.5), Grid.uniform([(-1.0, 1.0)], 0.1))


@pytest.mark.parametrize("eps", [1.0, 0.5])
def test_derivative_bounds_1d(eps):
    m = make_mollifier(1, eps)
    h = eps / 8
    grid = Grid.uniform([(-4.0, 4.0)], h)
    g = indicator_convolve(closed_ball([0.0], 1.0), m, grid)
    rep0 = derivative_bound_check(g, m, (0,))
    assert rep0.bound == pytest.approx(1.0, abs=1e-6) and rep0.passed
    for k in (1, 2, 3):
        assert derivative_bound_check(g, m, (k,)).passed


def test_step_constants():
    m1, mq = make_mollifier(1, 0.5), make_mollifier(1, 0.125)
    alpha, tau = (3,), (1,)
    assert far_field_constant(m1, alpha, tau) == pytest.approx(4 * m1.l1_norm((2,)))
    # eps = 1/(4 r2) with r2 = 2: bound of d^(alpha - tau) is 4^2 r2^2 ||d^2 rho||
    assert mq.derivative_bound((2,)) == pytest.approx(16 * 4 * mq.l1_norm((2,)))
    assert boundary_constant(mq, alpha, tau) == pytest.approx(16 * mq.l1_norm((2,)))


def test_far_field_cutoff_plateau_and_block_constancy():
    gx = Grid.uniform([(-5.0, 5.0)], 1 / 16)
    gy = Grid.uniform([(-2.0, 2.0)], 1 / 4)
    grid = Grid.product(gx, gy)
    r = 2.0
    eta = far_field_cutoff(r, "first", grid)
    v = eta.values
    x = gx.axes()[0]
    assert np.all(np.abs(v[np.abs(x) <= r][:, 0] - 1.0) <= 1e-6)
    assert np.all(v[np.abs(x) > r + 1][:, 0] == 0.0)
    assert np.array_equal(v[:, 0], v[:, -1])
    assert v.min() >= 0 and v.max() <= 1 + 1e-9


def test_boundary_cutoff_examples():
    grid = Grid.uniform([(0.0, 4.0)], 1 / 128)
    U = half_space(grid.box)
    x = grid.axes()[0]
    plateaus = []
    for r2 in (1.0, 2.0, 4.0):
        eta = boundary_cutoff(r2, U, grid).values
        assert np.all(eta[x < 1 / (2 * r2)] == 0.0)
        assert np.all(np.abs(eta[x >= 1 / r2] - 1.0) <= 1e-6)
        plateaus.append(set(np.flatnonzero(np.abs(eta - 1.0) <= 1e-6)))
    assert abs(boundary_cutoff(1.0, U, grid).values[32] - 0.0) == 0.0  # x = 0.25
    assert abs(boundary_cutoff(1.0, U, grid).values[192] - 1.0) <= 1e-6  # x = 1.5
    assert plateaus[0] <= plateaus[1] <= plateaus[2]


def test_urysohn_cutoff_ramp():
    grid = Grid(((-3.0, 3.0),), (61,))
    h = urysohn_cutoff([(-1.0, 1.0)], 1.0, grid).values
    x = grid.axes()[0]
    assert np.all(h[np.abs(x) <= 1] == 1.0)
    assert h[np.argmin(np.abs(x - 1.5))] == pytest.approx(0.5)
    assert np.all(h[np.abs(x) >= 2] == 0.0)


def test_urysohn_approximation_bound():
    grid = Grid(((-12.0, 12.0),), (2401,))
    gamma = GridFunction.sample(lambda p: 1.0 / (1 + p[..., 0] ** 2), grid)
    rep = urysohn_approximation(gamma, constant(1.0), poly_radial(1), coordinate_abs(0), 0.2)
    assert rep.passed and rep.error <= rep.bound


def test_leibniz_expansion_of_cutoff_product():
    grid = Grid.uniform([(-4.0, 4.0)], 1 / 64)
    eta = far_field_cutoff(1.0, "first", grid).function
    gamma = GridFunction.sample(lambda p: np.sin(p[..., 0]) * np.exp(-p[..., 0] ** 2 / 4), grid)
    for k in (1, 2):
        lhs = gamma.multiply(eta.values[..., 0]).derivative((k,))
        rhs = leibniz_1var(eta, gamma, (k,))
        sel = lhs.mask & rhs.mask
        scale = np.abs(lhs.values[sel]).max()
        assert np.abs(lhs.values[sel] - rhs.values[sel]).max() <= 50 * (1 / 64) ** 2 * scale * 10


def _compact_gamma(grid):
    def f(p):
        u = 1 - (p[..., 0] ** 2 + p[..., 1] ** 2)
        out = np.zeros(p.shape[:-1])
        m = u > 0
        out[m] = np.exp(-1 / u[m])
        return out
    return GridFunction.sample(f, grid)


def test_density_errors_vanish_for_compact_support():
    g1 = Grid.uniform([(-4.0, 4.0)], 1 / 16)
    gamma = _compact_gamma(Grid.product(g1, g1))
    F = schwartz_family(1, 1)
    table = density_pipeline(gamma, F, F, 1, 1, sup_norm(), [2, 3])
    assert all(row["error"] == 0.0 for row in table.rows)
    assert table.monotone()
    assert all(table.metadata["support_compact"].values())


def test_density_requires_hypotheses():
    g1 = Grid.uniform([(-4.0, 4.0)], 1 / 16)
    gamma = _compact_gamma(Grid.product(g1, g1))
    with pytest.raises(HypothesisViolated):
        density_pipeline(gamma, constant_family(), schwartz_family(1, 1), 1, 1, sup_norm(), [2])


def test_convergence_table_serialization():
    rows = [{"r": 1.0, "f_index": 0, "alpha": (0,), "beta": (1,), "error": 0.5},
            {"r": 2.0, "f_index": 0, "alpha": (0,), "beta": (1,), "error": 0.25}]
    t = ConvergenceTable(rows, {"note": "x"})
    assert t.to_csv().splitlines()[0] == "r,f_index,alpha,beta,error"
    assert t.to_csv() == ConvergenceTable(list(rows), {"note": "x"}).to_csv()
    data = json.loads(t.to_json())
    assert data["schema"] == 1 and len(data["rows"]) == 2
    assert t.monotone() and t.final_max() == 0.25
    assert not ConvergenceTable(rows[::-1] + [{**rows[0], "r": 3.0, "error": 1.0}], {}).monotone()


@given(st.floats(0.6, 3.0))
@settings(max_examples=10, deadline=None)
def test_cutoff_range_property(r):
    grid = Grid.uniform([(-5.0, 5.0)], 1 / 16)
    v = far_field_cutoff(r, "first", grid).values
    assert v.min() >= -1e-9 and v.max() <= 1 + 1e-9
