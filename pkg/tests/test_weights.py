"""Weights, families, o-certificates and derivative domination."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wfs.core.grid import Grid, GridFunction
from wfs.core.seminorm import coordinate_abs, weighted_seminorm_c
from wfs.errors import (DimensionMismatch, InvalidEpsilon, MissingStrategy, NoPositiveMember,
                        NonpositiveCoefficient, NotDominatable, OrderUnavailable)
from wfs.weights import (axis_poly, bump_family, compact_bump, compact_inf_witness, constant,
                         constant_family, dominating_derivative, gaussian_bump, o_certify, poly_radial,
                         probe_grid, schwartz_family, tensor, tensor_family, tensor_o_strategy,
                         weight_sum, WeightFamily)

ALL_WEIGHTS = [constant(2.0), poly_radial(0), poly_radial(2), poly_radial(1, 2, r=2.0), gaussian_bump(1, 0.7),
               compact_bump([0.5], 1.0), axis_poly([1, 2]), tensor(poly_radial(1), gaussian_bump())]


@pytest.mark.parametrize("f", ALL_WEIGHTS, ids=lambda f: f.label)
def test_weights_nonnegative_at_random_points(f):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-6, 6, size=(100_000, f.dimension))
    assert np.all(f(pts) >= 0)


@pytest.mark.parametrize("f", [poly_radial(2), gaussian_bump(1, 0.8), compact_bump([0.0], 2.0)],
                         ids=lambda f: f.label)
@pytest.mark.parametrize("order", [1, 2, 3])
def test_symbolic_derivatives_match_fd(f, order):
    h = 1e-3
    g = Grid(((-1.5, 1.5),), (3001,))
    gf = GridFunction.sample(lambda p: f(p), g)
    fd = gf.derivative((order,))
    exact = f.partial((order,), g.mesh())
    scale = max(1.0, np.abs(exact).max())
    assert np.abs(fd.values[..., 0] - exact).max() <= 10 * h * h * scale * 10 ** (order - 1)


def test_partial_beyond_max_order():
    f = poly_radial(1)
    with pytest.raises(OrderUnavailable):
        f.partial((f.max_order + 1,), np.zeros((1, 1)))


def test_weight_sum_identities():
    f = poly_radial(1)
    pts = np.linspace(-3, 3, 41)[:, None]
    assert np.array_equal(weight_sum([f], [1.0])(pts), f(pts))
    five = weight_sum([constant(1.0), constant(1.0)], [2.0, 3.0])
    assert np.allclose(five(pts), 5.0)
    assert np.allclose(five.partial((1,), pts), 0.0)


def test_weight_sum_errors():
    with pytest.raises(NonpositiveCoefficient):
        weight_sum([constant(1.0)], [0.0])
    with pytest.raises(DimensionMismatch):
        weight_sum([constant(1.0, 1), constant(1.0, 2)], [1.0, 1.0])


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_sum_weight_seminorm_subadditive(r1, r2, seed):
    g = Grid(((-3.0, 3.0),), (61,))
    rng = np.random.default_rng(seed)
    gf = GridFunction(g, GridFunction.sample(lambda p: p[..., 0], g).domain,
                      rng.standard_normal((61, 1)), np.ones(61, dtype=bool))
    q = coordinate_abs(0)
    f1, f2 = poly_radial(1), gaussian_bump()
    lhs = weighted_seminorm_c(gf, weight_sum([f1, f2], [r1, r2]), q)
    rhs = r1 * weighted_seminorm_c(gf, f1, q) + r2 * weighted_seminorm_c(gf, f2, q)
    assert lhs <= rhs * (1 + 1e-14)


def test_tensor_examples():
    f2 = poly_radial(1)
    t = tensor(constant(1.0), f2)
    pts = np.array([[0.3, 2.0], [-1.0, 0.5]])
    assert np.allclose(t(pts), f2(pts[:, 1:]))
    assert tensor(poly_radial(1), poly_radial(1))(np.array([[1.0, 2.0]]))[0] == pytest.approx(10.0)
    f, g = gaussian_bump(1, 0.5), poly_radial(2)
    assert np.allclose(tensor(f, g)(pts), tensor(g, f)(pts[:, ::-1]))


def test_tensor_partial_equals_product_of_factors_on_product_grid():
    f1, f2 = poly_radial(2), gaussian_bump(1, 1.3)
    t = tensor(f1, f2)
    g1 = Grid(((-2.0, 2.0),), (21,))
    grid = Grid.product(g1, g1)
    for alpha in [(0, 0), (1, 2), (3, 1)]:
        on_grid = t.partial_on_grid(alpha, grid)
        direct = t.partial(alpha, grid.mesh())
        prod = np.multiply.outer(f1.partial((alpha[0],), g1.mesh()), f2.partial((alpha[1],), g1.mesh()))
        assert np.allclose(on_grid, prod, rtol=1e-14, atol=0)
        assert np.allclose(direct, prod, rtol=1e-14, atol=1e-300)


def test_o_certify_examples():
    f1 = constant(1.0)
    fail = o_certify(f1, f1, 0.5, 10.0)
    assert not fail.ok
    cert = o_certify(f1, poly_radial(1), 0.1, 10.0, 0.01)
    assert cert.ok and abs(cert.radius - 3.0) <= 0.01
    cert = o_certify(poly_radial(1), poly_radial(2), 0.01, 20.0, 0.01)
    assert cert.ok and abs(cert.radius - np.sqrt(99)) <= 0.01
    with pytest.raises(InvalidEpsilon):
        o_certify(f1, f1, 0.0, 10.0)


@given(st.floats(0.02, 0.9))
@settings(max_examples=20, deadline=None)
def test_o_certificate_holds_outside_radius(eps):
    f, g = poly_radial(1), poly_radial(2)
    cert = o_certify(f, g, eps, 15.0, 0.05)
    assert cert.ok
    # the certificate speaks about probed nodes only
    x = probe_grid(1, 15.0, 0.05).mesh()
    outside = np.abs(x[:, 0]) > cert.radius
    assert np.all(f(x[outside]) <= eps * g(x[outside]))
    # analytic threshold: (1+x^2) <= eps (1+x^2)^2  iff  x^2 >= 1/eps - 1
    assert abs(cert.radius - np.sqrt(max(1 / eps - 1, 0))) <= 0.05 + 1e-12


def test_o_transitivity_sanity():
    f, g, h = constant(1.0), poly_radial(1), poly_radial(2)
    eps = 0.1
    assert o_certify(f, g, eps, 20.0, 0.05).ok and o_certify(g, h, eps, 20.0, 0.05).ok
    probe = probe_grid(1, 20.0, 0.05)
    c = float(np.max(g.on_grid(probe) / h.on_grid(probe)))
    assert o_certify(f, h, eps * eps * c, 20.0, 0.05).ok


def test_schwartz_family_strategy_certifies():
    F = schwartz_family(1, 2)
    for f in F.members:
        g = F.strategy(f)
        for eps in (1.0, 0.1, 0.01):
            assert o_certify(f, g, eps, 40.0).ok
    with pytest.raises(MissingStrategy):
        constant_family().strategy(constant(1.0))


def test_tensor_strategy_follows_sum_augmentation():
    F = schwartz_family(1, 1)
    strat = tensor_o_strategy(F, F)
    f = tensor(poly_radial(1), poly_radial(1))
    h = strat(f)
    x = np.array([[0.7, -1.2]])
    h1 = poly_radial(1)(x[:, :1]) + poly_radial(2)(x[:, :1])
    h2 = poly_radial(1)(x[:, 1:]) + poly_radial(2)(x[:, 1:])
    assert h(x)[0] == pytest.approx((h1 * h2)[0], rel=1e-14)
    probe = probe_grid(2, 12.0, 0.1, split=1)
    prod = o_certify(f, h, 0.1, 12.0, probe)
    assert prod.ok
    r1 = o_certify(poly_radial(1), weight_sum([poly_radial(1), poly_radial(2)], [1, 1]), 0.1, 12.0, 0.1).radius
    assert prod.radius <= r1 + 0.1 + 1e-12
    with pytest.raises(MissingStrategy):
        tensor_o_strategy(constant_family(), F)
    assert tensor_family(constant_family(), F).o_strategy is None


def test_dominating_derivative_examples():
    F = schwartz_family(1, 2)
    f = poly_radial(1)
    assert dominating_derivative(f, (0,), F).weight is f
    dom = dominating_derivative(f, (1,), F)
    x = np.linspace(-10, 10, 2001)[:, None]
    assert np.all(np.abs(f.partial((1,), x)) <= dom.weight(x))
    c = dominating_derivative(constant(1.0), (2,), constant_family())
    assert c.ratio == 0.0
    with pytest.raises(NotDominatable):
        dominating_derivative(poly_radial(2), (1,), WeightFamily([poly_radial(0)], name="p0"))


def test_compact_inf_witness():
    w = compact_inf_witness(constant_family(), [(-1.0, 1.0)])
    assert w.inf_value == 1.0
    F = bump_family([[-0.6], [0.6]], 1.0)
    w = compact_inf_witness(F, [(-1.0, 1.0)])
    assert w.inf_value > 0 and len(set(w.member_indices)) == 2
    with pytest.raises(NoPositiveMember):
        compact_inf_witness(bump_family([[5.0]], 1.0), [(-1.0, 1.0)])
