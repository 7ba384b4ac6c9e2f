"""Acceptance suite: one test per criterion, each recording a PASS/FAIL verdict line."""
import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from oracles import gaussian_density_error
from parser_golden import CASES, run_case
from test_mollify import FROZEN_L1
from wfs.calculus import leibniz_1var, leibniz_2var, product_of, taylor_bound_check
from wfs.core.domain import box_domain, closed_ball, full_space, half_space, product_domain
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import multi_indices
from wfs.core.seminorm import coordinate_abs, p_norm, sup_norm
from wfs.explaw import identity_suite
from wfs.liegroup import (AlgebraCurve, AlgebraMappingCurve, evaluation_commutation_check, evolve, group_spec,
                          orthogonality_defect, pointwise_theta, random_algebra_element)
from wfs.mollify import density_pipeline, derivative_bound_check, indicator_convolve, make_mollifier
from wfs.weights import constant, gaussian_bump, o_certify, poly_radial, schwartz_family, tensor

SEMINORMS = [coordinate_abs(0), coordinate_abs(2), sup_norm(), p_norm(1), p_norm(2)]


@pytest.fixture(scope="module")
def explaw_suite():
    """The 100-seed identity/flip suite, run once for criteria 1 and 2."""
    g1 = Grid(((-3.0, 3.0),), (101,))
    grid = Grid.product(g1, g1)
    F = schwartz_family(1, 2)
    pairs = [(a, b) for a in F.members for b in F.members]
    orders = multi_indices(1, 2)
    mask = np.ones(grid.counts, dtype=bool)
    rows = []
    start = time.perf_counter()
    for seed in range(100):
        rng = np.random.default_rng(seed)
        gamma = GridFunction(grid, full_space(grid.box), rng.standard_normal(grid.counts + (3,)), mask)
        rows.extend(identity_suite(gamma, pairs, orders, orders, SEMINORMS))
    return rows, time.perf_counter() - start


def test_criterion_1_exponential_law_identity(explaw_suite, verdict):
    rows, seconds = explaw_suite
    worst = max(r.identity.rel_diff for r in rows)
    ok = worst <= 1e-12 and seconds <= 10.0 and len(rows) == 100 * 9 * 9 * len(SEMINORMS)
    assert verdict(1, ok, f"{len(rows)} checks, worst rel diff {worst:.2e}, {seconds:.1f} s")


def test_criterion_2_flip_invariance(explaw_suite, verdict):
    rows, _ = explaw_suite
    worst = max(r.flip.rel_diff for r in rows)
    assert verdict(2, worst <= 1e-12, f"{len(rows)} checks, worst rel diff {worst:.2e}")


def test_criterion_3_mollifier_derivative_bound(verdict):
    start = time.perf_counter()
    checked, ok = 0, True
    for n in (1, 2):
        for eps in (1.0, 0.5, 0.25):
            m = make_mollifier(n, eps)
            h = eps / 8
            L = h * math.ceil((1.0 + 2.5 * eps) / h)
            g = indicator_convolve(closed_ball(np.zeros(n), 1.0), m, Grid.uniform([(-L, L)] * n, h))
            for alpha in multi_indices(n, 3):
                rep = derivative_bound_check(g, m, alpha)
                # the bound itself comes from the frozen quadrature, not the package's L1 norms
                key = (n, tuple(alpha))
                if key in FROZEN_L1:
                    frozen = eps ** -alpha.order() * FROZEN_L1[key]
                    ok &= abs(rep.bound - frozen) <= 2e-6 * frozen
                ok &= rep.max_value <= rep.bound * (1 + 10 * h * h)
                checked += 1
    seconds = time.perf_counter() - start
    ok = ok and seconds <= 30.0
    assert verdict(3, ok, f"{checked} (n, eps, alpha) bounds, {seconds:.1f} s")


def test_criterion_4_density_pipeline(verdict):
    # the threshold: the continuous error at r = 5, from the closed-form cutoff and Hermite derivatives
    oracle = gaussian_density_error(5.0)
    g1 = Grid.uniform([(-8.0, 8.0)], 1 / 16)
    grid = Grid.product(g1, g1)
    gamma = GridFunction.sample(lambda p: np.exp(-p[..., 0] ** 2 - p[..., 1] ** 2), grid)
    F = schwartz_family(1, 2)
    radii = [1, 2, 3, 4, 5]
    full = density_pipeline(gamma, F, F, 2, 2, coordinate_abs(0), radii)

    gx = Grid.uniform([(0.0, 6.0)], 1 / 160)
    gy = Grid.uniform([(-6.0, 6.0)], 1 / 16)
    bgrid = Grid.product(gx, gy)
    U = product_domain(half_space(gx.box), full_space(gy.box))
    bgamma = GridFunction.sample(lambda p: p[..., 0] ** 4 * np.exp(-p[..., 0] ** 2 - p[..., 1] ** 2), bgrid, U)
    boundary = density_pipeline(bgamma, F, F, 2, 2, coordinate_abs(0), radii)

    ok = (oracle <= 1e-6 and full.monotone(1e-12) and full.final_max() <= 1e-6
          and boundary.monotone(1e-12))
    assert verdict(4, ok, f"final {full.final_max():.2e} (oracle {oracle:.2e}), "
                          f"boundary monotone {boundary.monotone(1e-12)}")


def _random_weight(rng):
    if rng.random() < 0.5:
        return poly_radial(int(rng.integers(0, 3)))
    return gaussian_bump(1, float(rng.uniform(0.6, 1.5)))


def _random_smooth(rng, dims):
    a, w, s = rng.uniform(0.5, 2.0, dims), rng.uniform(0.5, 2.0, dims), rng.uniform(1.0, 3.0, dims)
    phase = rng.uniform(0, np.pi, dims)

    def func(p):
        out = np.ones(p.shape[:-1])
        for i in range(dims):
            out = out * a[i] * np.sin(w[i] * p[..., i] + phase[i]) * np.exp(-p[..., i] ** 2 / s[i])
        return out
    return func


def test_criterion_5_leibniz(verdict):
    rng = np.random.default_rng(2024)
    h = 0.02
    g1 = Grid.uniform([(-3.0, 3.0)], h)
    g2 = Grid.product(Grid.uniform([(-2.0, 2.0)], h), Grid.uniform([(-2.0, 2.0)], h))
    worst = 0.0
    for _ in range(20):
        f = _random_weight(rng)
        gamma = GridFunction.sample(_random_smooth(rng, 1), g1)
        k = int(rng.integers(1, 3))
        lhs, rhs = product_of(f, gamma).derivative((k,)), leibniz_1var(f, gamma, (k,))
        sel = lhs.mask & rhs.mask
        scale = max(1.0, np.abs(lhs.values[sel]).max())
        worst = max(worst, np.abs(lhs.values[sel] - rhs.values[sel]).max() / (50 * h * h * scale))

        f2 = tensor(_random_weight(rng), _random_weight(rng))
        gamma2 = GridFunction.sample(_random_smooth(rng, 2), g2)
        alpha, beta = [((1,), (0,)), ((0,), (1,)), ((1,), (1,)), ((2,), (0,))][int(rng.integers(0, 4))]
        lhs, rhs = product_of(f2, gamma2).derivative(alpha + beta), leibniz_2var(f2, gamma2, alpha, beta)
        sel = lhs.mask & rhs.mask
        scale = max(1.0, np.abs(lhs.values[sel]).max())
        worst = max(worst, np.abs(lhs.values[sel] - rhs.values[sel]).max() / (50 * h * h * scale))
    assert verdict(5, worst <= 1.0, f"40 pairs, worst error / (50 h^2 scale) = {worst:.3f}")


def test_criterion_6_taylor_bound(verdict):
    rng = np.random.default_rng(6)
    grid = Grid.uniform([(-0.5, 1.5)], 0.001)
    closed = box_domain([(0.0, 1.0)], closed=True)
    passes = 0
    for _ in range(20):
        k = int(rng.integers(1, 4))
        a, b, c = rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(1.0, 4.0)
        # vanishes to order k at the boundary point 0
        gamma = GridFunction.sample(lambda p: p[..., 0] ** k * (a + b * np.sin(c * p[..., 0])), grid, closed)
        x = float(rng.uniform(0.05, 1.0))
        passes += taylor_bound_check(gamma, [x], [0.0], k).passed
    fails = 0
    for j in range(5):
        a = rng.uniform(0.5, 2.0)
        # first derivative a at 0 does not vanish, so no order-2 estimate can hold near 0
        gamma = GridFunction.sample(lambda p: a * p[..., 0] + np.sin(p[..., 0]) ** 2, grid, closed)
        fails += not taylor_bound_check(gamma, [0.01 + 0.01 * j], [0.0], 2, negative_control=True).passed
    assert verdict(6, passes == 20 and fails == 5, f"{passes}/20 positive PASS, {fails}/5 negative controls FAIL")


def test_criterion_7_evolution(verdict):
    details, ok = [], True
    for label in ("so3", "gl3"):
        G = group_spec(label)
        A = random_algebra_element(G, np.random.default_rng(7))
        curve = AlgebraCurve.constant(A, G)
        oracle = expm(A)
        end = evolve(curve, 1000)
        err = np.linalg.norm(end.endpoint() - oracle) / np.linalg.norm(oracle)
        errs = [np.linalg.norm(evolve(curve, s).endpoint() - oracle) / np.linalg.norm(oracle) for s in (10, 20, 40)]
        ratios = [e1 / e2 for e1, e2 in zip(errs, errs[1:])]
        ok &= err <= 1e-8 and all(12 <= r <= 20 for r in ratios)
        details.append(f"{label} err {err:.1e} ratios {ratios[0]:.1f} {ratios[1]:.1f}")
        if label == "so3":
            drift = max(orthogonality_defect(m) for m in end.values)
            ok &= drift <= 1e-10
            details.append(f"drift {drift:.1e}")
    assert verdict(7, ok, ", ".join(details))


def test_criterion_8_evaluation_commutation(verdict):
    rng = np.random.default_rng(8)
    g1 = Grid(((-1.0, 1.0),), (5,))
    grid = Grid.product(g1, Grid(((0.0, 2.0),), (6,)))
    exact, nodes = True, 0
    for trial in range(10):
        G = group_spec(("gl3", "so3", "ut3")[trial % 3])
        times = int(rng.integers(5, 12))
        vals = np.array([[random_algebra_element(G, rng) for _ in range(30)] for _ in range(times)])
        Gamma = AlgebraMappingCurve(np.linspace(0, 1, times), grid, vals.reshape((times,) + grid.counts + (3, 3)), G)
        steps = int(rng.integers(20, 60)) // (times - 1) * (times - 1)
        theta = pointwise_theta(Gamma, steps)
        for index in np.ndindex(*grid.counts):
            exact &= evaluation_commutation_check(Gamma, index, steps, theta, tol=0.0).passed
            nodes += 1
    # negative control: pair each node with its neighbour's evolution
    shifted = type(theta)(theta.times, theta.grid, np.roll(theta.values, 1, axis=1), theta.group)
    control_fails = not evaluation_commutation_check(Gamma, (1, 0), steps, shifted, tol=0.0).passed
    assert verdict(8, exact and control_fails, f"{nodes} nodes bit-exact, negative control fails: {control_fails}")


def test_criterion_9_o_certificates(verdict):
    cert = o_certify(constant(1.0), poly_radial(1), 0.1, 10.0, 0.01)
    near = cert.ok and abs(cert.radius - 3.0) <= 0.01
    pairs = [(1.0, 1.0, 0.5), (2.0, 1.0, 1.0), (1.0, 3.0, 0.1), (5.0, 5.0, 0.99)]
    fails = [not o_certify(constant(a), constant(b), eps, 10.0, 0.01).ok for a, b, eps in pairs]
    assert verdict(9, near and all(fails), f"radius {cert.radius:.4f} vs 3.0, {sum(fails)}/{len(fails)} "
                                           "constant pairs fail")


def test_criterion_10_expression_parser(verdict):
    results = [run_case(c) for c in CASES]
    passed = sum(ok for ok, _ in results)
    positions = all(ok for c, (ok, _) in zip(CASES, results) if c[0] == "error")
    assert verdict(10, passed == len(CASES) >= 50 and positions, f"{passed}/{len(CASES)} golden cases")
