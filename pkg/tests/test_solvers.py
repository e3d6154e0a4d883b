import math

import numpy as np
import pytest

from ivpcomplexity.fooling import build_thm1
from ivpcomplexity.geometry import ProblemSpec
from ivpcomplexity.harness import adversary_pair_for_grid, measure_separation
from ivpcomplexity.information import uniform_grid_info
from ivpcomplexity.solvers import (GridInterpolant, PolynomialCutoffField, SolverReport, Trajectory,
                                   reference_solve, solve_adaptive_taylor, solve_nonadaptive_grid,
                                   sup_distance, taylor_charge, taylor_coefficients)


class Constant:
    def __init__(self, c):
        self.c = np.asarray(c, float)
        self.d = self.c.size

    def __call__(self, Y):
        return np.tile(self.c, (np.atleast_2d(Y).shape[0], 1))

    def partial(self, Y, component, order):
        n = np.atleast_2d(Y).shape[0]
        return np.full(n, self.c[component] if not any(order) else 0.0)


class Affine:
    def __init__(self, A, b):
        self.A = np.asarray(A, float)
        self.b = np.asarray(b, float)

    def __call__(self, Y):
        return np.atleast_2d(Y) @ self.A.T + self.b


class Path:
    def __init__(self, eta, c, a):
        self.eta, self.c, self.a = np.asarray(eta), np.asarray(c), a

    def __call__(self, t):
        return self.eta + np.multiply.outer(np.asarray(t) - self.a, self.c)

    def derivative(self, t):
        return self.c


def test_zero_field_is_exact():
    spec = ProblemSpec.create(2, 2)
    z = reference_solve(Constant([0.0, 0.0]), spec)
    assert np.all(z(np.linspace(0, 1, 11)) == spec.eta)


def test_constant_field_is_exact():
    spec = ProblemSpec.create(2, 2)
    c = np.array([0.01, -0.02])
    z = reference_solve(Constant(c), spec)
    ts = np.linspace(0, 1, 101)
    assert np.max(np.abs(z(ts) - (spec.eta + np.outer(ts, c)))) <= 1e-12


def test_plateau_trajectory_is_affine():
    spec = ProblemSpec.create(2, 1)
    pair = build_thm1(spec, uniform_grid_info(spec, 16))
    z = reference_solve(pair.f1, spec)
    ts = np.linspace(0, 1, 201)
    assert np.max(np.abs(z(ts) - pair.z1(ts))) <= 1e-10


def test_trajectory_domain_and_grid():
    tr = Trajectory(0.0, 1.0, 1, base=Path([0.0], [1.0], 0.0))
    with pytest.raises(ValueError):
        tr(1.5)
    with pytest.raises(ValueError):
        Trajectory(0.0, 1.0, 1, times=[0.0, 0.5, 0.5, 1.0])


def test_sup_distance_offsets():
    a = Trajectory(0.0, 1.0, 2, base=Path([0.0, 0.0], [1.0, 2.0], 0.0))
    b = Trajectory(0.0, 1.0, 2, base=Path([0.3, -0.1], [1.0, 2.0], 0.0))
    assert sup_distance(a, a) == 0.0
    assert sup_distance(a, b) == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(ValueError):
        sup_distance(a, b, samples=1)


def test_solver_report_validation():
    with pytest.raises(ValueError):
        SolverReport(0, 1.0, 0.0, "x")
    with pytest.raises(ValueError):
        SolverReport(4, -1.0, 0.0, "x")


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_interpolant_reproduces_polynomials(degree):
    lo, hi, g = np.zeros(2), np.ones(2), 6
    axes = (np.arange(g) + 0.5) / g
    X, Y = np.meshgrid(axes, axes, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    if degree == 0:
        f = lambda P: np.full((P.shape[0], 1), 3.0)
    elif degree == 1:
        f = lambda P: (2 * P[:, 0] - P[:, 1] + 1)[:, None]
    else:
        f = lambda P: (P[:, 0] ** 2 + P[:, 0] * P[:, 1])[:, None]
    interp = GridInterpolant(lo, hi, g, f(nodes), degree)
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    assert np.allclose(interp(pts), f(pts), atol=1e-12)


def test_interpolant_stencil_ties_go_low():
    vals = np.arange(4.0)[:, None]
    interp = GridInterpolant([0.0], [4.0], 4, vals, 0)
    # node positions 0.5, 1.5, ...; the midpoint 1.0 is a tie between nodes 0 and 1
    assert interp(np.array([[1.0]]))[0, 0] == 0.0
    assert interp(np.array([[1.01]]))[0, 0] == 1.0


def test_grid_solver_exact_for_affine_fields():
    spec = ProblemSpec.create(2, 2)
    c = np.array([0.001, 0.002])
    traj = solve_nonadaptive_grid(Constant(c), spec, 16)
    ts = np.linspace(0, 1, 51)
    assert np.max(np.abs(traj(ts) - (spec.eta + np.outer(ts, c)))) <= 1e-10
    assert traj.info_count == 16
    with pytest.raises(ValueError):
        solve_nonadaptive_grid(Constant(c), spec, 3)


def test_grid_solver_cannot_see_perturbation():
    spec = ProblemSpec.create(2, 2)
    pair, full = adversary_pair_for_grid(spec, 64)
    _, z1, z2, _ = measure_separation(pair)
    approx = solve_nonadaptive_grid(pair.f2, spec, 64)
    sep = sup_distance(z1, z2)
    err = max(sup_distance(approx, z1), sup_distance(approx, z2))
    assert err >= sep / 2
    assert sup_distance(approx, z1) <= 1e-3 * sep


def test_taylor_charge():
    assert taylor_charge(2, 1) == 2
    assert taylor_charge(2, 2) == 6
    assert taylor_charge(3, 3) == 30


def test_taylor_coefficients_match_symbolic_series():
    spec = ProblemSpec.create(1, 3)
    f = PolynomialCutoffField(spec)
    z0 = np.array([0.5])
    c = taylor_coefficients(f, z0, 3)
    s, u = f.scale, 0.5 - f.center[0]
    # z' = s (1/2 - u + u^2/2) =: g(u); z'' = g'(u) g; z''' = g'' g^2 + g'^2 g
    g = s * (0.5 - u + 0.5 * u * u)
    g1 = s * (u - 1.0)
    g2 = s
    assert c[1, 0] == pytest.approx(g, rel=1e-14)
    assert c[2, 0] == pytest.approx(g1 * g / 2, rel=1e-14)
    assert c[3, 0] == pytest.approx((g2 * g * g + g1 * g1 * g) / 6, rel=1e-12)


def test_taylor_exact_for_constant_field():
    spec = ProblemSpec.create(2, 2)
    c = np.array([0.01, 0.03])
    traj = solve_adaptive_taylor(Constant(c), spec, 4)
    ts = np.linspace(0, 1, 33)
    assert np.max(np.abs(traj(ts) - (spec.eta + np.outer(ts, c)))) <= 1e-14
    assert traj.info_count == 4 * taylor_charge(2, 2)


def test_taylor_second_order_ratio():
    spec = ProblemSpec.create(2, 2)
    f = PolynomialCutoffField(spec)
    ref = reference_solve(f, spec, tol=1e-13)
    errs = [sup_distance(solve_adaptive_taylor(f, spec, s), ref) for s in (64, 128, 256)]
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.2 <= e1 / e2 <= 4.8


def test_sample_refinement_on_fooling_pair():
    spec = ProblemSpec.create(2, 1)
    pair = build_thm1(spec, uniform_grid_info(spec, 64))
    _, z1, z2, _ = measure_separation(pair)
    coarse = sup_distance(z1, z2, 2001)
    fine = sup_distance(z1, z2, 4001)
    assert abs(fine - coarse) <= 0.01 * fine


def test_gronwall_sanity():
    spec = ProblemSpec.create(2, 2)
    f = PolynomialCutoffField(spec)
    shift = np.array([1e-4, -2e-4])
    g = lambda Y: f(Y) + shift
    za = reference_solve(f, spec, tol=1e-12)
    zb = reference_solve(g, spec, tol=1e-12)
    delta = float(np.max(np.abs(shift)))
    bound = delta * (spec.b - spec.a) * math.exp(spec.L * (spec.b - spec.a))
    assert 0 < sup_distance(za, zb) <= bound
