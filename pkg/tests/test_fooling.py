import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ivpcomplexity.bump import eval_h
from ivpcomplexity.fooling import (BumpSum, ConstructionError, FoolingPair, build_control, build_d1,
                                   build_plateau_field, build_thm1, build_thm2i, build_thm2ii,
                                   class_check_points, fd_class_bound, normalized_null_vector, path_integral,
                                   predicted_separation, relative_info_residuals, select_betas_linear,
                                   select_betas_mixed, select_betas_standard, smallest_p,
                                   verify_zero_information)
from ivpcomplexity.geometry import BaseSubdivision, CellGrid, ProblemSpec
from ivpcomplexity.information import (InfoOperator, LinearFunctional, StandardAtom, evaluate_info,
                                       quadrature_functionals, random_atoms, random_linear_functionals,
                                       uniform_grid_info)


def _region(spec):
    return spec.eta - spec.T, spec.eta.copy()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 10 ** 6))
def test_null_vector_properties(rows, extra, seed):
    A = np.random.default_rng(seed).normal(size=(rows, rows + extra))
    beta, i = normalized_null_vector(A)
    assert beta[i] == 1.0
    assert np.max(np.abs(beta)) == 1.0
    assert np.max(np.abs(A @ beta)) <= 1e-10 * np.linalg.norm(A)


def test_null_vector_zero_matrix_and_full_rank():
    beta, i = normalized_null_vector(np.zeros((2, 3)))
    assert np.array_equal(beta, np.ones(3)) and i == 0
    with pytest.raises(ConstructionError):
        normalized_null_vector(np.eye(3))


def test_null_vector_single_functional():
    beta, _ = normalized_null_vector(np.array([[0.7, 0.0, 0.0]]))
    assert beta[0] == pytest.approx(0.0, abs=1e-15)
    assert np.max(np.abs(beta)) == 1.0


def test_plateau_field_rejects_large_alpha():
    spec = ProblemSpec.create(2, 1)
    with pytest.raises(ValueError):
        build_plateau_field(spec, [2 * spec.delta, 0.0])


@pytest.mark.parametrize("d,r", [(2, 1), (2, 2), (3, 1)])
def test_thm1_zero_information_random_atoms(d, r):
    spec = ProblemSpec.create(d, r)
    rng = np.random.default_rng(11)
    lo, hi = _region(spec)
    N = InfoOperator.from_atoms(random_atoms(rng, 64, lo, hi, r=r, components=d))
    pair = build_thm1(spec, N)
    res = verify_zero_information(pair, N)
    assert np.all(res == 0.0)
    assert pair.meta["eliminated"] > 0


def test_thm1_kstar_has_half_unit_cells():
    spec = ProblemSpec.create(2, 2)
    sub = BaseSubdivision(spec.eta, spec.T, 4, 2)
    grid = CellGrid(sub, sub.pm)
    for seed in range(100):
        atoms = random_atoms(np.random.default_rng(seed), 16, *_region(spec))
        beta, kstar = select_betas_standard(grid, atoms, 2)
        cells = beta.reshape(-1, grid.cells_per)[sub.index(kstar)]
        assert cells.sum() >= sub.pm / 2
        idx = grid.locate(np.array([a.point for a in atoms]))
        assert np.all(beta[idx[idx >= 0]] == 0.0)


def test_predicted_separation_matches_independent_quadrature():
    spec = ProblemSpec.create(2, 1)
    pair = build_thm1(spec, uniform_grid_info(spec, 64))
    z1 = pair.z1
    # quadrature of the explicit formula: along z1 only the vertical coordinate varies in each cell
    grid = pair.grid
    total = 0.0
    breaks = pair.cell_breaks()
    for j, (u, v) in enumerate(zip(breaks[:-1], breaks[1:])):
        c = grid.flat_index(pair.kstar, j)
        if pair.beta[c] == 0:
            continue

        def g(t, c=c):
            x = grid.unit_coords(z1(np.array([t])), np.array([c]))[0]
            return pair.c_hat * grid.scale[c] ** spec.r * float(np.prod(eval_h(x)))

        total += quad(g, u, v, epsabs=0, epsrel=1e-12)[0]
    closed = predicted_separation(pair) * (1 + spec.L * (spec.b - spec.a))
    assert total == pytest.approx(closed, rel=1e-8)
    assert path_integral(pair) == pytest.approx(closed, rel=1e-8)


def test_thm2i_residual_and_normalization():
    spec = ProblemSpec.create(2, 2)
    lo, hi = _region(spec)
    lin = random_linear_functionals(np.random.default_rng(4), 12, lo, hi, atoms_per=5, r=1, components=2)
    N = InfoOperator(tuple(lin), k=12)
    pair = build_thm2i(spec, N)
    assert np.max(np.abs(pair.beta)) == 1.0
    assert pair.meta["constraint_residual"] <= 1e-10 * max(pair.meta["constraint_scale"], 1e-300)
    res, scale = relative_info_residuals(pair, N)
    assert np.all(np.abs(res) <= 1e-10 * scale)


def test_select_betas_linear_needs_enough_bumps():
    spec = ProblemSpec.create(2, 1)
    sub = BaseSubdivision(spec.eta, spec.T, 2, 1)
    grid = CellGrid(sub, 1)
    unit = BumpSum(grid, np.ones(grid.ncells), 1.0, 1)
    bumps = [unit.restricted(np.arange(grid.ncells) == j) for j in range(grid.ncells)]
    lin = [LinearFunctional(((1.0, StandardAtom((0.45, 0.45))),))] * 2
    with pytest.raises(ValueError):
        select_betas_linear(bumps, lin)


def test_smallest_p():
    assert smallest_p(2.0, 2) == 3
    assert smallest_p(0.5, 2) == 2
    for alpha_info, d in [(2.0, 2), (3.0, 3), (0.1, 2)]:
        p = smallest_p(alpha_info, d)
        assert alpha_info <= p ** (d - 1) - 2 / p
        assert p == 1 or alpha_info > (p - 1) ** (d - 1) - 2 / (p - 1)


@pytest.mark.parametrize("n", [16, 64, 144, 256])
def test_thm2ii_counting(n):
    spec = ProblemSpec.create(2, 1, p=3)
    k = int(2 * math.sqrt(n))
    rng = np.random.default_rng(n)
    lo, hi = _region(spec)
    atoms = random_atoms(rng, n - k, lo, hi)
    lin = quadrature_functionals(np.random.default_rng(0), k, lo, hi, 40)
    N = InfoOperator.mixed(atoms, lin, alpha_info=2.0)
    pair = build_thm2ii(spec, N, 2.0)
    m = pair.meta
    pm = pair.grid.sub.pm
    assert pair.params["p"] == 3
    assert m["excluded"] <= 2 * (n - k) / pm
    assert k < pm - 2 * (n - k) / pm
    assert m["unit_cells"] >= pm / 2
    res, scale = relative_info_residuals(pair, N)
    assert np.all(res[: n - k] == 0.0)
    assert np.all(np.abs(res[n - k:]) <= 1e-10 * scale[n - k:])


def test_thm2ii_rejects_too_many_linear():
    spec = ProblemSpec.create(2, 1, p=3)
    sub = BaseSubdivision(spec.eta, spec.T, 2, 1)
    grid = CellGrid(sub, sub.pm)
    lo, hi = _region(spec)
    lin = quadrature_functionals(np.random.default_rng(0), 3, lo, hi, 10)
    N = InfoOperator.mixed([StandardAtom(tuple(spec.eta - 0.01))], lin)
    with pytest.raises(ConstructionError):
        select_betas_mixed(grid, N, 1, 3.0)


@pytest.mark.parametrize("k", [0, 2])
def test_d1_construction(k):
    spec = ProblemSpec.create(1, 2)
    lo, hi = spec.eta, spec.eta + spec.delta
    rng = np.random.default_rng(5)
    N = InfoOperator.mixed(random_atoms(rng, 30, lo, hi, r=2),
                           quadrature_functionals(np.random.default_rng(1), k, lo, hi, 200))
    pair = build_d1(spec, N)
    assert pair.grid.ncells == 2 * N.n * (k + 1)
    assert np.max(np.abs(pair.beta)) == 1.0
    res = verify_zero_information(pair, N)
    assert np.all(res[: N.n - k] == 0.0)
    assert np.all(np.abs(res[N.n - k:]) <= 1e-12)


def test_pair_serialization_bit_identical():
    spec = ProblemSpec.create(2, 2)
    N = InfoOperator.from_atoms(random_atoms(np.random.default_rng(2), 30, *_region(spec)))
    pair = build_thm1(spec, N)
    again = FoolingPair.loads(pair.dumps())
    Y = np.random.default_rng(0).uniform(*pair.grid.region_box(), (500, 2))
    assert np.array_equal(pair.f2(Y), again.f2(Y))
    assert np.array_equal(evaluate_info(N, pair.f2), evaluate_info(N, again.f2))


def test_control_pair_is_zero():
    spec = ProblemSpec.create(2, 1)
    pair = build_control(spec, 16)
    Y = np.random.default_rng(0).uniform(*pair.grid.region_box(), (100, 2))
    assert np.array_equal(pair.f1(Y), pair.f2(Y))
    assert path_integral(pair) == 0.0


@pytest.mark.parametrize("d,r", [(1, 2), (2, 1), (2, 2), (3, 1)])
def test_class_membership(d, r):
    spec = ProblemSpec.create(d, r)
    if d == 1:
        N = InfoOperator.from_atoms(random_atoms(np.random.default_rng(0), 16, spec.eta, spec.eta + spec.delta))
        pair = build_d1(spec, N)
    else:
        pair = build_thm1(spec, uniform_grid_info(spec, 64))
    Y, steps = class_check_points(pair)
    assert Y.shape[0] == 1000
    for f in (pair.f1, pair.f2):
        assert fd_class_bound(f, Y, steps, r) <= 1.05 * spec.D
    # the perturbation itself stays below D/2
    assert np.max(np.abs(pair.hat(Y))) <= spec.D / 2
