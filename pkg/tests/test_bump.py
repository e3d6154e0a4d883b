import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ivpcomplexity.bump import (H_MAX, Parallelepiped, ParallelepipedBump, certify_amplitude, eval_h,
                                eval_h_deriv, h_deriv_sup, integral_h, prefactor_table, recheck_bump,
                                sampled_sups, tensor_bump_partial)
from ivpcomplexity.fdiff import fd_partial, multi_indices

# 40-digit mpmath quadrature of h over [0, 1]
INTEGRAL_ORACLE = 0.007029858406609656239241270530353956076155

# sympy derivatives of exp(1/(x(x-1))) at x = 0.3, 0.5, 0.8 (mpmath, 20 digits)
DERIV_ORACLE = {
    0: (0.0085493094796860516109, 0.018315638888734180294, 0.0019304541362277092422),
    1: (0.077544757185361012344, 0.0, -0.045245018817836935364),
    2: (0.020221421941760808208, -0.5861004444394937694, 0.57027575801648637282),
    3: (-6.0898318367524632932, 0.0, 2.399223165828657803),
    4: (20.765855602960794859, 28.132821333095700931, -128.52882619196628199),
}

# max |h^(k)| on (0, 1): dense mpmath sampling refined by ternary search
SUP_ORACLE = (0.01831563888873418, 0.07757846043434822, 0.5907573342862451, 8.365550901011565,
              201.5534123179441)


def test_h_at_half_is_e_minus_4():
    assert abs(eval_h(0.5) - math.exp(-4.0)) <= 1e-12
    assert H_MAX == math.exp(-4.0)


def test_h_vanishes_outside_open_interval():
    x = np.array([-1.0, 0.0, 1.0, 1.5, 1e-300 * -1])
    assert np.all(eval_h(x) == 0.0)
    for k in range(1, 5):
        assert np.all(eval_h_deriv(x, k) == 0.0)


def test_integral_matches_oracle():
    assert abs(integral_h() - INTEGRAL_ORACLE) <= 1e-10


@pytest.mark.parametrize("k", range(5))
def test_derivatives_match_symbolic(k):
    got = eval_h_deriv(np.array([0.3, 0.5, 0.8]), k)
    want = np.array(DERIV_ORACLE[k])
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(want))))


@pytest.mark.parametrize("k", range(5))
def test_derivative_sups(k):
    assert h_deriv_sup(k) == pytest.approx(SUP_ORACLE[k], rel=1e-6)
    assert h_deriv_sup(k) <= SUP_ORACLE[k] * (1 + 1e-12)


def test_prefactor_recurrence_exact():
    table = prefactor_table(8)
    table.check_recurrence()
    x = sp.symbols("x")
    h = sp.exp(1 / (x * (x - 1)))
    for k in range(5):
        num = sum(int(c) * x ** i for i, c in enumerate(table.numerators[k]))
        den = sum(int(c) * x ** i for i, c in enumerate(table.denominators[k]))
        assert sp.simplify(sp.diff(h, x, k) - num / den * h) == 0


def test_prefactor_table_rejects_high_order():
    with pytest.raises(ValueError):
        eval_h_deriv(0.5, 5, prefactor_table(4))


@given(st.floats(0.01, 0.99))
def test_h_symmetry(x):
    assert eval_h(x) == pytest.approx(eval_h(1.0 - x), rel=1e-12)
    assert eval_h_deriv(x, 1) == pytest.approx(-eval_h_deriv(1.0 - x, 1), rel=1e-9, abs=1e-300)


def _sample_parallelepiped(seed, d):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 1, d - 1)
    w = rng.uniform(0.05, 0.3, d - 1)
    u = np.append(rng.uniform(-0.5, 0.5, d - 1), 1.0)
    return Parallelepiped(base_lo=lo, base_hi=lo + w, direction=u, height=rng.uniform(0.05, 0.5),
                          base_level=rng.uniform(0, 1), min_cos=0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, 3]))
def test_project_unproject_roundtrip(seed, d):
    P = _sample_parallelepiped(seed, d)
    rng = np.random.default_rng(seed + 1)
    x = rng.uniform(0, 1, (20, d))
    ybar = P.base_lo + x[:, :-1] * P.widths
    y = P.unproject(ybar, x[:, -1] * P.height)
    assert np.allclose(P.unit_coords(y), x, atol=1e-10)
    assert np.all(P.contains_interior(y))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_bump_zero_outside_and_positive_inside(d):
    P = _sample_parallelepiped(3, d)
    bump = ParallelepipedBump(P, 2, 1.0, 1.0)
    v = P.vertices()
    centre = v.mean(axis=0)
    assert bump(centre) > 0
    far = centre + 10.0
    assert bump(far) == 0.0
    assert np.all(bump(v) == 0.0)


@pytest.mark.parametrize("d,r", [(1, 2), (2, 2), (3, 1)])
def test_tensor_partials_match_finite_differences(d, r):
    P = _sample_parallelepiped(11, d)
    bump = ParallelepipedBump(P, r, 1.0, 1.0)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.2, 0.8, (10, d))
    Y = P.unproject(P.base_lo + x[:, :-1] * P.widths, x[:, -1] * P.height)
    step = 1e-4 * min(np.min(P.widths, initial=1.0), P.height)
    for order in range(1, r + 1):
        for alpha in multi_indices(d, order):
            exact = bump.partial(Y, alpha)
            approx = fd_partial(bump, Y, alpha, step)
            scale = np.max(np.abs(exact)) + 1e-30
            assert np.max(np.abs(exact - approx)) <= 1e-4 * scale


def test_tensor_partial_of_identity_coordinates_is_product():
    x = np.array([[0.3, 0.8]])
    B = np.eye(2)
    got = tensor_bump_partial(x, B, (1, 2))
    want = eval_h_deriv(0.3, 1) * eval_h_deriv(0.8, 2)
    assert got[0] == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("r", [1, 2])
def test_certified_amplitude_passes_finer_recheck(r):
    P = _sample_parallelepiped(5, 2)
    c = certify_amplitude(P, r, 1.0)
    assert math.log2(c) == int(math.log2(c))
    assert recheck_bump(ParallelepipedBump(P, r, c, 1.0), 65)


def test_amplitude_ladder_halves_for_tiny_bound():
    P = _sample_parallelepiped(5, 2)
    vmax, dmax = sampled_sups(ParallelepipedBump(P, 1, 1.0, 1.0))
    D = 0.5 * dmax
    c = certify_amplitude(P, 1, D)
    assert c <= 0.5
    assert c * dmax <= D * 0.95


def test_certify_rejects_coarse_grid():
    P = _sample_parallelepiped(5, 2)
    with pytest.raises(ValueError):
        certify_amplitude(P, 1, 1.0, points_per_axis=16)
