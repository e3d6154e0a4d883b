"""Plateau right-hand sides: constant on an inner box, smoothly cut off to zero outside an outer box."""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np
from scipy.stats import qmc

from .bump import eval_h, eval_h_deriv, integral_h
from .fdiff import fd_partial, multi_indices

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _partial_integral(x):
    # int_0^x h for x in [0, 1/2]; 64-node Gauss-Legendre is accurate to ~1e-18 here
    x = np.asarray(x, dtype=float)
    t = 0.5 * x[..., None] * (_GL_NODES + 1.0)
    return 0.5 * x * np.sum(_GL_WEIGHTS * eval_h(t), axis=-1)


def smooth_step(x):
    """s(x) = (int_0^x h) / c_bar, clamped: exactly 0 for x <= 0 and 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    lower = xm <= 0.5
    vals = np.empty_like(xm)
    cbar = integral_h()
    vals[lower] = _partial_integral(xm[lower]) / cbar
    vals[~lower] = 1.0 - _partial_integral(1.0 - xm[~lower]) / cbar
    out[mid] = vals
    return out if out.ndim else float(out)


def smooth_step_deriv(x, k: int):
    if k == 0:
        return smooth_step(x)
    return eval_h_deriv(x, k - 1) / integral_h()


def halton_points(lo, hi, count: int, skip: int = 0) -> np.ndarray:
    """Deterministic (unscrambled) Halton points in the box [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    sampler = qmc.Halton(d=lo.size, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    return qmc.scale(sampler.random(count), lo, hi)


class PlateauField:
    """f1(y) = alpha * phi(y), phi = prod_j s((y_j - lo_j)/wl_j) s((hi_j - y_j)/wh_j).

    phi is exactly 1 on the inner box M1 and exactly 0 outside the outer box M.
    """

    def __init__(self, alpha, M_lo, M_hi, M1_lo, M1_hi):
        self.alpha = np.asarray(alpha, dtype=float).reshape(-1)
        self.M_lo = np.asarray(M_lo, dtype=float)
        self.M_hi = np.asarray(M_hi, dtype=float)
        self.M1_lo = np.asarray(M1_lo, dtype=float)
        self.M1_hi = np.asarray(M1_hi, dtype=float)
        self.wl = self.M1_lo - self.M_lo
        self.wh = self.M_hi - self.M1_hi
        if np.any(self.wl <= 0) or np.any(self.wh <= 0):
            raise ValueError("closure of M1 must lie inside M")
        self.d = self.alpha.size
        self._inner_lo = self.M1_lo.tolist()
        self._inner_hi = self.M1_hi.tolist()

    def axis_factor(self, t, axis: int, k: int = 0):
        """k-th derivative of the one-dimensional cutoff along ``axis``."""
        ul = (t - self.M_lo[axis]) / self.wl[axis]
        uh = (self.M_hi[axis] - t) / self.wh[axis]
        total = 0.0
        for i in range(k + 1):
            a = smooth_step_deriv(ul, i) / self.wl[axis] ** i
            b = smooth_step_deriv(uh, k - i) * (-1.0 / self.wh[axis]) ** (k - i)
            total = total + comb(k, i) * a * b
        return total

    def phi_partial(self, Y, derivative=None):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if derivative is None:
            derivative = (0,) * self.d
        # on the closed inner box phi is 1 and all its partials vanish
        inner = np.all((Y >= self.M1_lo) & (Y <= self.M1_hi), axis=1)
        out = np.full(Y.shape[0], 0.0 if any(derivative) else 1.0)
        if inner.all():
            return out
        rest = ~inner
        vals = np.ones(int(rest.sum()))
        for axis, k in enumerate(derivative):
            vals = vals * self.axis_factor(Y[rest, axis], axis, k)
        out[rest] = vals
        return out

    def __call__(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return self.phi_partial(Y)[:, None] * self.alpha

    def point(self, y):
        """f1 at a single point (fast path for integrators)."""
        if all(lo <= v <= hi for v, lo, hi in zip(y.tolist(), self._inner_lo, self._inner_hi)):
            return self.alpha.copy()
        return self(y[None, :])[0]

    def partial(self, Y, component: int, derivative):
        return self.alpha[component] * self.phi_partial(Y, derivative)

    def in_plateau(self, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        return np.all((Y > self.M1_lo) & (Y < self.M1_hi), axis=1)


def margin_samples(M_lo, M_hi, M1_lo, M1_hi, count: int = 1000) -> np.ndarray:
    """``count`` deterministic Halton points of M that lie outside M1."""
    M_lo = np.asarray(M_lo, float)
    M_hi = np.asarray(M_hi, float)
    pts = []
    skip = 1
    while sum(len(p) for p in pts) < count:
        cand = halton_points(M_lo, M_hi, 4 * count, skip=skip)
        skip += 4 * count
        inside = np.all((cand > M1_lo) & (cand < M1_hi), axis=1)
        pts.append(cand[~inside])
    return np.concatenate(pts)[:count]


def fd_derivative_sup(field: PlateauField, Y, r: int, step) -> float:
    """Max over components and partials of orders 1..r of FD |D^i f^j| at the points Y."""
    worst = 0.0
    for order in range(1, r + 1):
        for alpha in multi_indices(field.d, order):
            vals = fd_partial(field, Y, alpha, step)
            worst = max(worst, float(np.max(np.abs(vals))))
    return worst


@lru_cache(maxsize=None)
def _delta_limit(M_lo, M_hi, M1_lo, M1_hi, r, D, margin, samples):
    return _compute_delta_limit(M_lo, M_hi, M1_lo, M1_hi, r, D, margin, samples)


def plateau_delta_limit(M_lo, M_hi, M1_lo, M1_hi, r: int, D: float, margin: float = 0.05,
                        samples: int = 1000) -> float:
    """Largest Delta for which alpha * phi with |alpha|_inf = Delta keeps partials of orders 1..r within D.

    Starts from the exact tensor-product sup of the analytic partials, then
    re-checks by finite differences in M minus M1 and shrinks if needed.
    Results are cached per geometry.
    """
    key = tuple(tuple(float(v) for v in np.ravel(b)) for b in (M_lo, M_hi, M1_lo, M1_hi))
    return _delta_limit(*key, int(r), float(D), float(margin), int(samples))


def _compute_delta_limit(M_lo, M_hi, M1_lo, M1_hi, r, D, margin, samples):
    d = len(M_lo)
    unit = PlateauField(np.ones(d), M_lo, M_hi, M1_lo, M1_hi)
    sups = []
    for axis in range(d):
        t = np.linspace(unit.M_lo[axis], unit.M_hi[axis], 200001)
        # the cutoff itself is bounded by 1
        sups.append([1.0] + [float(np.max(np.abs(unit.axis_factor(t, axis, k)))) for k in range(1, r + 1)])
    worst = 0.0
    for order in range(1, r + 1):
        for alpha in multi_indices(d, order):
            worst = max(worst, float(np.prod([sups[a][k] for a, k in enumerate(alpha)])))
    delta = (1.0 - margin) * D / worst
    Y = margin_samples(M_lo, M_hi, M1_lo, M1_hi, samples)
    step = min(np.min(unit.wl), np.min(unit.wh)) / 256
    fd_worst = fd_derivative_sup(unit, Y, r, step)
    while delta * fd_worst > D:
        delta *= 0.9
    return delta
