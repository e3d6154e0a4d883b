"""C-infinity bump functions built from h(x) = exp(1/(x(x-1))).

The scalar mollifier ``h`` is supported on [0, 1].  Its derivatives are
evaluated through exact rational prefactors,

    h^(k)(x) = P_k(x) / (x(x-1))^(2k) * h(x),

with integer polynomial numerators ``P_k``.  A :class:`ParallelepipedBump`
is the tensor product of ``h`` in oblique coordinates attached to a
:class:`Parallelepiped`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .fdiff import fd_partial, multi_indices

H_MAX = math.exp(-4.0)
DEFAULT_KMAX = 8

# q(x) = x(x-1) = -x + x^2, ascending coefficients
_Q = (0, -1, 1)
_DQ = (-1, 2)


def _pmul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return tuple(out)


def _padd(p, q):
    n = max(len(p), len(q))
    return tuple((p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n))


def _pscale(p, c):
    return tuple(c * a for a in p)


def _pderiv(p):
    return tuple(i * a for i, a in enumerate(p))[1:] or (0,)


def _ppow(p, k):
    out = (1,)
    for _ in range(k):
        out = _pmul(out, p)
    return out


def _ptrim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(p)


@dataclass(frozen=True)
class PrefactorTable:
    """Rational prefactors R_k = numerators[k] / denominators[k] with h^(k) = R_k h.

    Coefficients are Python integers in ascending powers of x, so the
    recurrence ``R_{k+1} = R_k' + R_k (1-2x)/(x^2 (x-1)^2)`` can be checked
    exactly.
    """

    k_max: int
    numerators: tuple
    denominators: tuple

    @classmethod
    def build(cls, k_max: int) -> "PrefactorTable":
        if k_max < 0:
            raise ValueError("k_max must be nonnegative")
        nums = [(1,)]
        # P_{k+1} = P_k' q^2 - 2k P_k q' q - P_k q'
        q2 = _pmul(_Q, _Q)
        for k in range(k_max):
            p = nums[-1]
            nxt = _padd(_pmul(_pderiv(p), q2),
                        _padd(_pscale(_pmul(_pmul(p, _DQ), _Q), -2 * k),
                              _pscale(_pmul(p, _DQ), -1)))
            nums.append(_ptrim(nxt))
        dens = tuple(_ppow(_Q, 2 * k) for k in range(k_max + 1))
        table = cls(k_max, tuple(nums), dens)
        table.check_recurrence()
        return table

    def check_recurrence(self) -> None:
        """Verify R_{k+1} = R_k' + R_k (1-2x)/q^2 by exact cross-multiplication."""
        for k in range(self.k_max):
            pk, qk = self.numerators[k], self.denominators[k]
            pn, qn = self.numerators[k + 1], self.denominators[k + 1]
            # R_k' = (pk' qk - pk qk') / qk^2 ; extra term pk (1-2x) / (qk q^2)
            q2 = _pmul(_Q, _Q)
            lhs_num = _padd(_pmul(_pderiv(pk), qk), _pscale(_pmul(pk, _pderiv(qk)), -1))
            # common denominator qk^2 q^2
            rhs = _padd(_pmul(lhs_num, q2), _pmul(_pmul(pk, (1, -2)), qk))
            den = _pmul(_pmul(qk, qk), q2)
            if _ptrim(_pmul(rhs, qn)) != _ptrim(_pmul(pn, den)):
                raise ArithmeticError(f"prefactor recurrence fails at k={k}")

    def numerator_float(self, k: int) -> np.ndarray:
        return np.array([float(c) for c in self.numerators[k]])


@lru_cache(maxsize=None)
def prefactor_table(k_max: int = DEFAULT_KMAX) -> PrefactorTable:
    return PrefactorTable.build(k_max)


def eval_h(x):
    """h(x) = exp(1/(x(x-1))) on (0, 1), exactly 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    with np.errstate(under="ignore"):
        out[inside] = np.exp(1.0 / (xi * (xi - 1.0)))
    return out if out.ndim else float(out)


def eval_h_deriv(x, k: int, table: PrefactorTable | None = None):
    """k-th derivative of h; exactly 0 outside the open unit interval."""
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    if table is None:
        table = prefactor_table(max(DEFAULT_KMAX, k))
    if k > table.k_max:
        raise ValueError(f"derivative order {k} exceeds table order {table.k_max}")
    if k == 0:
        return eval_h(x)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    q = xi * (xi - 1.0)
    num = np.polynomial.polynomial.polyval(xi, table.numerator_float(k))
    # log-space keeps the flat boundary free of 0*inf
    with np.errstate(divide="ignore", under="ignore", over="ignore"):
        logmag = np.log(np.abs(num)) - 2 * k * np.log(np.abs(q)) + 1.0 / q
        out[inside] = np.sign(num) * np.exp(logmag)
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def integral_h() -> float:
    """c_bar = integral of h over R, by adaptive quadrature."""
    half, err = quad(lambda t: math.exp(1.0 / (t * (t - 1.0))), 0.0, 0.5,
                     epsabs=1e-15, epsrel=1e-14, limit=200)
    if err > 5e-13:
        raise ArithmeticError(f"quadrature error estimate too large: {err}")
    return 2.0 * half


@lru_cache(maxsize=None)
def h_deriv_sup(k: int, samples: int = 200001) -> float:
    """Sampled max |h^(k)| on [0, 1] (the constants c_k)."""
    xs = np.linspace(0.0, 1.0, samples)
    return float(np.max(np.abs(eval_h_deriv(xs, k))))


# --- parallelepipeds -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Parallelepiped:
    """Oblique box {[ybar, base_level] + u * lbar : ybar in P1, lbar in [0, N]}.

    ``direction`` is normalized on construction; ``height`` is the
    Euclidean length along it.  For ``d == 1`` the base box is empty and the
    set is the interval [base_level, base_level + height].
    """

    base_lo: np.ndarray
    base_hi: np.ndarray
    direction: np.ndarray
    height: float
    base_level: float = 0.0
    min_cos: float = field(default=0.0)

    def __post_init__(self):
        lo = np.asarray(self.base_lo, dtype=float).reshape(-1)
        hi = np.asarray(self.base_hi, dtype=float).reshape(-1)
        u = np.asarray(self.direction, dtype=float).reshape(-1)
        if lo.shape != hi.shape or u.size != lo.size + 1:
            raise ValueError("base box must have d-1 intervals for a direction in R^d")
        if np.any(hi - lo <= 0):
            raise ValueError("base box intervals must have positive length")
        if not self.height > 0:
            raise ValueError("height must be positive")
        u = u / np.linalg.norm(u)
        if u[-1] <= 0:
            raise ValueError("direction must satisfy cos(direction, e_d) > 0")
        if u[-1] < self.min_cos:
            raise ValueError(f"cos(direction, e_d) = {u[-1]} below {self.min_cos}")
        object.__setattr__(self, "base_lo", lo)
        object.__setattr__(self, "base_hi", hi)
        object.__setattr__(self, "direction", u)
        object.__setattr__(self, "height", float(self.height))
        object.__setattr__(self, "base_level", float(self.base_level))

    @property
    def d(self) -> int:
        return self.direction.size

    @property
    def cos_angle(self) -> float:
        return float(self.direction[-1])

    @property
    def widths(self) -> np.ndarray:
        return self.base_hi - self.base_lo

    def project(self, y):
        """Map points (..., d) to (ybar (..., d-1), lbar (...))."""
        y = np.asarray(y, dtype=float)
        lbar = (y[..., -1] - self.base_level) / self.cos_angle
        ybar = y[..., :-1] - self.direction[:-1] * lbar[..., None]
        return ybar, lbar

    def unproject(self, ybar, lbar):
        ybar = np.asarray(ybar, dtype=float)
        lbar = np.asarray(lbar, dtype=float)
        head = ybar + self.direction[:-1] * lbar[..., None]
        tail = self.base_level + self.direction[-1] * lbar
        return np.concatenate([head, tail[..., None]], axis=-1)

    def unit_coords(self, y):
        """Coordinates in the unit cube: x_j = (ybar_j - p_j)/(q_j - p_j), x_d = lbar/N."""
        ybar, lbar = self.project(y)
        xs = (ybar - self.base_lo) / self.widths
        return np.concatenate([xs, (lbar / self.height)[..., None]], axis=-1)

    def coord_matrix(self) -> np.ndarray:
        """Linear part B of y -> unit_coords(y)."""
        d = self.d
        B = np.zeros((d, d))
        sigma = self.direction[:-1] / self.cos_angle
        w = self.widths
        for j in range(d - 1):
            B[j, j] = 1.0 / w[j]
            B[j, d - 1] = -sigma[j] / w[j]
        B[d - 1, d - 1] = 1.0 / (self.cos_angle * self.height)
        return B

    def contains_interior(self, y) -> np.ndarray:
        x = self.unit_coords(y)
        return np.all((x > 0.0) & (x < 1.0), axis=-1)

    def vertices(self) -> np.ndarray:
        d = self.d
        out = []
        for corner in itertools.product((0, 1), repeat=d):
            ybar = np.where(np.array(corner[:-1], dtype=bool), self.base_hi, self.base_lo)
            lbar = self.height * corner[-1]
            out.append(self.unproject(ybar, np.array(lbar)))
        return np.array(out)

    def volume(self) -> float:
        return float(np.prod(self.widths) * self.height * self.cos_angle)

    def bounding_box(self):
        v = self.vertices()
        return v.min(axis=0), v.max(axis=0)

    def amplitude_scale(self) -> float:
        """min{min_j (q_j - p_j), N, 1}."""
        return float(min(np.min(self.widths, initial=np.inf), self.height, 1.0))


def project_coords(y, P: Parallelepiped):
    return P.project(y)


def tensor_bump_partial(x, B, derivative, table=None):
    """Partial derivative in y of prod_m h(x_m), where x = B y + const.

    ``x`` has shape (npts, d); ``derivative`` is a multi-index in y.
    """
    x = np.atleast_2d(x)
    d = x.shape[1]
    axes = [i for i, k in enumerate(derivative) for _ in range(k)]
    if not axes:
        return np.prod(eval_h(x), axis=1)
    if table is None:
        table = prefactor_table(max(DEFAULT_KMAX, len(axes)))
    coeffs = {}
    for choice in itertools.product(range(d), repeat=len(axes)):
        c = 1.0
        for m, i in zip(choice, axes):
            c *= B[m, i]
            if c == 0.0:
                break
        if c == 0.0:
            continue
        gamma = tuple(choice.count(m) for m in range(d))
        coeffs[gamma] = coeffs.get(gamma, 0.0) + c
    total = np.zeros(x.shape[0])
    cache = {}
    for gamma, c in coeffs.items():
        term = np.full(x.shape[0], c)
        for m, g in enumerate(gamma):
            key = (m, g)
            if key not in cache:
                cache[key] = eval_h_deriv(x[:, m], g, table)
            term = term * cache[key]
        total += term
    return total


@dataclass(frozen=True, eq=False)
class ParallelepipedBump:
    """Bump C * s^r * prod_j h(x_j) * h(lbar/N) supported on ``support``."""

    support: Parallelepiped
    r: int
    amplitude: float
    D: float

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("smoothness r must be >= 1")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def prefactor(self) -> float:
        return self.amplitude * self.support.amplitude_scale() ** self.r

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        x = self.support.unit_coords(y)
        return self.prefactor * np.prod(eval_h(x), axis=-1)

    def partial(self, y, derivative):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        x = self.support.unit_coords(y)
        return self.prefactor * tensor_bump_partial(x, self.support.coord_matrix(), derivative)

    def with_amplitude(self, amplitude: float) -> "ParallelepipedBump":
        return ParallelepipedBump(self.support, self.r, amplitude, self.D)


def eval_bump(y, bump: ParallelepipedBump):
    return bump(y)


def _sample_grid(P: Parallelepiped, points_per_axis: int) -> np.ndarray:
    lo, hi = P.bounding_box()
    axes = [np.linspace(l, h, points_per_axis) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def sampled_sups(bump: ParallelepipedBump, points_per_axis: int = 33, step_fraction: float = 1 / 256):
    """Sampled sup of the bump value and of FD partials of orders 1..r.

    Returns (value_sup, derivative_sup) over a deterministic grid spanning the
    support's bounding box.
    """
    P = bump.support
    Y = _sample_grid(P, points_per_axis)
    step = step_fraction * min(np.min(P.widths, initial=np.inf), P.height * P.cos_angle)
    vmax = float(np.max(bump(Y)))
    dmax = 0.0
    for order in range(1, bump.r + 1):
        for alpha in multi_indices(P.d, order):
            vals = fd_partial(bump, Y, alpha, step)
            dmax = max(dmax, float(np.max(np.abs(vals))))
    return vmax, dmax


def certify_amplitude(P: Parallelepiped, r: int, D: float, points_per_axis: int = 33,
                      margin: float = 0.05, c0: float = 1.0, max_halvings: int = 60) -> float:
    """Largest C in {c0 * 2^-i} with sampled bump <= D/2 and FD partials <= D(1-margin).

    The bump is linear in C, so the sampled sups are computed once at C = 1.
    """
    if not D > 0:
        raise ValueError("D must be positive")
    if points_per_axis < 33:
        raise ValueError("certification needs at least 33 points per axis")
    vmax, dmax = sampled_sups(ParallelepipedBump(P, r, 1.0, D), points_per_axis)
    for i in range(max_halvings + 1):
        c = c0 * 2.0 ** (-i)
        if c * vmax <= D / 2 and c * dmax <= D * (1.0 - margin):
            return c
    raise ArithmeticError("no amplitude on the ladder certifies the derivative bounds")


def recheck_bump(bump: ParallelepipedBump, points_per_axis: int = 65) -> bool:
    """Independent finer-grid check of 0 <= H <= D/2 and |D^k H| <= D."""
    vmax, dmax = sampled_sups(bump, points_per_axis)
    return vmax <= bump.D / 2 and dmax <= bump.D
