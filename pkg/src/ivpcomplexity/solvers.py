"""Reference integration, two budgeted solvers, and trajectory distances.

Trajectories may carry a known ``base`` path (typically the affine solution
z1); the integrator then tracks only the deviation from it, which keeps
separations many orders of magnitude below the state size resolvable.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .fdiff import multi_indices
from .geometry import ProblemSpec, iroot_floor
from .information import grid_points
from .plateau import PlateauField


class Trajectory:
    """Dense trajectory on [a, b]: base(t) + deviation(t).

    ``dense`` maps an array of times to shape (d, len); ``None`` means the
    deviation is identically zero.
    """

    def __init__(self, a: float, b: float, d: int, dense=None, base=None, times=None, info_count: int = 0):
        if not b > a:
            raise ValueError("need a < b")
        self.a = float(a)
        self.b = float(b)
        self.d = d
        self.dense = dense
        self.base = base
        self.times = np.array([a, b]) if times is None else np.asarray(times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        self.info_count = info_count

    @classmethod
    def from_path(cls, path, a: float, b: float, d: int) -> "Trajectory":
        return cls(a, b, d, base=path)

    def _check(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        slack = 1e-12 * (self.b - self.a)
        if np.any(t < self.a - slack) or np.any(t > self.b + slack):
            raise ValueError("evaluation outside [a, b]")
        return np.clip(t, self.a, self.b)

    def deviation(self, t) -> np.ndarray:
        t = self._check(t)
        if self.dense is None:
            return np.zeros((t.size, self.d))
        return np.asarray(self.dense(t)).reshape(self.d, t.size).T

    def base_values(self, t) -> np.ndarray:
        t = self._check(t)
        if self.base is None:
            return np.zeros((t.size, self.d))
        return np.asarray(self.base(t)).reshape(t.size, self.d)

    def __call__(self, t) -> np.ndarray:
        return self.base_values(t) + self.deviation(t)

    @property
    def values(self) -> np.ndarray:
        return self(self.times)


def reference_solve(f, spec: ProblemSpec, tol: float = 1e-10, base=None, atol: float | None = None,
                    max_step: float = np.inf) -> Trajectory:
    """DOP853 with dense output and local error control at ``tol``.

    With ``base`` (a path with ``__call__`` and ``derivative``) the unknown is
    w = z - base, integrated from w(a) = eta - base(a).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = spec.d
    point = getattr(f, "point", None) or (lambda z: f(z[None, :])[0])
    if base is None:
        y0 = spec.eta.copy()
        rhs = lambda t, z: point(z)
    else:
        y0 = spec.eta - np.asarray(base(spec.a)).reshape(d)
        rhs = lambda t, w: point(np.asarray(base(t)).reshape(d) + w) - base.derivative(t)
    sol = solve_ivp(rhs, (spec.a, spec.b), y0, method="DOP853", rtol=tol, atol=tol if atol is None else atol,
                    dense_output=True, max_step=max_step)
    if not sol.success:
        raise RuntimeError(f"reference integration failed at t = {sol.t[-1]}: {sol.message}")
    return Trajectory(spec.a, spec.b, d, dense=sol.sol, base=base, times=sol.t)


def sup_distance(t1: Trajectory, t2: Trajectory, samples: int = 2001) -> float:
    """max over a uniform time grid of |t1(t) - t2(t)|_inf.

    Bases are differenced first, so a shared base cancels exactly.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if abs(t1.a - t2.a) > 1e-14 or abs(t1.b - t2.b) > 1e-14:
        raise ValueError("trajectories live on different intervals")
    ts = np.linspace(t1.a, t1.b, samples)
    if t1.base is not None and t1.base is t2.base:
        diff = t1.deviation(ts) - t2.deviation(ts)
    else:
        diff = (t1.base_values(ts) - t2.base_values(ts)) + (t1.deviation(ts) - t2.deviation(ts))
    return float(np.max(np.abs(diff)))


@dataclass(frozen=True)
class SolverReport:
    n: int
    error: float
    seconds: float
    tag: str

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("information count must be >= 1")
        if not self.error >= 0:
            raise ValueError("error must be nonnegative")


# --- nonadaptive grid solver -----------------------------------------------


def _lagrange_weights(u, start, q):
    # weights of nodes start..start+q at fractional node position u
    nodes = start[:, None] + np.arange(q + 1)
    w = np.ones_like(nodes, dtype=float)
    for j in range(q + 1):
        for m in range(q + 1):
            if m != j:
                w[:, j] *= (u - nodes[:, m]) / (j - m)
    return nodes, w


class GridInterpolant:
    """Tensor Lagrange interpolation of per-axis degree q on sliding stencils of q + 1 nodes.

    Nodes are cell-centered on [lo, hi] with g per axis.  The stencil is the
    window whose center is nearest the evaluation point (ties toward lower
    indices), clamped at the boundary.
    """

    def __init__(self, lo, hi, g: int, values, degree: int):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.g = g
        self.d = self.lo.size
        if degree < 0 or g < degree + 1:
            raise ValueError("grid too small for the interpolation degree")
        self.q = degree
        vals = np.asarray(values, dtype=float)
        self.m = vals.shape[-1]
        self.values = vals.reshape((g,) * self.d + (self.m,))
        self.h = (self.hi - self.lo) / g

    def __call__(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        q, g = self.q, self.g
        out = np.zeros((Y.shape[0], self.m))
        per_axis = []
        for j in range(self.d):
            u = (Y[:, j] - self.lo[j]) / self.h[j] - 0.5
            start = np.clip(np.ceil(u - q / 2 - 0.5).astype(int), 0, g - q - 1)
            per_axis.append(_lagrange_weights(u, start, q))
        for combo in np.ndindex(*(q + 1,) * self.d):
            w = np.ones(Y.shape[0])
            idx = []
            for j, c in enumerate(combo):
                nodes, weights = per_axis[j]
                w = w * weights[:, c]
                idx.append(nodes[:, c])
            out += w[:, None] * self.values[tuple(idx)]
        return out


def grid_solver_box(spec: ProblemSpec):
    """Cube of half-width Delta (b - a) about eta; it contains every trajectory of the class."""
    rad = spec.delta * (spec.b - spec.a)
    return spec.eta - rad, spec.eta + rad


def solve_nonadaptive_grid(f, spec: ProblemSpec, n: int, tol: float = 1e-11, box=None) -> Trajectory:
    """Sample all components of f on a floor(n^(1/d))^d grid, interpolate, integrate.

    Charges n (the number of grid nodes actually used is reported in
    ``info_count``).
    """
    d, r = spec.d, spec.r
    q = r - 1
    g = iroot_floor(n, d)
    if g < q + 1 or n < 2 ** d:
        raise ValueError(f"budget {n} too small for degree {q} stencils in dimension {d}")
    lo, hi = grid_solver_box(spec) if box is None else box
    pts = grid_points(lo, hi, g)
    interp = GridInterpolant(lo, hi, g, f(pts), q)
    traj = reference_solve(interp, spec, tol=tol)
    traj.info_count = g ** d
    return traj


# --- adaptive Taylor solver -------------------------------------------------


def taylor_charge(d: int, r: int) -> int:
    """Functionals per step: every component of every partial of order <= r - 1."""
    return d * math.comb(r - 1 + d, d)


def _series_mul(p, q, deg):
    out = np.zeros(deg + 1)
    for i in range(deg + 1):
        out[i] = np.dot(p[: i + 1], q[i::-1])
    return out


def taylor_coefficients(f, z0, r: int) -> np.ndarray:
    """Taylor coefficients z_0..z_r of the solution through z0, from partials of f of order <= r - 1.

    Power-series composition: z_{k+1} = [f(z(t))]_k / (k + 1), with f
    expanded around z0.
    """
    d = z0.size
    coef = np.zeros((r + 1, d))
    coef[0] = z0
    Y = z0[None, :]
    derivs = {}
    for order in range(r):
        for alpha in multi_indices(d, order):
            fact = float(np.prod([math.factorial(a) for a in alpha]))
            derivs[alpha] = np.array([f.partial(Y, c, alpha)[0] for c in range(d)]) / fact
    for k in range(r):
        # series of delta_j = z_j(t) - z0_j up to degree k
        delta = [np.concatenate([[0.0], coef[1:k + 1, j]]) for j in range(d)]
        total = np.zeros((k + 1, d))
        for alpha, val in derivs.items():
            if sum(alpha) > k:
                continue
            mono = np.zeros(k + 1)
            mono[0] = 1.0
            for j, a in enumerate(alpha):
                for _ in range(a):
                    mono = _series_mul(mono, delta[j], k)
            total += np.outer(mono, val)
        coef[k + 1] = total[k] / (k + 1)
    return coef


class PiecewisePolynomial:
    """Dense output from per-step polynomial coefficients (steps, degree + 1, d) on a uniform grid."""

    def __init__(self, a: float, h: float, coefs):
        self.a = a
        self.h = h
        self.coefs = np.asarray(coefs)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        steps = self.coefs.shape[0]
        idx = np.clip(np.floor((t - self.a) / self.h).astype(int), 0, steps - 1)
        tau = t - (self.a + idx * self.h)
        c = self.coefs[idx]
        out = c[:, -1, :]
        for k in range(c.shape[1] - 2, -1, -1):
            out = out * tau[:, None] + c[:, k, :]
        return out.T


def solve_adaptive_taylor(f, spec: ProblemSpec, steps: int) -> Trajectory:
    """Order-r Taylor method with uniform steps; information charged per step is ``taylor_charge``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    r, d = spec.r, spec.d
    h = (spec.b - spec.a) / steps
    z = spec.eta.copy()
    coefs = np.empty((steps, r + 1, d))
    for i in range(steps):
        c = taylor_coefficients(f, z, r)
        coefs[i] = c
        z = c[-1].copy()
        for k in range(r - 1, -1, -1):
            z = z * h + c[k]
    times = spec.a + h * np.arange(steps + 1)
    times[-1] = spec.b
    return Trajectory(spec.a, spec.b, d, dense=PiecewisePolynomial(spec.a, h, coefs), times=times,
                      info_count=steps * taylor_charge(d, r))


# --- benchmark field --------------------------------------------------------


class PolynomialCutoffField:
    """Smooth compactly supported benchmark: f^j(y) = s (1/2 - u_{j+1} + u_j^2/2) phi(y), u = y - center.

    phi is the plateau cutoff of M1 inside M, so f is a quadratic polynomial
    on M1 (where the benchmark trajectories stay) and vanishes outside M.
    """

    def __init__(self, spec: ProblemSpec, scale: float = 0.2, center=None):
        self.spec = spec
        self.d = spec.d
        self.scale = float(scale)
        self.center = spec.eta - 0.05 if center is None else np.asarray(center, dtype=float)
        self.cutoff = PlateauField(np.ones(spec.d), spec.M_lo, spec.M_hi, spec.M1_lo, spec.M1_hi)

    def _poly_partial(self, U, component: int, alpha):
        d = self.d
        nxt = (component + 1) % d
        order = sum(alpha)
        if order == 0:
            return self.scale * (0.5 + 0.5 * U[:, component] ** 2 - U[:, nxt])
        if order == 1:
            axis = alpha.index(1)
            val = np.zeros(U.shape[0])
            if axis == component:
                val = val + U[:, component]
            if axis == nxt:
                val = val - 1.0
            return self.scale * val
        if order == 2 and alpha[component] == 2:
            return np.full(U.shape[0], self.scale)
        return np.zeros(U.shape[0])

    def partial(self, Y, component: int, alpha):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        alpha = tuple(int(a) for a in alpha)
        U = Y - self.center
        total = np.zeros(Y.shape[0])
        for beta in np.ndindex(*(a + 1 for a in alpha)):
            rest = tuple(a - b for a, b in zip(alpha, beta))
            c = float(np.prod([math.comb(a, b) for a, b in zip(alpha, beta)]))
            total += c * self._poly_partial(U, component, beta) * self.cutoff.phi_partial(Y, rest)
        return total

    def __call__(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        zero = (0,) * self.d
        return np.stack([self.partial(Y, j, zero) for j in range(self.d)], axis=1)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
