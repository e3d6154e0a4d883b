"""Adversarial pairs f1, f2 = f1 + H with identical nonadaptive information.

Variants:

``thm1``
    standard information; cells of the parallelepipeds that contain an
    information point are dropped, the rest carry coefficient 1.
``thm2i``
    arbitrary finite-rank linear information; one bump per parallelepiped,
    coefficients from a null vector of the constraint matrix.
``thm2ii``
    n - k standard atoms followed by k linear functionals.
``d1``
    the scalar case, a train of bumps on [eta, eta + Delta (b - a)].
``control``
    H = 0.
"""
from __future__ import annotations

import itertools
import json
import math

import numpy as np
from scipy.integrate import quad
from scipy.linalg import null_space

from .bump import H_MAX, certify_amplitude, eval_h, integral_h, tensor_bump_partial
from .fdiff import fd_partial, multi_indices
from .geometry import BaseSubdivision, CellGrid, IntervalTrain, ProblemSpec, iroot_ceil
from .information import InfoOperator, assemble_constraint_matrix, evaluate_info, functional_scale
from .plateau import PlateauField, halton_points, plateau_delta_limit

VARIANTS = ("thm1", "thm2i", "thm2ii", "d1", "control")


class ConstructionError(AssertionError):
    """A step of the construction that the counting arguments guarantee has failed."""


# --- fields ----------------------------------------------------------------


def build_plateau_field(spec: ProblemSpec, alpha) -> PlateauField:
    """f1 = alpha on M1, 0 outside M, with partials of orders <= r bounded by D."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size != spec.d:
        raise ValueError("alpha must have d components")
    norm = float(np.max(np.abs(alpha)))
    if norm > spec.delta * (1 + 1e-12):
        raise ValueError("|alpha|_inf must not exceed Delta")
    limit = plateau_delta_limit(spec.M_lo, spec.M_hi, spec.M1_lo, spec.M1_hi, spec.r, spec.D)
    if norm > limit * (1 + 1e-12):
        raise ValueError(f"no plateau extension certifies |alpha|_inf = {norm} (limit {limit})")
    return PlateauField(alpha, spec.M_lo, spec.M_hi, spec.M1_lo, spec.M1_hi)


class BumpSum:
    """Scalar field sum over cells of beta_c * C * s_c^r * prod h(unit coords in cell c).

    Cells with beta = 0 contribute nothing at all, so the field is exactly 0
    at every point outside the support of the remaining cells.
    """

    def __init__(self, grid, beta, amplitude: float, r: int):
        self.grid = grid
        self.beta = np.asarray(beta, dtype=float)
        if self.beta.shape != (grid.ncells,):
            raise ValueError("one coefficient per cell required")
        self.amplitude = float(amplitude)
        self.r = r

    def restricted(self, mask) -> "BumpSum":
        return BumpSum(self.grid, np.where(mask, self.beta, 0.0), self.amplitude, self.r)

    def _active(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        idx, x = self.grid.locate(Y, return_coords=True)
        ok = idx >= 0
        ok[ok] = self.beta[idx[ok]] != 0.0
        return Y, idx, x, ok

    def __call__(self, Y):
        Y, idx, x, ok = self._active(Y)
        out = np.zeros(Y.shape[0])
        if np.any(ok):
            c = idx[ok]
            out[ok] = self.beta[c] * (self.amplitude * self.grid.scale[c] ** self.r) * np.prod(eval_h(x[ok]), axis=1)
        return out

    def point(self, y) -> float:
        idx, x = self.grid.locate_point(y.tolist())
        if idx < 0 or self.beta[idx] == 0.0:
            return 0.0
        prod = 1.0
        for xi in x:
            prod *= math.exp(1.0 / (xi * (xi - 1.0)))
        return float(self.beta[idx] * (self.amplitude * self.grid.scale[idx] ** self.r) * prod)

    def partial(self, Y, order):
        if not any(order):
            return self(Y)
        Y, idx, x, ok = self._active(Y)
        out = np.zeros(Y.shape[0])
        for c in np.unique(idx[ok]):
            sel = ok & (idx == c)
            B = self.grid.coord_matrix(int(c))
            pref = self.beta[c] * self.amplitude * self.grid.scale[c] ** self.r
            out[sel] = pref * tensor_bump_partial(x[sel], B, order)
        return out


class PerturbedField:
    """f2 = f1 + [H, 0, ..., 0]."""

    def __init__(self, f1, hat: BumpSum):
        self.f1 = f1
        self.hat = hat
        self.d = f1.d

    def __call__(self, Y):
        out = self.f1(Y)
        out[:, 0] = out[:, 0] + self.hat(Y)
        return out

    def point(self, y):
        out = self.f1.point(y)
        out[0] += self.hat.point(y)
        return out

    def partial(self, Y, component: int, order):
        base = self.f1.partial(Y, component, order)
        if component != 0:
            return base
        return base + self.hat.partial(Y, order)


class AffinePath:
    """z1(t) = eta + alpha (t - a)."""

    def __init__(self, eta, alpha, a: float):
        self.eta = np.asarray(eta, dtype=float)
        self.alpha = np.asarray(alpha, dtype=float)
        self.a = float(a)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.eta + np.multiply.outer(t - self.a, self.alpha)

    def derivative(self, t):
        return self.alpha


# --- coefficient selection ---------------------------------------------------


def normalized_null_vector(A):
    """A null vector of A scaled to max modulus 1 with a +1 entry; returns (beta, index of that entry).

    The null space comes from an SVD of the row-normalized matrix; among the
    orthonormal basis vectors, the one with the largest max-modulus entry is
    used.  Ties go to the smallest index.  A zero matrix gives all ones.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    ncols = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    rows = A[norms > 0] / norms[norms > 0, None]
    if rows.shape[0] == 0:
        return np.ones(ncols), 0
    basis = null_space(rows)
    if basis.shape[1] == 0:
        raise ConstructionError("constraint matrix has full column rank; no null vector")
    scores = np.max(np.abs(basis), axis=0)
    v = basis[:, int(np.argmax(scores))]
    i = int(np.argmax(np.abs(v)))
    beta = v / v[i]
    return beta, i


def _standard_points(atoms):
    return np.array([a.point for a in atoms]).reshape(len(atoms), -1)


def eliminated_cells(grid, atoms) -> np.ndarray:
    """Boolean mask of cells whose open interior contains an atom point."""
    mask = np.zeros(grid.ncells, dtype=bool)
    if atoms:
        idx = grid.locate(_standard_points(atoms))
        mask[idx[idx >= 0]] = True
    return mask


def select_betas_standard(grid: CellGrid, N, p: int):
    """beta = 0 on cells hit by an atom, 1 elsewhere; k* = first parallelepiped with >= pm/2 ones."""
    atoms = N.standard_atoms if isinstance(N, InfoOperator) else list(N)
    if isinstance(N, InfoOperator) and N.k:
        raise ValueError("standard selection needs purely standard information")
    elim = eliminated_cells(grid, atoms)
    beta = np.where(elim, 0.0, 1.0)
    cp = grid.cells_per
    ones = beta.reshape(-1, cp).sum(axis=1)
    good = np.flatnonzero(ones >= cp / 2)
    if good.size == 0:
        raise ConstructionError("no parallelepiped keeps half of its cells")
    return beta, grid.sub.ktuples[int(good[0])]


def select_betas_linear(bumps, N):
    """Null-space coefficients for one bump per parallelepiped; returns (beta, A)."""
    functionals = N.functionals if isinstance(N, InfoOperator) else list(N)
    if len(bumps) < len(functionals) + 1:
        raise ValueError("need at least n + 1 bumps")
    A = assemble_constraint_matrix(functionals, bumps)
    beta, _ = normalized_null_vector(A)
    return beta, A


def smallest_p(alpha_info: float, d: int) -> int:
    """Smallest p with alpha_info <= p^(d-1) - 2/p."""
    p = 1
    while alpha_info > p ** (d - 1) - 2.0 / p:
        p += 1
    return p


def select_betas_mixed(grid: CellGrid, N: InfoOperator, p: int, alpha_info: float):
    """Coefficients for mixed information; returns (beta, k*, counts).

    ``counts`` holds the eliminated and excluded parallelepiped numbers and the
    bound checks used by the counting argument.
    """
    d = grid.sub.d
    n, k = N.n, N.k
    if k > 0 and n < k + 1:
        raise ValueError("mixed information needs n >= k + 1")
    if k > alpha_info * n ** (1.0 - 1.0 / d) + 1e-12:
        raise ValueError("k exceeds alpha_info * n^(1 - 1/d)")
    pm = grid.sub.pm
    elim = eliminated_cells(grid, N.standard_atoms)
    per_p = elim.reshape(-1, grid.cells_per).sum(axis=1)
    excluded = per_p > pm / 2
    x = int(excluded.sum())
    count_bound = 2.0 * (n - k) / pm
    unknowns_bound = pm ** (d - 1) - count_bound
    counts = {"eliminated": int(elim.sum()), "excluded": x, "excluded_bound": count_bound,
              "surviving": int((~excluded).sum()), "unknowns_bound": unknowns_bound, "k": k}
    if x > count_bound:
        raise ConstructionError(f"excluded count {x} exceeds 2(n-k)/(pm) = {count_bound}")
    if not k < unknowns_bound:
        raise ConstructionError(f"k = {k} violates k < (pm)^(d-1) - 2(n-k)/(pm) = {unknowns_bound}; raise n")
    if k == 0:
        beta, kstar = select_betas_standard(grid, N.standard_atoms, p)
        return beta, kstar, counts
    survivors = np.flatnonzero(~excluded)
    base = np.where(elim, 0.0, 1.0)
    owner = np.repeat(np.arange(grid.nparallelepipeds), grid.cells_per)
    unit = BumpSum(grid, base, 1.0, 1)
    cols = [unit.restricted(owner == P) for P in survivors]
    A = assemble_constraint_matrix(N.linear_functionals, cols)
    gamma, i = normalized_null_vector(A)
    coef = np.zeros(grid.nparallelepipeds)
    coef[survivors] = gamma
    beta = base * coef[owner]
    kidx = int(survivors[i])
    counts["matrix"] = A
    counts["unit_cells"] = int(np.sum(beta.reshape(-1, grid.cells_per)[kidx] == 1.0))
    if counts["unit_cells"] < pm / 2:
        raise ConstructionError("chosen parallelepiped keeps fewer than pm/2 unit cells")
    return beta, grid.sub.ktuples[kidx], counts


def choose_alpha(sub: BaseSubdivision, kstar, delta: float) -> np.ndarray:
    """alpha = (c_k* - eta)/T * Delta, so |alpha|_inf = Delta."""
    return sub.direction(kstar) / sub.T * delta


# --- amplitude certification -------------------------------------------------


def certified_amplitude(grid, r: int, D: float) -> float:
    """Certified C shared by all cells: min over cells of extreme and central parallelepipeds.

    Cells of one parallelepiped are translates of each other, and the shear of
    the parallelepipeds varies monotonically with the k-tuple, so the corner
    and center k-tuples bracket every cell shape.
    """
    if isinstance(grid, IntervalTrain):
        return certify_amplitude(grid.cells[0], r, D)
    sub = grid.sub
    pm = sub.pm
    picks = sorted({0, pm // 2, pm - 1})
    best = np.inf
    for kt in itertools.product(picks, repeat=sub.d - 1):
        cell = grid.cells[sub.index(kt) * grid.cells_per]
        best = min(best, certify_amplitude(cell, r, D))
    return float(best)


# --- the pair ----------------------------------------------------------------


class FoolingPair:
    """f1 (plateau), f2 = f1 + [H, 0, ..., 0], the geometry behind H, and the chosen direction."""

    def __init__(self, spec: ProblemSpec, variant: str, grid, beta, kstar, alpha, c_hat: float,
                 params: dict, meta: dict | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.spec = spec
        self.variant = variant
        self.grid = grid
        self.beta = np.asarray(beta, dtype=float)
        self.kstar = kstar
        self.alpha = np.asarray(alpha, dtype=float)
        self.c_hat = float(c_hat)
        self.params = dict(params)
        self.meta = dict(meta or {})
        self.f1 = build_plateau_field(spec, self.alpha)
        self.hat = BumpSum(grid, self.beta, self.c_hat, spec.r)
        self.f2 = PerturbedField(self.f1, self.hat)
        self.z1 = AffinePath(spec.eta, self.alpha, spec.a)

    @property
    def sub(self):
        return getattr(self.grid, "sub", None)

    @property
    def crossing_times(self):
        """(t1, t2): the path z1 enters and leaves the support region of the chosen parallelepiped."""
        spec = self.spec
        if spec.d == 1:
            tr = self.grid
            return spec.a, spec.a + tr.length / spec.delta
        return spec.a + spec.T / (2 * spec.delta), spec.a + spec.T / spec.delta

    def cell_breaks(self) -> np.ndarray:
        """Times at which z1 passes from one cell of the chosen parallelepiped (or interval train) to the next."""
        t1, t2 = self.crossing_times
        pieces = self.grid.ncells if self.spec.d == 1 else self.grid.cells_per
        return t1 + (t2 - t1) * np.arange(pieces + 1) / pieces

    def kstar_cells(self) -> np.ndarray:
        """Coefficients of the cells crossed by z1, in crossing order."""
        if self.spec.d == 1:
            return self.beta
        cp = self.grid.cells_per
        i = self.sub.index(self.kstar)
        return self.beta[i * cp:(i + 1) * cp]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "spec": self.spec.to_dict(),
            "params": self.params,
            "beta": [float(b) for b in self.beta],
            "kstar": list(self.kstar) if isinstance(self.kstar, tuple) else self.kstar,
            "alpha": [float(a) for a in self.alpha],
            "c_hat": self.c_hat,
            "meta": {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, bool))},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "FoolingPair":
        spec = ProblemSpec.from_dict(data["spec"])
        params = data["params"]
        grid = _grid_from_params(spec, params)
        kstar = tuple(data["kstar"]) if isinstance(data["kstar"], list) else data["kstar"]
        return cls(spec, data["variant"], grid, data["beta"], kstar, data["alpha"], data["c_hat"],
                   params, data.get("meta"))

    @classmethod
    def loads(cls, text: str) -> "FoolingPair":
        return cls.from_dict(json.loads(text))


def _grid_from_params(spec: ProblemSpec, params: dict):
    if spec.d == 1:
        return IntervalTrain(spec.eta[0], spec.delta * (spec.b - spec.a), params["groups"], params["per_group"])
    sub = BaseSubdivision(spec.eta, spec.T, params["m"], params["p"])
    return CellGrid(sub, params["cells_per"])


# --- builders ------------------------------------------------------------------


def build_thm1(spec: ProblemSpec, N: InfoOperator, p: int | None = None) -> FoolingPair:
    if spec.d == 1:
        return build_d1(spec, N)
    if N.k:
        raise ValueError("thm1 needs standard information")
    p = spec.p if p is None else p
    m = iroot_ceil(max(N.n, 1), spec.d)
    params = {"m": m, "p": p, "cells_per": p * m}
    grid = _grid_from_params(spec, params)
    beta, kstar = select_betas_standard(grid, N, p)
    ones = int(beta.reshape(-1, grid.cells_per)[grid.sub.index(kstar)].sum())
    c_hat = certified_amplitude(grid, spec.r, spec.D)
    alpha = choose_alpha(grid.sub, kstar, spec.delta)
    meta = {"n": N.n, "eliminated": int((beta == 0).sum()), "ones": ones}
    return FoolingPair(spec, "thm1", grid, beta, kstar, alpha, c_hat, params, meta)


def build_thm2i(spec: ProblemSpec, N: InfoOperator) -> FoolingPair:
    if spec.d < 2:
        raise ValueError("thm2i needs d >= 2")
    m = iroot_ceil(N.n + 1, spec.d - 1)
    params = {"m": m, "p": 1, "cells_per": 1}
    grid = _grid_from_params(spec, params)
    c_hat = certified_amplitude(grid, spec.r, spec.D)
    unit = BumpSum(grid, np.ones(grid.ncells), c_hat, spec.r)
    bumps = [unit.restricted(np.arange(grid.ncells) == j) for j in range(grid.ncells)]
    beta, A = select_betas_linear(bumps, N)
    kidx = int(np.argmax(beta))
    kstar = grid.sub.ktuples[kidx]
    alpha = choose_alpha(grid.sub, kstar, spec.delta)
    resid = float(np.max(np.abs(A @ beta))) if A.size else 0.0
    scale = float(np.linalg.norm(A) * np.linalg.norm(beta))
    meta = {"n": N.n, "constraint_residual": resid, "constraint_scale": scale,
            "beta_max": float(np.max(np.abs(beta)))}
    return FoolingPair(spec, "thm2i", grid, beta, kstar, alpha, c_hat, params, meta)


def build_thm2ii(spec: ProblemSpec, N: InfoOperator, alpha_info: float, p: int | None = None) -> FoolingPair:
    if spec.d == 1:
        return build_d1(spec, N)
    p = smallest_p(alpha_info, spec.d) if p is None else p
    m = iroot_ceil(N.n, spec.d)
    params = {"m": m, "p": p, "cells_per": p * m}
    grid = _grid_from_params(spec, params)
    beta, kstar, counts = select_betas_mixed(grid, N, p, alpha_info)
    c_hat = certified_amplitude(grid, spec.r, spec.D)
    alpha = choose_alpha(grid.sub, kstar, spec.delta)
    meta = {"n": N.n, **{k: v for k, v in counts.items() if k != "matrix"}}
    if "matrix" in counts:
        meta["constraint_scale"] = float(np.linalg.norm(counts["matrix"]) * c_hat)
    return FoolingPair(spec, "thm2ii", grid, beta, kstar, alpha, c_hat, params, meta)


def build_d1(spec: ProblemSpec, N: InfoOperator) -> FoolingPair:
    """Bump train on [eta, eta + Delta (b - a)]: k + 1 intervals of 2n pieces each."""
    if spec.d != 1:
        raise ValueError("the scalar construction needs d = 1")
    n, k = N.n, N.k
    params = {"groups": k + 1, "per_group": 2 * n}
    grid = _grid_from_params(spec, params)
    elim = eliminated_cells(grid, N.standard_atoms)
    remaining = (~elim).reshape(k + 1, 2 * n).sum(axis=1)
    if np.any(remaining < n + k):
        raise ConstructionError("an interval keeps fewer than n + k pieces")
    base = np.where(elim, 0.0, 1.0)
    c_hat = certified_amplitude(grid, spec.r, spec.D)
    if k == 0:
        beta, jstar = base, 0
    else:
        groups = grid.group_of(np.arange(grid.ncells))
        unit = BumpSum(grid, base, c_hat, spec.r)
        cols = [unit.restricted(groups == j) for j in range(k + 1)]
        A = assemble_constraint_matrix(N.linear_functionals, cols)
        gamma, jstar = normalized_null_vector(A)
        beta = base * gamma[groups]
    meta = {"n": n, "k": k, "eliminated": int(elim.sum()), "min_remaining": int(remaining.min())}
    return FoolingPair(spec, "d1", grid, beta, int(jstar), [spec.delta], c_hat, params, meta)


def build_control(spec: ProblemSpec, n: int = 16) -> FoolingPair:
    """H = 0 on the thm1 geometry (the scalar train for d = 1)."""
    if spec.d == 1:
        params = {"groups": 1, "per_group": 2 * n}
        grid = _grid_from_params(spec, params)
        return FoolingPair(spec, "control", grid, np.zeros(grid.ncells), 0, [spec.delta], 1.0, params)
    m = iroot_ceil(n, spec.d)
    params = {"m": m, "p": spec.p, "cells_per": spec.p * m}
    grid = _grid_from_params(spec, params)
    kstar = grid.sub.ktuples[0]
    return FoolingPair(spec, "control", grid, np.zeros(grid.ncells), kstar,
                       choose_alpha(grid.sub, kstar, spec.delta), 1.0, params)


def build_pair(variant: str, spec: ProblemSpec, N: InfoOperator | None = None, *, p: int | None = None,
               alpha_info: float | None = None, n: int = 16) -> FoolingPair:
    if variant == "thm1":
        return build_thm1(spec, N, p)
    if variant == "thm2i":
        return build_thm2i(spec, N)
    if variant == "thm2ii":
        return build_thm2ii(spec, N, alpha_info if alpha_info is not None else 1.0, p)
    if variant == "d1":
        return build_d1(spec, N)
    if variant == "control":
        return build_control(spec, n)
    raise ValueError(f"unknown variant {variant!r}")


# --- separation ----------------------------------------------------------------


def predicted_separation(pair: FoolingPair) -> float:
    """Closed-form lower bound (1/(1+L(b-a))) * C (T/(2pm))^r h(1/2)^(d-1) c_bar * sum of unit-cell crossing times."""
    if pair.variant != "thm1":
        raise ValueError("the closed form applies to thm1 pairs only")
    spec = pair.spec
    pm = pair.grid.sub.pm
    ones = int(np.sum(pair.kstar_cells() == 1.0))
    spacing = spec.T / (2 * spec.delta * pm)
    integral = (pair.c_hat * (spec.T / (2 * pm)) ** spec.r * H_MAX ** (spec.d - 1)
                * integral_h() * ones * spacing)
    return integral / (1.0 + spec.L * (spec.b - spec.a))


def path_integral(pair: FoolingPair, lo: float | None = None, hi: float | None = None) -> float:
    """Adaptive quadrature of H(z1(xi)) over [lo, hi] (default [a, b]), split at cell crossings."""
    spec = pair.spec
    lo = spec.a if lo is None else lo
    hi = spec.b if hi is None else hi
    z1 = pair.z1
    breaks = pair.cell_breaks()
    pts = np.unique(np.clip(np.concatenate([[lo, hi], breaks]), lo, hi))
    g = lambda xi: float(pair.hat(z1(np.array([xi])))[0])
    total = 0.0
    for u, v in zip(pts[:-1], pts[1:]):
        if v > u:
            val, _ = quad(g, u, v, epsabs=0.0, epsrel=1e-11, limit=200)
            total += val
    return total


def verify_zero_information(pair: FoolingPair, N: InfoOperator) -> np.ndarray:
    """N(f2) - N(f1), componentwise."""
    return evaluate_info(N, pair.f2) - evaluate_info(N, pair.f1)


def relative_info_residuals(pair: FoolingPair, N: InfoOperator):
    """(residuals, scales): scale_i = sum |w| max(|atom(f1)|, |atom(f2)|) for functional i."""
    res = verify_zero_information(pair, N)
    return res, functional_scale(N, pair.f1, pair.f2)


def class_check_points(pair: FoolingPair, count: int = 1000):
    """Deterministic sample points and FD steps for class-membership checks.

    Half the points cover M (slightly enlarged), half the region carrying H;
    steps are 1/256 of the local feature size.
    """
    spec = pair.spec
    half = count // 2
    pad = 0.05 * (spec.M_hi - spec.M_lo)
    outer = halton_points(spec.M_lo - pad, spec.M_hi + pad, count - half, skip=1)
    rlo, rhi = pair.grid.region_box()
    rpad = 0.1 * (rhi - rlo)
    inner = halton_points(rlo - rpad, rhi + rpad, half, skip=1)
    Y = np.concatenate([outer, inner])
    cell_size = float(np.min(pair.grid.scale))
    margin = float(min(np.min(spec.M1_lo - spec.M_lo), np.min(spec.M_hi - spec.M1_hi)))
    near = np.all((Y > rlo - rpad - 4 * margin / 256) & (Y < rhi + rpad + 4 * margin / 256), axis=1)
    steps = np.where(near, cell_size / 256, margin / 256)
    return Y, steps


def fd_class_bound(field, Y, steps, r: int) -> float:
    """Max over components and partials of orders 0..r of |D^i f^j| (orders >= 1 by central FD)."""
    worst = float(np.max(np.abs(field(Y))))
    for order in range(1, r + 1):
        for alpha in multi_indices(Y.shape[1], order):
            worst = max(worst, float(np.max(np.abs(fd_partial(field, Y, alpha, steps)))))
    return worst
