"""Nonadaptive information operators: standard atoms and finite weighted combinations of them.

Component indices are 0-based throughout (component 0 is the first
component of the right-hand side).
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .geometry import ProblemSpec, iroot_floor


@dataclass(frozen=True)
class StandardAtom:
    """L(f) = D^order f^component (point)."""

    point: tuple
    component: int = 0
    order: tuple | None = None

    def __post_init__(self):
        point = tuple(float(v) for v in np.ravel(self.point))
        object.__setattr__(self, "point", point)
        order = (0,) * len(point) if self.order is None else tuple(int(k) for k in self.order)
        if len(order) != len(point):
            raise ValueError("derivative multi-index must have one entry per coordinate")
        if any(k < 0 for k in order):
            raise ValueError("derivative orders must be nonnegative")
        if not 0 <= self.component < len(point):
            raise ValueError(f"component index {self.component} out of range")
        object.__setattr__(self, "order", order)

    @property
    def total_order(self) -> int:
        return sum(self.order)


@dataclass(frozen=True)
class LinearFunctional:
    """sum_i weight_i * atom_i(f)."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(w), a) for w, a in self.terms)
        if not terms:
            raise ValueError("a linear functional needs at least one term")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def single(cls, atom: StandardAtom) -> "LinearFunctional":
        return cls(((1.0, atom),))

    @property
    def is_standard(self) -> bool:
        return len(self.terms) == 1 and self.terms[0][0] == 1.0

    @property
    def atoms(self):
        return [a for _, a in self.terms]


@dataclass(frozen=True)
class InfoOperator:
    """N_n(f) = [standard_1, ..., standard_{n-k}, linear_1, ..., linear_k].

    ``alpha_info`` (when set) enforces k <= alpha_info * n^(1 - 1/d).
    """

    functionals: tuple
    k: int = 0
    alpha_info: float | None = None

    def __post_init__(self):
        fs = tuple(f if isinstance(f, LinearFunctional) else LinearFunctional.single(f)
                   for f in self.functionals)
        object.__setattr__(self, "functionals", fs)
        n = len(fs)
        if not 0 <= self.k <= n:
            raise ValueError("split index k out of range")
        for f in fs[: n - self.k]:
            if not f.is_standard:
                raise ValueError("the first n - k functionals must be standard atoms")
        if self.alpha_info is not None and n > 0 and self.k > 0:
            d = len(fs[0].terms[0][1].point)
            if self.k > self.alpha_info * n ** (1.0 - 1.0 / d) + 1e-12:
                raise ValueError("k exceeds alpha_info * n^(1 - 1/d)")

    @property
    def n(self) -> int:
        return len(self.functionals)

    @property
    def nonadaptive(self) -> bool:
        return True

    @property
    def standard_atoms(self):
        return [f.terms[0][1] for f in self.functionals[: self.n - self.k]]

    @property
    def linear_functionals(self):
        return list(self.functionals[self.n - self.k:])

    @property
    def max_order(self) -> int:
        return max((a.total_order for f in self.functionals for a in f.atoms), default=0)

    @classmethod
    def from_atoms(cls, atoms) -> "InfoOperator":
        return cls(tuple(LinearFunctional.single(a) for a in atoms))

    @classmethod
    def mixed(cls, atoms, linear, alpha_info: float | None = None) -> "InfoOperator":
        fs = tuple(LinearFunctional.single(a) for a in atoms) + tuple(linear)
        return cls(fs, k=len(linear), alpha_info=alpha_info)

    # serialization: one record per term, grouped per functional
    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha_info": self.alpha_info,
            "functionals": [
                [{"point": list(a.point), "component": a.component,
                  "order_multi_index": list(a.order), "weight": w} for w, a in f.terms]
                for f in self.functionals
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InfoOperator":
        fs = tuple(LinearFunctional(tuple((rec["weight"], StandardAtom(tuple(rec["point"]), rec["component"],
                                                                         tuple(rec["order_multi_index"])))
                                          for rec in terms))
                   for terms in data["functionals"])
        return cls(fs, k=data["k"], alpha_info=data.get("alpha_info"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "InfoOperator":
        return cls.from_dict(json.loads(text))


def _atom_values(atoms, field) -> np.ndarray:
    """Values of standard atoms on a field; atoms sharing (component, order) are evaluated together."""
    groups = defaultdict(list)
    for i, a in enumerate(atoms):
        groups[(a.component, a.order)].append(i)
    out = np.empty(len(atoms))
    for (comp, order), ids in groups.items():
        Y = np.array([atoms[i].point for i in ids])
        out[ids] = field.partial(Y, comp, order)
    return out


def evaluate_info(N: InfoOperator, field) -> np.ndarray:
    """Apply every functional of N to ``field`` (anything with ``partial(Y, component, order)``)."""
    atoms, owner, weights = [], [], []
    for i, f in enumerate(N.functionals):
        for w, a in f.terms:
            atoms.append(a)
            owner.append(i)
            weights.append(w)
    vals = _atom_values(atoms, field) if atoms else np.zeros(0)
    out = np.zeros(N.n)
    np.add.at(out, np.array(owner, dtype=int), np.array(weights) * vals)
    return out


def functional_scale(N: InfoOperator, *fields) -> np.ndarray:
    """sum_i |w_i| * max over fields of |atom_i(field)|, per functional (for relative residuals)."""
    out = np.zeros(N.n)
    for f in fields:
        for i, fun in enumerate(N.functionals):
            vals = _atom_values(fun.atoms, f)
            out[i] = max(out[i], float(sum(abs(w) * abs(v) for (w, _), v in zip(fun.terms, vals))))
    return out


def grid_points(lo, hi, g: int) -> np.ndarray:
    """Cell-centered tensor grid with g points per axis, lexicographic order."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    axes = [lo[j] + (np.arange(g) + 0.5) * (hi[j] - lo[j]) / g for j in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def uniform_grid_info(spec: ProblemSpec, n: int, round_robin: bool = False,
                      all_components: bool = False) -> InfoOperator:
    """floor(n^(1/d))^d value atoms on a cell-centered grid over M1.

    By default every atom reads component 0; ``round_robin`` cycles the
    component index, ``all_components`` reads every component at each node
    (d atoms per node, used by the grid solver).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = spec.d
    g = iroot_floor(n, d)
    pts = grid_points(spec.M1_lo, spec.M1_hi, g)
    atoms = []
    for i, y in enumerate(pts):
        if all_components:
            atoms.extend(StandardAtom(tuple(y), c) for c in range(d))
        else:
            atoms.append(StandardAtom(tuple(y), i % d if round_robin else 0))
    return InfoOperator.from_atoms(atoms)


def random_atoms(rng: np.random.Generator, count: int, lo, hi, r: int = 0, components: int = 1):
    """``count`` atoms at uniform random points of [lo, hi]; orders up to r, components below ``components``."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    d = lo.size
    pts = rng.uniform(lo, hi, size=(count, d))
    atoms = []
    for y in pts:
        comp = int(rng.integers(components)) if components > 1 else 0
        order = [0] * d
        for _ in range(int(rng.integers(r + 1)) if r > 0 else 0):
            order[int(rng.integers(d))] += 1
        atoms.append(StandardAtom(tuple(y), comp, tuple(order)))
    return atoms


def random_linear_functionals(rng: np.random.Generator, count: int, lo, hi, atoms_per: int = 3,
                              r: int = 0, components: int = 1, smooth: bool = False):
    """Finite-rank functionals sum_i w_i D^k f^c(y_i) at random points of [lo, hi].

    With ``smooth`` the weights sample a random low-degree trigonometric
    profile over the box instead of being independent normals, which makes
    the functional behave like a discretized integral.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    out = []
    for _ in range(count):
        atoms = random_atoms(rng, atoms_per, lo, hi, r=r, components=components)
        if smooth:
            coef = rng.normal(size=4)
            u = (np.array([a.point for a in atoms]) - lo) / (hi - lo)
            s = u.mean(axis=1)
            prof = coef[0] + coef[1] * np.cos(math.pi * s) + coef[2] * np.sin(math.pi * s) + coef[3] * np.cos(2 * math.pi * s)
            weights = prof / atoms_per
        else:
            weights = rng.normal(size=atoms_per)
        out.append(LinearFunctional(tuple(zip(weights, atoms))))
    return out


def assemble_constraint_matrix(functionals, bumps) -> np.ndarray:
    """Entry (i, j) = functional i applied to H = [bump_j, 0, ..., 0].

    Each bump exposes ``partial(Y, order)``; atoms on components other than 0
    see zero.
    """
    fs = [f if isinstance(f, LinearFunctional) else LinearFunctional.single(f) for f in functionals]
    A = np.zeros((len(fs), len(bumps)))
    rows, weights, atoms = [], [], []
    for i, f in enumerate(fs):
        for w, a in f.terms:
            if a.component == 0:
                rows.append(i)
                weights.append(w)
                atoms.append(a)
    if not atoms:
        return A
    groups = defaultdict(list)
    for t, a in enumerate(atoms):
        groups[a.order].append(t)
    rows = np.array(rows)
    weights = np.array(weights)
    for order, ids in groups.items():
        Y = np.array([atoms[t].point for t in ids])
        for j, bump in enumerate(bumps):
            vals = bump.partial(Y, order)
            np.add.at(A[:, j], rows[ids], weights[ids] * vals)
    return A


def quadrature_functionals(rng: np.random.Generator, count: int, lo, hi, nodes_per_axis: int,
                           component: int = 0):
    """``count`` functionals approximating int psi_i(y) f^c(y) dy over [lo, hi] by the midpoint rule.

    Each psi_i is a random low-degree trigonometric profile drawn from
    ``rng``; the nodes are the cell-centered grid, so the same generator
    state gives the same profiles for every node count.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    pts = grid_points(lo, hi, nodes_per_axis)
    u = ((pts - lo) / (hi - lo)).mean(axis=1)
    vol = float(np.prod(hi - lo)) / pts.shape[0]
    atoms = [StandardAtom(tuple(y), component) for y in pts]
    out = []
    for _ in range(count):
        coef = rng.normal(size=4)
        prof = (coef[0] + coef[1] * np.cos(math.pi * u) + coef[2] * np.sin(math.pi * u)
                + coef[3] * np.cos(2 * math.pi * u))
        out.append(LinearFunctional(tuple(zip(prof * vol, atoms))))
    return out
