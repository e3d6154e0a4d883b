"""Problem instances and the cone/parallelepiped/cell geometry of the adversary."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bump import Parallelepiped
from .plateau import plateau_delta_limit


def iroot_floor(n: int, k: int) -> int:
    """Largest integer g with g**k <= n."""
    if n < 0 or k < 1:
        raise ValueError("need n >= 0 and k >= 1")
    g = int(round(n ** (1.0 / k)))
    while g ** k > n:
        g -= 1
    while (g + 1) ** k <= n:
        g += 1
    return g


def iroot_ceil(n: int, k: int) -> int:
    """Smallest integer g with g**k >= n."""
    g = iroot_floor(n, k)
    return g if g ** k == n else g + 1


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """An IVP instance z' = f(z), z(a) = eta, with the class F_{r,d} parameters.

    Boxes are given by lower/upper corner arrays and are open.  ``L`` is the
    max-norm Lipschitz constant d*D of class members.
    """

    a: float
    b: float
    eta: np.ndarray
    d: int
    r: int
    D: float
    M_lo: np.ndarray
    M_hi: np.ndarray
    M1_lo: np.ndarray
    M1_hi: np.ndarray
    delta: float
    T: float
    p: int = 2

    def __post_init__(self):
        for name in ("eta", "M_lo", "M_hi", "M1_lo", "M1_hi"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.size != self.d:
                raise ValueError(f"{name} must have {self.d} components")
            object.__setattr__(self, name, arr)
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.d < 1 or self.r < 1 or not self.D > 0:
            raise ValueError("need d >= 1, r >= 1, D > 0")
        if not (np.all(self.M_lo < self.M1_lo) and np.all(self.M1_hi < self.M_hi)):
            raise ValueError("closure of M1 must lie inside M")
        if not np.all((self.eta > self.M1_lo) & (self.eta < self.M1_hi)):
            raise ValueError("eta must lie in M1")
        if not 0 < self.delta <= self.D / 2:
            raise ValueError("need 0 < Delta <= D/2")
        radius = self.delta * (self.b - self.a)
        if not (np.all(self.eta - radius > self.M1_lo) and np.all(self.eta + radius < self.M1_hi)):
            raise ValueError("the ball B_Delta must lie inside M1")
        if not 0 < self.T <= radius:
            raise ValueError("need 0 < T <= Delta (b - a)")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def L(self) -> float:
        return self.d * self.D

    @property
    def radius(self) -> float:
        return self.delta * (self.b - self.a)

    def replace(self, **changes) -> "ProblemSpec":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return ProblemSpec(**kw)

    @classmethod
    def create(cls, d: int, r: int, D: float = 1.0, a: float = 0.0, b: float = 1.0, eta=None,
               M=None, M1=None, p: int = 2, delta: float | None = None, T: float | None = None):
        """Default geometry: M = (0,1)^d, M1 = (0.2,0.8)^d, eta at the center.

        Delta defaults to min(D/2, 0.9 dist(eta, boundary of M1)/(b-a), Delta_ext)
        where Delta_ext keeps the plateau cutoff inside the class; T defaults
        to Delta (b - a).
        """
        M_lo, M_hi = (np.zeros(d), np.ones(d)) if M is None else map(np.asarray, M)
        M1_lo, M1_hi = (np.full(d, 0.2), np.full(d, 0.8)) if M1 is None else map(np.asarray, M1)
        M_lo, M_hi, M1_lo, M1_hi = (np.broadcast_to(np.asarray(v, float), (d,)).copy()
                                    for v in (M_lo, M_hi, M1_lo, M1_hi))
        eta = (M1_lo + M1_hi) / 2 if eta is None else np.broadcast_to(np.asarray(eta, float), (d,)).copy()
        if delta is None:
            dist = float(np.min(np.minimum(eta - M1_lo, M1_hi - eta)))
            delta_ext = plateau_delta_limit(M_lo, M_hi, M1_lo, M1_hi, r, D)
            delta = min(D / 2, 0.9 * dist / (b - a), delta_ext)
        if T is None:
            T = delta * (b - a)
        return cls(a=a, b=b, eta=eta, d=d, r=r, D=D, M_lo=M_lo, M_hi=M_hi, M1_lo=M1_lo,
                   M1_hi=M1_hi, delta=delta, T=T, p=p)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            out[name] = [float(x) for x in v] if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        return cls(**data)


def build_base_cube(spec: ProblemSpec):
    """Hypercube K = prod [a_j, b_j] with upper corner eta and edge T; returns (lo, hi)."""
    if spec.T > spec.radius:
        raise ValueError("T exceeds Delta (b - a)")
    hi = spec.eta.copy()
    return hi - spec.T, hi


@dataclass(frozen=True, eq=False)
class BaseSubdivision:
    """Equidistant subdivision of the face K1 = K cut by y^d = a_d into (pm)^(d-1) sub-cubes."""

    eta: np.ndarray
    T: float
    m: int
    p: int
    ktuples: tuple = field(init=False)
    centers: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.m < 1 or self.p < 1:
            raise ValueError("need p >= 1 and m >= 1")
        d = self.eta.size
        pm = self.p * self.m
        ks = tuple(itertools.product(range(pm), repeat=d - 1))
        lo = self.eta - self.T
        centers = np.empty((len(ks), d))
        for i, k in enumerate(ks):
            for j, kj in enumerate(k):
                centers[i, j] = lo[j] + (kj + 0.5) * self.T / pm
            centers[i, d - 1] = lo[d - 1]
        object.__setattr__(self, "ktuples", ks)
        object.__setattr__(self, "centers", centers)

    @property
    def d(self) -> int:
        return self.eta.size

    @property
    def pm(self) -> int:
        return self.p * self.m

    @property
    def K_lo(self) -> np.ndarray:
        return self.eta - self.T

    def grid_points(self, axis: int) -> np.ndarray:
        """t_k = a_j + k T/(pm), k = 0..pm."""
        return self.K_lo[axis] + np.arange(self.pm + 1) * self.T / self.pm

    def index(self, ktuple) -> int:
        pm = self.pm
        flat = 0
        for k in ktuple:
            if not 0 <= k < pm:
                raise IndexError(f"k-tuple {ktuple} out of range")
            flat = flat * pm + k
        return flat

    def sub_cube(self, ktuple):
        """(lo, hi) of K_{k} as a box in R^d with a degenerate last axis."""
        i = self.index(ktuple)
        c = self.centers[i]
        half = self.T / (2 * self.pm)
        lo, hi = c.copy(), c.copy()
        lo[:-1] -= half
        hi[:-1] += half
        return lo, hi

    def direction(self, ktuple) -> np.ndarray:
        """alpha_k = c_k - eta (max-norm T)."""
        return self.centers[self.index(ktuple)] - self.eta


def subdivide_base_face(spec_or_eta, p: int, m: int, T: float | None = None) -> BaseSubdivision:
    if isinstance(spec_or_eta, ProblemSpec):
        return BaseSubdivision(spec_or_eta.eta, spec_or_eta.T, m, p)
    return BaseSubdivision(np.asarray(spec_or_eta, float), float(T), m, p)


def mid_section(sub: BaseSubdivision, ktuple):
    """K_bar_k = eta + (K_k - eta)/2, the cone cross-section at y^d = (a_d + b_d)/2."""
    lo, hi = sub.sub_cube(ktuple)
    return sub.eta + 0.5 * (lo - sub.eta), sub.eta + 0.5 * (hi - sub.eta)


def build_parallelepiped(sub: BaseSubdivision, ktuple) -> Parallelepiped:
    """P_k swept from K_bar_k by alpha_k/2 * l, l in [0, 1].

    Stored with its base on the lower face (centered at c_k, level a_d) and
    direction -alpha_k, so cos(direction, e_d) >= 1/sqrt(d).
    """
    d = sub.d
    c = sub.centers[sub.index(ktuple)]
    alpha = c - sub.eta
    half = sub.T / (4 * sub.pm)
    return Parallelepiped(base_lo=c[:-1] - half, base_hi=c[:-1] + half, direction=-alpha,
                          height=0.5 * float(np.linalg.norm(alpha)), base_level=c[-1],
                          min_cos=(1.0 - 1e-12) / math.sqrt(d))


def subdivide_cells(P: Parallelepiped, pm: int):
    """Split P into pm cells along the sweep; cell j covers l in [j/pm, (j+1)/pm] from the top face."""
    if pm < 1:
        raise ValueError("pm must be >= 1")
    if pm == 1:
        return [P]
    u = P.direction
    out = []
    for j in range(pm):
        lbar0 = P.height * (pm - j - 1) / pm
        out.append(Parallelepiped(base_lo=P.base_lo + u[:-1] * lbar0, base_hi=P.base_hi + u[:-1] * lbar0,
                                  direction=u, height=P.height / pm,
                                  base_level=P.base_level + u[-1] * lbar0, min_cos=P.min_cos))
    return out


class _CellArrays:
    """Vectorized cell parameters shared by the d >= 2 and d = 1 grids."""

    def _stack(self, cells):
        self.cells = cells
        self.base_lo = np.array([c.base_lo for c in cells]).reshape(len(cells), -1)
        self.widths = np.array([c.widths for c in cells]).reshape(len(cells), -1)
        self.base_level = np.array([c.base_level for c in cells])
        self.direction = np.array([c.direction for c in cells])
        self.height = np.array([c.height for c in cells])
        self.scale = np.array([c.amplitude_scale() for c in cells])
        # plain-float copies for the single-point path
        self._py = (self.base_lo.tolist(), self.widths.tolist(), self.base_level.tolist(),
                    self.direction.tolist(), self.height.tolist())

    @property
    def ncells(self) -> int:
        return len(self.cells)

    def unit_coords(self, Y, idx):
        """Unit-cube coordinates of Y[i] in cell idx[i] (same arithmetic as Parallelepiped.unit_coords)."""
        Y = np.atleast_2d(Y)
        u = self.direction[idx]
        lbar = (Y[:, -1] - self.base_level[idx]) / u[:, -1]
        ybar = Y[:, :-1] - u[:, :-1] * lbar[:, None]
        xs = (ybar - self.base_lo[idx]) / self.widths[idx]
        return np.concatenate([xs, (lbar / self.height[idx])[:, None]], axis=1)

    def coord_matrix(self, idx: int) -> np.ndarray:
        return self.cells[idx].coord_matrix()

    def point_coords(self, y, idx: int):
        """Unit coordinates of a single point in cell ``idx`` if it lies in the open interior, else None."""
        base_lo, widths, level, direction, height = self._py
        u = direction[idx]
        lbar = (y[-1] - level[idx]) / u[-1]
        xd = lbar / height[idx]
        if not 0.0 < xd < 1.0:
            return None
        lo, w = base_lo[idx], widths[idx]
        out = []
        for j in range(len(lo)):
            x = ((y[j] - u[j] * lbar) - lo[j]) / w[j]
            if not 0.0 < x < 1.0:
                return None
            out.append(x)
        out.append(xd)
        return out

    def _interior(self, Y, idx, return_coords=False):
        ok = idx >= 0
        out = np.full(idx.shape, -1)
        coords = np.full(Y.shape, np.nan)
        if np.any(ok):
            x = self.unit_coords(Y[ok], idx[ok])
            inside = np.all((x > 0.0) & (x < 1.0), axis=1)
            sel = np.flatnonzero(ok)[inside]
            out[sel] = idx[ok][inside]
            coords[sel] = x[inside]
        return (out, coords) if return_coords else out

    def brute_force_locate(self, y):
        hits = [i for i, c in enumerate(self.cells) if c.contains_interior(y)]
        return hits


class CellGrid(_CellArrays):
    """Cells of all parallelepipeds P_k, ``cells_per`` slices each.

    Flat cell index = parallelepiped_index * cells_per + j, parallelepipeds in
    lexicographic k order.
    """

    def __init__(self, sub: BaseSubdivision, cells_per: int):
        self.sub = sub
        self.cells_per = cells_per
        self.parallelepipeds = [build_parallelepiped(sub, k) for k in sub.ktuples]
        cells = []
        for P in self.parallelepipeds:
            cells.extend(subdivide_cells(P, cells_per))
        self._stack(cells)

    @property
    def nparallelepipeds(self) -> int:
        return len(self.parallelepipeds)

    def split_index(self, flat: int):
        kidx, j = divmod(flat, self.cells_per)
        return self.sub.ktuples[kidx], j

    def flat_index(self, ktuple, j: int) -> int:
        return self.sub.index(ktuple) * self.cells_per + j

    def locate(self, Y, return_coords: bool = False):
        """Flat index of the cell whose open interior contains each point, else -1.

        With ``return_coords`` also returns the unit coordinates in that cell
        (NaN rows where no cell was found).
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        sub = self.sub
        T, pm = sub.T, sub.pm
        eta = sub.eta
        with np.errstate(divide="ignore", invalid="ignore"):
            l = 2.0 * ((eta[-1] - T / 2) - Y[:, -1]) / T
            s = 0.5 * (1.0 + l)
            kf = np.floor(pm * (1.0 + (Y[:, :-1] - eta[:-1]) / (T * s[:, None])))
            jf = np.floor(l * self.cells_per)
        valid = (l > 0) & (l < 1) & np.all((kf >= 0) & (kf < pm), axis=1) & (jf >= 0) & (jf < self.cells_per)
        idx = np.full(Y.shape[0], -1)
        if np.any(valid):
            kk = kf[valid].astype(int)
            flat = np.zeros(kk.shape[0], dtype=int)
            for col in range(kk.shape[1]):
                flat = flat * pm + kk[:, col]
            idx[valid] = flat * self.cells_per + jf[valid].astype(int)
        return self._interior(Y, idx, return_coords)

    def locate_point(self, y):
        """Single-point version of ``locate``: (index, unit coordinates) or (-1, None)."""
        sub = self.sub
        T, pm, eta = sub.T, sub.pm, sub.eta.tolist()
        l = 2.0 * ((eta[-1] - T / 2) - y[-1]) / T
        if not 0.0 < l < 1.0:
            return -1, None
        s = 0.5 * (1.0 + l)
        flat = 0
        for j in range(len(y) - 1):
            k = math.floor(pm * (1.0 + (y[j] - eta[j]) / (T * s)))
            if not 0 <= k < pm:
                return -1, None
            flat = flat * pm + k
        jj = math.floor(l * self.cells_per)
        if not 0 <= jj < self.cells_per:
            return -1, None
        idx = flat * self.cells_per + jj
        x = self.point_coords(y, idx)
        return (idx, x) if x is not None else (-1, None)

    def region_box(self):
        v = np.concatenate([P.vertices() for P in self.parallelepipeds])
        return v.min(axis=0), v.max(axis=0)


class IntervalTrain(_CellArrays):
    """One-dimensional cells: [start, start + length] cut into ``groups`` intervals of ``per_group`` pieces."""

    def __init__(self, start: float, length: float, groups: int, per_group: int):
        self.start = float(start)
        self.length = float(length)
        self.groups = groups
        self.per_group = per_group
        n = groups * per_group
        self.cell_length = self.length / n
        cells = [Parallelepiped(base_lo=np.zeros(0), base_hi=np.zeros(0), direction=[1.0],
                                height=self.cell_length, base_level=self.start + i * self.cell_length)
                 for i in range(n)]
        self._stack(cells)

    def group_of(self, flat):
        return np.asarray(flat) // self.per_group

    def locate(self, Y, return_coords: bool = False):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        f = np.floor((Y[:, 0] - self.start) / self.cell_length)
        idx = np.where((f >= 0) & (f < self.ncells), f, -1).astype(int)
        return self._interior(Y, idx, return_coords)

    def locate_point(self, y):
        f = math.floor((y[0] - self.start) / self.cell_length)
        if not 0 <= f < self.ncells:
            return -1, None
        x = self.point_coords(y, f)
        return (f, x) if x is not None else (-1, None)

    def region_box(self):
        return np.array([self.start]), np.array([self.start + self.length])


def locate_cell(y, grid) -> int | None:
    idx = int(grid.locate(np.asarray(y, float)[None])[0])
    return None if idx < 0 else idx
