"""Central finite differences on scattered points (test oracle and sampling checks)."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def multi_indices(d: int, order: int):
    """All multi-indices in N^d of total order ``order``, lexicographic."""
    out = []
    for combo in itertools.combinations_with_replacement(range(d), order):
        out.append(tuple(combo.count(i) for i in range(d)))
    return sorted(set(out), reverse=True)


@lru_cache(maxsize=None)
def central_weights(order: int):
    """Second-order accurate central stencil (offsets, weights) for the given derivative order."""
    if order == 0:
        return (0,), (1.0,)
    half = (order + 1) // 2
    offsets = np.arange(-half, half + 1)
    V = np.vander(offsets, increasing=True).T.astype(float)
    rhs = np.zeros(offsets.size)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    w = np.linalg.solve(V, rhs)
    w[np.abs(w) < 1e-13] = 0.0
    return tuple(int(o) for o in offsets), tuple(float(x) for x in w)


def fd_partial(func, Y, derivative, step):
    """Tensor central-difference approximation of the partial ``derivative`` of ``func``.

    ``func`` maps (npts, d) to (npts,) or (npts, m); ``step`` is a scalar or
    one step per point.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    step = np.broadcast_to(np.asarray(step, dtype=float), Y.shape[:1])
    stencils = [central_weights(k) for k in derivative]
    total = None
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        w = 1.0
        shift = np.zeros(Y.shape[1])
        for axis, idx in enumerate(combo):
            offsets, weights = stencils[axis]
            w *= weights[idx]
            shift[axis] = offsets[idx]
        if w == 0.0:
            continue
        vals = np.asarray(func(Y + step[:, None] * shift), dtype=float)
        total = w * vals if total is None else total + w * vals
    scale = step ** sum(derivative)
    if total.ndim > 1:
        scale = scale[:, None]
    return total / scale
