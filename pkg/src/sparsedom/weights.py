"""Muckenhoupt weights, A_p characteristics and weighted norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import BallFamily, Space, pointwise_norms


@dataclass(eq=False)
class Weight:
    space: Space
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n,):
            raise ValueError("one weight value per point")
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("weights must be positive and finite")

    def to_json(self):
        return self.values.tolist()


def power_weight(space, gamma, center=None):
    """``w(s) = d(s, center)^gamma``, distances floored at half a cell."""
    if center is None:
        center = np.zeros(space.dim)
    dist = np.maximum(space.distance_to(center), space.half_cell_distance())
    return Weight(space, dist**gamma)


def _values(w):
    return w.values if isinstance(w, Weight) else np.asarray(w, dtype=float)


def ap_characteristic(w, p, basis="balls", family=None):
    """Exact ``sup_B <w>_B <w^{-1}>_{1/(p-1),B}`` over a finite basis.

    ``basis`` is ``"balls"`` (every ball member set) or a
    :class:`~sparsedom.dyadic.DyadicSystem` (all of its cubes).  For
    ``p = 1`` the second factor is ``max_B w^{-1}``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    space = w.space
    v = _values(w)
    if basis == "balls":
        fam = family or BallFamily.build(space)
        first = fam.averages(v)
        if p == 1:
            second = fam.prefix_max(1.0 / v)
        else:
            second = fam.averages(v ** (-1.0 / (p - 1))) ** (p - 1)
        prod = first * second
        return float(np.nanmax(prod))
    mu = space.measure
    best = 0.0
    for q in basis.cubes:
        m = q.members
        a = np.dot(v[m], mu[m]) / mu[m].sum()
        if p == 1:
            b = (1.0 / v[m]).max()
        else:
            b = (np.dot(v[m] ** (-1.0 / (p - 1)), mu[m]) / mu[m].sum()) ** (p - 1)
        best = max(best, a * b)
    return float(best)


def weighted_lp_norm(f, p, w=None, space=None, r=2.0):
    """``(sum ||f(s)||^p w(s) mu(s))^(1/p)``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    space = space or getattr(f, "space", None) or w.space
    g = pointwise_norms(f, r)
    wt = space.measure if w is None else space.measure * _values(w)
    return float(np.sum(g**p * wt) ** (1.0 / p))


def weak_lp_norm(g, p, w=None, space=None, r=2.0):
    """``sup_lambda lambda * mu({||g|| > lambda})^(1/p)``, exact.

    The distribution function is constant between distinct values of
    ``||g||``, so the supremum is approached as ``lambda`` increases to one
    of them; at value ``v`` it equals ``v * mu({||g|| >= v})^(1/p)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    space = space or getattr(g, "space", None) or w.space
    x = pointwise_norms(g, r)
    wt = space.measure if w is None else space.measure * _values(w)
    order = np.argsort(-x, kind="stable")
    xs = x[order]
    tail = np.cumsum(wt[order])
    # mass of {x >= v}: include every tie of v
    last = np.searchsorted(-xs, -xs, side="right") - 1
    vals = xs * tail[last] ** (1.0 / p)
    return float(vals.max()) if len(vals) else 0.0
