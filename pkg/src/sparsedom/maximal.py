"""Maximal operators and sharp grand maximal truncations.

Also defines :class:`Operator`, the common interface of everything that is
dominated: a map on vector-valued grid functions together with a
localization ``Q -> T_Q``.
"""
from __future__ import annotations

import numpy as np

from .space import BallFamily, GridFunction, lp_norm, pointwise_norms


class CostGuardError(RuntimeError):
    pass


def as_values(f):
    """(N, m) array of the values of a GridFunction or array."""
    if isinstance(f, GridFunction):
        return f.values
    v = np.asarray(f)
    return v[:, None] if v.ndim == 1 else v


class Operator:
    """Map on grid functions with its canonical ``alpha``-localization.

    Subclasses implement :meth:`apply` on (N, m) arrays.  The default
    localization is ``T_Q f = T(f 1_{alpha Q})`` restricted to ``Q``; values
    live in ``Y = l^{r_y}`` over the trailing axis.
    """

    name = "operator"

    def __init__(self, space, alpha=1.0, r_y=2.0, descriptor=None):
        self.space = space
        self.alpha = float(alpha)
        self.r_y = r_y
        self.descriptor = dict(descriptor or {})

    def apply(self, f):
        raise NotImplementedError

    def apply_many(self, F):
        return np.stack([self.apply(x) for x in F])

    def __call__(self, f):
        return self.apply(as_values(f))

    def localized(self, f, system, cube):
        f = as_values(f)
        ball = system.dilate(cube, self.alpha)
        mask = np.zeros(self.space.n)
        mask[ball.members] = 1.0
        return self.apply(f * mask[:, None])[cube.members]

    def ynorm(self, y):
        return lp_norm(y, self.r_y)

    def describe(self):
        return {"name": self.name, "alpha": self.alpha, **self.descriptor}


class IdentityOperator(Operator):
    """``T f = f`` with ``T_Q f = f`` on ``Q``."""

    name = "identity"

    def __init__(self, space, r_y=2.0):
        super().__init__(space, alpha=1.0, r_y=r_y)

    def apply(self, f):
        return np.array(as_values(f), dtype=float)

    def apply_many(self, F):
        return np.array(F, dtype=float)

    def localized(self, f, system, cube):
        return np.array(as_values(f)[cube.members], dtype=float)


class LocalCache:
    """Memo of ``T_Q f`` on ``Q`` for one operator, function and system."""

    def __init__(self, op, f, system):
        self.op, self.f, self.system = op, as_values(f), system
        self._store = {}

    def __call__(self, cube):
        v = self._store.get(cube.id)
        if v is None:
            v = self.op.localized(self.f, self.system, cube)
            self._store[cube.id] = v
        return v


def dyadic_maximal(f, system, p0=1.0, r=2.0):
    """``M^D_{p0} f(s) = max_{Q containing s} <||f||^p0>_Q^(1/p0)``."""
    if p0 < 1:
        raise ValueError("p0 must be >= 1")
    g = pointwise_norms(f, r) ** p0
    mu = system.space.measure
    best = np.zeros(system.space.n)
    for lab in system.labels:
        num = np.bincount(lab, weights=g * mu, minlength=len(system.cubes))
        den = np.bincount(lab, weights=mu, minlength=len(system.cubes))
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = num / den
        best = np.maximum(best, avg[lab])
    return best ** (1.0 / p0)


def hl_maximal(f, space, p0=1.0, r=2.0, family=None):
    """``M_{p0} f(s) = max_{B containing s} <||f||^p0>_B^(1/p0)`` over all balls."""
    if p0 < 1:
        raise ValueError("p0 must be >= 1")
    fam = family or BallFamily.build(space)
    g = pointwise_norms(f, r) ** p0
    return fam.max_over_containing(fam.averages(g)) ** (1.0 / p0)


def oscillation(values, ynorm):
    """``max ||y(s') - y(s'')||`` over pairs of rows of ``values``."""
    n = len(values)
    if n < 2:
        return 0.0
    flat = values.reshape(n, -1)
    uniq = np.unique(flat, axis=0)
    if len(uniq) < 2:
        return 0.0
    if uniq.shape[1] == 1 and not np.iscomplexobj(uniq):
        return float(uniq.max() - uniq.min())
    shape = values.shape[1:]
    best = 0.0
    for i in range(len(uniq) - 1):
        diff = (uniq[i + 1 :] - uniq[i]).reshape((-1,) + shape)
        best = max(best, float(np.max(ynorm(diff))))
    return best


def q_oscillation(values, weights, q, ynorm):
    """``(avg avg ||y(s') - y(s'')||^q)^(1/q)`` with point weights."""
    n = len(values)
    if n < 2:
        return 0.0
    w = weights / weights.sum()
    total = 0.0
    for i in range(n):
        diff = values - values[i]
        total += w[i] * float(np.dot(w, ynorm(diff) ** q))
    return total ** (1.0 / q)


def sharp_grand_truncation(op, f, alpha=None, force=False, max_points=1024):
    """Exact ``M^#_{T,alpha} f`` by a sweep over every ball.

    For a center ``c`` the pair of member sets ``(B(c,rho), B(c,alpha rho))``
    changes only when ``rho`` crosses a distance from ``c`` or a distance
    divided by ``alpha``, so evaluating at those radii covers every ball.
    """
    space = op.space
    if space.n > max_points and not force:
        raise CostGuardError(
            f"{space.n} points exceeds the brute-force guard of {max_points}; pass force=True"
        )
    alpha = op.alpha if alpha is None else float(alpha)
    F = as_values(f)
    d = space.distances
    out = np.zeros(space.n)
    for c in range(space.n):
        row = d[c]
        pos = np.unique(row[row > 0])
        radii = np.unique(np.concatenate([pos, pos / alpha]))
        radii = radii[alpha * radii <= row.max()]
        if len(radii) == 0:
            continue
        outside = row[None, :] >= alpha * radii[:, None]
        G = op.apply_many(outside[:, :, None] * F[None])
        for i, rho in enumerate(radii):
            inside = row < rho
            osc = oscillation(G[i][inside], op.ynorm)
            if osc > 0:
                out[inside] = np.maximum(out[inside], osc)
    return out


def _local_sweep(op, f, system, Q, reducer, cache=None):
    cache = cache or LocalCache(op, f, system)
    out = np.zeros(system.space.n)
    TQ = cache(Q)
    pos = np.full(system.space.n, -1)
    pos[Q.members] = np.arange(len(Q.members))
    for sub in system.descendants(Q)[1:]:
        diff = TQ[pos[sub.members]] - cache(sub)
        val = reducer(diff, sub)
        if val > 0:
            out[sub.members] = np.maximum(out[sub.members], val)
    return out


def localized_sharp_truncation(op, f, system, Q, cache=None):
    """``M^#_{T,Q} f``: sup over ``Q' in D(Q)`` of the oscillation of ``T_Q f - T_{Q'} f`` on ``Q'``."""
    return _local_sweep(op, f, system, Q, lambda diff, sub: oscillation(diff, op.ynorm), cache)


def localized_q_truncation(op, f, system, Q, q, cache=None):
    """As :func:`localized_sharp_truncation` with the q-th power double average."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    mu = system.space.measure
    return _local_sweep(
        op, f, system, Q, lambda diff, sub: q_oscillation(diff, mu[sub.members], q, op.ynorm), cache
    )
