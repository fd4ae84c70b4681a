"""Finite grid spaces of homogeneous type.

Points are cell centers of a uniform grid, the measure of a point is its
cell volume and the quasi-metric is the anisotropic quasi-norm of the
coordinate difference.  Everything that the continuous theory writes as a
supremum over balls becomes a maximum over the finitely many member sets
that balls can have, see :class:`BallFamily`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def anisotropic_norm(v, a):
    """Quasi-norm ``(sum |v_j|^(2/a_j))^(1/2)`` over the last axis."""
    v = np.abs(np.asarray(v, dtype=float))
    a = np.asarray(a, dtype=float)
    return np.sqrt(np.sum(v ** (2.0 / a), axis=-1))


@dataclass(frozen=True, eq=False)
class Ball:
    center: int
    radius: float
    members: np.ndarray

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True, eq=False)
class Space:
    """Uniform grid of cell centers with an anisotropic quasi-metric.

    Attributes
    ----------
    points : (N, d) array of cell-center coordinates, C order over the grid.
    measure : (N,) cell volumes.
    anisotropy : (d,) exponents ``a_j``.
    shape : points per axis.
    lower, upper : domain corners; the domain is ``[lower, upper)``.
    periodic : wrap coordinate differences on the torus.
    c_d : quasi-triangle constant.
    """

    points: np.ndarray
    measure: np.ndarray
    anisotropy: np.ndarray
    shape: tuple
    lower: np.ndarray
    upper: np.ndarray
    periodic: bool = False
    c_d: float = 1.0
    kind: str = "grid"

    @property
    def n(self):
        return len(self.measure)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def spacing(self):
        return (self.upper - self.lower) / np.asarray(self.shape)

    @cached_property
    def grid_index(self):
        """(N, d) integer grid coordinates of every point."""
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        return np.ascontiguousarray(idx)

    def _difference(self, x, y):
        diff = x - y
        if self.periodic:
            span = self.upper - self.lower
            diff = (diff + span / 2) % span - span / 2
        return diff

    @cached_property
    def distances(self):
        """Full (N, N) quasi-distance matrix."""
        diff = self._difference(self.points[:, None, :], self.points[None, :, :])
        d = anisotropic_norm(diff, self.anisotropy)
        np.fill_diagonal(d, 0.0)
        return d

    def distance_to(self, x):
        """Quasi-distance from every point to the coordinates ``x``."""
        x = np.broadcast_to(np.asarray(x, dtype=float), (self.dim,))
        return anisotropic_norm(self._difference(self.points, x), self.anisotropy)

    def ball(self, center, radius):
        members = np.flatnonzero(self.distances[center] < radius)
        return Ball(int(center), float(radius), members)

    def mass(self, members):
        return float(self.measure[members].sum())

    @property
    def total_measure(self):
        return float(self.measure.sum())

    def half_cell_distance(self):
        """Smallest distance of a half-cell step along one axis."""
        return float(min((h / 2) ** (1.0 / a) for h, a in zip(self.spacing, self.anisotropy)))

    def to_json(self):
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "anisotropy": self.anisotropy.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "periodic": self.periodic,
            "c_d": self.c_d,
        }


@dataclass(eq=False)
class GridFunction:
    """Per-point vectors in ``X = l^r_m``."""

    space: Space
    values: np.ndarray
    r: float = 2.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.space.n:
            raise ValueError(f"expected {self.space.n} value vectors, got {v.shape[0]}")
        self.values = v

    @property
    def m(self):
        return self.values.shape[1]

    def norms(self):
        return lp_norm(self.values, self.r)


def lp_norm(values, r):
    """l^r norm over the last axis (``r = inf`` allowed)."""
    v = np.abs(values)
    if np.isinf(r):
        return v.max(axis=-1)
    if r == 2:
        return np.sqrt(np.sum(v * v, axis=-1))
    if r == 1:
        return v.sum(axis=-1)
    return np.sum(v**r, axis=-1) ** (1.0 / r)


def pointwise_norms(f, r=2.0):
    """Norms of a GridFunction or array of shape (N,) or (N, m)."""
    if isinstance(f, GridFunction):
        return f.norms()
    f = np.asarray(f)
    if f.ndim == 1:
        return np.abs(f)
    return lp_norm(f, r)


def _exact_quasi_constant(d):
    # max over (s, u, t) with s != t of d(s,t) / (d(s,u) + d(u,t))
    denom = d[:, :, None] + d[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, d[:, None, :] / denom, 0.0)
    return float(max(1.0, ratio.max()))


def make_grid_space(d, a=None, n=8, extent=1.0, periodic=False):
    """Uniform grid of ``n**d`` cell centers on ``[-extent, extent)^d``."""
    if a is None:
        a = np.ones(d)
    a = np.asarray(a, dtype=float).reshape(-1)
    if len(a) != d:
        raise ValueError("anisotropy length must equal the dimension")
    if np.any(a <= 0):
        raise ValueError("anisotropy entries must be positive")
    n = int(n)
    if n < 2 or n & (n - 1):
        raise ValueError("points per axis must be a power of two >= 2")
    lower = np.full(d, -float(extent))
    upper = np.full(d, float(extent))
    return _grid(a, (n,) * d, lower, upper, periodic, kind="grid")


def make_interval_space(depth):
    """``2**depth`` cells of ``[0, 1)`` with the Euclidean metric."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n = 2**depth
    return _grid(np.ones(1), (n,), np.zeros(1), np.ones(1), False, kind="interval")


def _grid(a, shape, lower, upper, periodic, kind):
    h = (upper - lower) / np.asarray(shape)
    axes = [lower[j] + (np.arange(shape[j]) + 0.5) * h[j] for j in range(len(shape))]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    measure = np.full(len(points), float(np.prod(h)))
    space = Space(points, measure, a, tuple(shape), lower, upper, periodic, 1.0, kind)
    if kind == "interval":
        return space
    if len(points) <= 64:
        c_d = _exact_quasi_constant(space.distances)
    else:
        c_d = max(1.0, 2.0 ** (1.0 / a.min() - 1.0))
    object.__setattr__(space, "c_d", c_d)
    return space


def quasi_triangle_violation(space, samples=100_000, seed=0):
    """Largest ``d(s,t) / (c_d (d(s,u) + d(u,t)))`` over triples.

    Exhaustive for at most 64 points, otherwise sampled.  A value above 1
    means the stored ``c_d`` is wrong.
    """
    d = space.distances
    if space.n <= 64:
        return _exact_quasi_constant(d) / space.c_d
    rng = np.random.default_rng(seed)
    s, u, t = rng.integers(0, space.n, size=(3, samples))
    keep = s != t
    s, u, t = s[keep], u[keep], t[keep]
    return float(np.max(d[s, t] / (d[s, u] + d[u, t])) / space.c_d)


def doubling_constant(space, radius_samples=None, closed=False):
    """``max mu(B(s, 2 rho)) / mu(B(s, rho))``.

    By default the maximum is exact: the ratio is piecewise constant in
    ``rho`` and changes only at pairwise distances and their halves, so those
    are the radii scanned for every center.  With ``closed=True`` the outer
    ball is the closed ball ``{d <= 2 rho}``; that variant is the constant
    that appears when annuli ``(R, 2R]`` are averaged over balls.
    """
    d = space.distances
    mu = space.measure
    if radius_samples is not None:
        best = 0.0
        for center, rho in radius_samples:
            inner = mu[d[center] < rho].sum()
            outer = mu[d[center] <= 2 * rho].sum() if closed else mu[d[center] < 2 * rho].sum()
            if inner <= 0:
                raise ValueError("ball with zero measure; metric is broken")
            best = max(best, outer / inner)
        return float(best)
    best = 1.0
    for c in range(space.n):
        order = np.argsort(d[c], kind="stable")
        ds = d[c, order]
        cum = np.concatenate([[0.0], np.cumsum(mu[order])])
        pos = ds[ds > 0]
        radii = np.unique(np.concatenate([pos, pos / 2]))
        inner = cum[np.searchsorted(ds, radii, side="left")]
        side = "right" if closed else "left"
        outer = cum[np.searchsorted(ds, 2 * radii, side=side)]
        best = max(best, float(np.max(outer / inner)))
    return best


@dataclass(frozen=True, eq=False)
class BallFamily:
    """All member sets of balls, stored as prefixes of distance orderings.

    Ball ``(c, k)`` is the ``k`` nearest points to ``c``; only prefix lengths
    that do not split a tie are valid.  Averages over every ball and the
    pointwise maximum over balls containing a point are computed with prefix
    sums in O(N^2).
    """

    space: Space
    order: np.ndarray
    sorted_dist: np.ndarray
    rank: np.ndarray
    valid: np.ndarray

    @classmethod
    def build(cls, space):
        d = space.distances
        order = np.argsort(d, axis=1, kind="stable")
        sd = np.take_along_axis(d, order, axis=1)
        n = space.n
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(n)[None, :].repeat(n, 0), axis=1)
        valid = np.zeros((n, n + 1), dtype=bool)
        valid[:, n] = True
        valid[:, 1:n] = sd[:, 1:] > sd[:, :-1]
        return cls(space, order, sd, rank, valid)

    def prefix_sums(self, values):
        """(N, N+1) sums of ``values * mu`` over every prefix."""
        w = values[self.order] * self.space.measure[self.order]
        out = np.zeros((self.space.n, self.space.n + 1))
        np.cumsum(w, axis=1, out=out[:, 1:])
        return out

    def averages(self, values):
        """(N, N+1) averages over every prefix; invalid prefixes are nan."""
        num = self.prefix_sums(values)
        den = self.prefix_sums(np.ones(self.space.n))
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = num / den
        avg[~self.valid] = np.nan
        return avg

    def prefix_max(self, values):
        """(N, N+1) maxima over every prefix; invalid prefixes are nan."""
        v = values[self.order]
        out = np.full((self.space.n, self.space.n + 1), np.nan)
        out[:, 1:] = np.maximum.accumulate(v, axis=1)
        out[~self.valid] = np.nan
        return out

    def max_over_containing(self, ball_values):
        """Pointwise ``max`` of ``ball_values[c, k]`` over balls containing each point."""
        a = np.where(self.valid, ball_values, -np.inf)
        suffix = np.maximum.accumulate(a[:, ::-1], axis=1)[:, ::-1]
        # ball (c, k) contains t iff rank[c, t] < k
        idx = self.rank + 1
        return np.take_along_axis(suffix, idx, axis=1).max(axis=0)

    def radius(self, c, k):
        n = self.space.n
        if k < n:
            return float(self.sorted_dist[c, k])
        far = float(self.sorted_dist[c, -1])
        return 2.0 * far if far > 0 else 1.0

    def iter_balls(self):
        for c in range(self.space.n):
            for k in np.flatnonzero(self.valid[c]):
                yield c, int(k)


def enumerate_balls(space, dedupe=True):
    """Every distinct member set a ball can have, one :class:`Ball` each."""
    fam = BallFamily.build(space)
    seen = set()
    balls = []
    for c, k in fam.iter_balls():
        members = np.sort(fam.order[c, :k])
        if dedupe:
            key = members.tobytes()
            if key in seen:
                continue
            seen.add(key)
        balls.append(Ball(c, fam.radius(c, k), members))
    return balls
