"""Dyadic systems on grid spaces.

Cubes are products of half-open index ranges.  Generation ``k`` halves the
slowest axis (smallest ``a_j``) ``k`` times and axis ``j`` roughly
``k * a_j / min(a)`` times, capped at the grid resolution, which is the
anisotropic formula ``prod 2^(-a_j n)([0,1) + m_j)`` in grid units.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .space import BallFamily, Ball, Space


@dataclass(eq=False)
class Cube:
    id: int
    generation: int
    center: int
    members: np.ndarray
    parent: int | None = None
    children: list = field(default_factory=list)
    scale: float = 0.0

    def __len__(self):
        return len(self.members)

    def to_json(self):
        return {
            "id": self.id,
            "generation": self.generation,
            "center": self.center,
            "members": self.members.tolist(),
            "parent": self.parent,
            "children": list(self.children),
        }


@dataclass(eq=False)
class DyadicSystem:
    """Generations ``k_min..k_max`` of nested partitions of a space.

    ``labels[k - k_min, s]`` is the id of the generation-``k`` cube that
    contains point ``s``.
    """

    space: Space
    k_min: int
    k_max: int
    delta: float
    c0: float
    C0: float
    cubes: list
    labels: np.ndarray
    shift: tuple = ()

    @property
    def n_levels(self):
        return self.k_max - self.k_min + 1

    def level(self, k):
        return [c for c in self.cubes if c.generation == k]

    def cube_at(self, point, k):
        return self.cubes[self.labels[k - self.k_min, point]]

    def ancestors(self, point):
        """Cubes containing ``point``, coarse to fine."""
        return [self.cubes[i] for i in self.labels[:, point]]

    @property
    def root(self):
        top = self.level(self.k_min)
        return top[0] if len(top) == 1 else None

    def descendants(self, cube):
        """``cube`` and every cube below it, breadth first."""
        out = [cube]
        i = 0
        while i < len(out):
            out.extend(self.cubes[j] for j in out[i].children)
            i += 1
        return out

    def dilate(self, cube, alpha):
        return dilate(self, cube, alpha)

    def c1(self, alpha):
        """``max mu(alpha Q) / mu(Q)`` over all cubes (dilates clipped to the grid)."""
        mu = self.space.measure
        best = 1.0
        for q in self.cubes:
            ball = self.dilate(q, alpha)
            best = max(best, mu[ball.members].sum() / mu[q.members].sum())
        return float(best)

    def c2(self):
        """``2 * max mu(parent) / mu(child)``."""
        mu = self.space.measure
        best = 1.0
        for q in self.cubes:
            if q.parent is not None:
                best = max(best, mu[self.cubes[q.parent].members].sum() / mu[q.members].sum())
        return 2.0 * float(best)

    def to_json(self):
        return {
            "k_min": self.k_min,
            "k_max": self.k_max,
            "delta": self.delta,
            "c0": self.c0,
            "C0": self.C0,
            "shift": list(self.shift),
            "cubes": [c.to_json() for c in self.cubes],
        }


def dilate(system, cube, alpha):
    """``alpha Q = B(z, alpha C0 delta^k)``; membership is clipped to the grid."""
    if alpha < 1:
        raise ValueError("dilation factor must be >= 1")
    return system.space.ball(cube.center, alpha * cube.scale)


def _halvings(space, k):
    a = space.anisotropy
    res = np.log2(np.asarray(space.shape)).astype(int)
    h = np.floor(k * a / a.min() + 1e-9).astype(int)
    return np.minimum(h, res)


def _build(space, k_min, k_max, offsets):
    if k_min > k_max:
        raise ValueError("k_min must not exceed k_max")
    res = np.log2(np.asarray(space.shape)).astype(int)
    if k_min < 0 or k_max > res.max():
        raise ValueError(
            f"generation range [{k_min}, {k_max}] leaves the grid resolution 0..{res.max()}; "
            "finer generations would contain empty cubes"
        )
    delta = 2.0 ** (-1.0 / space.anisotropy.min())
    gi = space.grid_index
    shape = np.asarray(space.shape)
    offsets = np.asarray(offsets, dtype=int)
    cubes = []
    labels = np.empty((k_max - k_min + 1, space.n), dtype=np.int64)
    d = space.distances
    for k in range(k_min, k_max + 1):
        side = shape // 2 ** _halvings(space, k)
        box = np.floor_divide(gi - offsets, side)
        keys, inverse = np.unique(box, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(keys) + 1))
        base = len(cubes)
        for j in range(len(keys)):
            members = np.sort(order[bounds[j] : bounds[j + 1]])
            lo = gi[members].min(axis=0)
            hi = gi[members].max(axis=0)
            mid = lo + (hi - lo + 1) // 2
            center = int(np.ravel_multi_index(tuple(mid), space.shape))
            cubes.append(Cube(base + j, k, center, members))
        labels[k - k_min] = base + inverse
    for q in cubes:
        if q.generation > k_min:
            parent = cubes[labels[q.generation - 1 - k_min, q.members[0]]]
            q.parent = parent.id
            parent.children.append(q.id)
    # c0, C0 from the geometry of every cube
    outer, inner = 0.0, np.inf
    for q in cubes:
        scale = delta**q.generation
        row = d[q.center]
        outer = max(outer, row[q.members].max() / scale)
        mask = np.ones(space.n, dtype=bool)
        mask[q.members] = False
        if mask.any():
            inner = min(inner, row[mask].min() / scale)
    C0 = outer * (1 + 1e-9) if outer > 0 else 1.0
    c0 = min(inner * (1 - 1e-9), C0) if np.isfinite(inner) else C0
    for q in cubes:
        q.scale = C0 * delta**q.generation
    return DyadicSystem(space, k_min, k_max, delta, c0, C0, cubes, labels, tuple(offsets.tolist()))


def build_anisotropic_system(space, k_min=0, k_max=None):
    """The standard (unshifted) dyadic system of a grid space."""
    if k_max is None:
        k_max = int(np.log2(max(space.shape)))
    return _build(space, k_min, k_max, np.zeros(space.dim, dtype=int))


def verify_axioms(system):
    """Exhaustive check of partition, nesting and the two-ball sandwich.

    Reads the cube member lists directly (not the label table), so a system
    whose members were edited after construction is judged on its edits.
    """
    space = system.space
    n = space.n
    report = {"partition": True, "nesting": True, "balls": True, "witness": None}
    owner = {}
    for k in range(system.k_min, system.k_max + 1):
        cubes = system.level(k)
        allm = np.concatenate([c.members for c in cubes]) if cubes else np.array([], int)
        counts = np.bincount(allm, minlength=n)
        if not np.all(counts == 1):
            bad = int(np.flatnonzero(counts != 1)[0])
            report["partition"] = False
            report["witness"] = report["witness"] or {
                "property": "partition",
                "generation": k,
                "point": bad,
                "count": int(counts[bad]),
            }
        own = np.full(n, -1)
        for c in cubes:
            own[c.members] = c.id
        owner[k] = own
    levels = list(range(system.k_min, system.k_max + 1))
    for i, k in enumerate(levels):
        for c in system.level(k):
            for l in levels[:i]:
                ids = np.unique(owner[l][c.members])
                if len(ids) != 1:
                    report["nesting"] = False
                    report["witness"] = report["witness"] or {
                        "property": "nesting",
                        "cube": c.id,
                        "generation": l,
                        "meets": ids.tolist(),
                    }
                    break
            if c.children:
                kids = np.sort(np.concatenate([system.cubes[j].members for j in c.children]))
                if not np.array_equal(kids, np.sort(c.members)):
                    report["nesting"] = False
                    report["witness"] = report["witness"] or {
                        "property": "nesting",
                        "cube": c.id,
                        "children_mismatch": True,
                    }
    d = space.distances
    for c in system.cubes:
        row = d[c.center]
        r = system.delta**c.generation
        inside = np.zeros(n, dtype=bool)
        inside[c.members] = True
        ok = inside[c.center]
        ok &= bool(np.all(inside[row < system.c0 * r]))
        ok &= bool(np.all(row[c.members] < system.C0 * r))
        if not ok:
            report["balls"] = False
            report["witness"] = report["witness"] or {"property": "balls", "cube": c.id}
    report["ok"] = report["partition"] and report["nesting"] and report["balls"]
    return report


@dataclass(eq=False)
class AdjacentSystems:
    systems: list
    gamma: float
    gamma_diameter: float = 0.0
    witness: dict | None = None

    @property
    def space(self):
        return self.systems[0].space


def _deepest_common(system, members):
    lab = system.labels[:, members]
    same = np.all(lab == lab[:, :1], axis=1)
    if not same.any():
        return None
    # nesting makes ``same`` a prefix of True values
    i = int(np.flatnonzero(same)[-1])
    return system.cubes[lab[i, 0]]


def containing_cube(adjacent, ball):
    """Smallest-scale cube over all systems that contains ``ball``.

    Returns ``(system_index, cube)``; ties go to the lower system index and
    then the lower cube id.
    """
    members = ball.members if isinstance(ball, Ball) else np.asarray(ball)
    systems = adjacent.systems if isinstance(adjacent, AdjacentSystems) else adjacent
    best = None
    for j, sys_ in enumerate(systems):
        q = _deepest_common(sys_, members)
        if q is None:
            continue
        key = (q.scale, j, q.id)
        if best is None or key < best[0]:
            best = (key, j, q)
    if best is None:
        raise ValueError("no cube in any system contains the ball")
    return best[1], best[2]


def build_shifted_systems(space, k_min=0, k_max=None, check=True):
    """Base system plus its translates by thirds of the domain per axis.

    A single translation of a nested system is again nested, and a shift of
    ``n/3`` cells is ``1/3`` or ``2/3`` of the side at every coarser
    generation, which is the classical one-third trick.  ``gamma`` is the
    worst ``C0 delta^k / radius`` over all enumerated balls.
    """
    if k_max is None:
        k_max = int(np.log2(max(space.shape)))
    thirds = [0.0, 1.0 / 3.0, 2.0 / 3.0]
    systems = []
    for t in itertools.product(thirds, repeat=space.dim):
        offsets = [int(round(tj * nj)) for tj, nj in zip(t, space.shape)]
        systems.append(_build(space, k_min, k_max, offsets))
    adj = AdjacentSystems(systems, gamma=np.inf)
    if check:
        gamma, gamma_diam, witness = containment_constant(adj)
        adj.gamma, adj.gamma_diameter, adj.witness = gamma, gamma_diam, witness
    return adj


def containment_constant(adjacent):
    """Exhaustive containment scan over every ball member set.

    Returns ``(gamma, gamma_diameter, witness)`` where ``gamma`` bounds
    ``C0 delta^k / radius`` and ``gamma_diameter`` bounds ``diam(Q) / radius``
    for the chosen cube.  The radius of a member set is the largest radius
    that realizes it (the next distance from the center).
    """
    space = adjacent.space
    fam = BallFamily.build(space)
    d = space.distances
    seen = {}
    for c, k in fam.iter_balls():
        members = np.sort(fam.order[c, :k])
        key = members.tobytes()
        radius = fam.radius(c, k)
        # the same member set realized from another center: keep the smallest radius
        if key in seen and seen[key][1] <= radius:
            continue
        seen[key] = (members, radius, c)
    gamma, gamma_diam, witness = 0.0, 0.0, None
    for members, radius, c in seen.values():
        j, q = containing_cube(adjacent, members)
        ratio = q.scale / radius
        diam = d[np.ix_(q.members, q.members)].max()
        gamma_diam = max(gamma_diam, diam / radius)
        if ratio > gamma:
            gamma = ratio
            witness = {"center": int(c), "radius": radius, "system": j, "cube": q.id}
    return float(gamma), float(gamma_diam), witness


@dataclass
class Covering:
    cubes: list
    degenerate: bool
    contains_E: bool
    generations: np.ndarray


def covering_partition(system, E, alpha):
    """Partition of the space by cubes whose ``alpha``-dilates contain ``E``.

    For each point ``s`` take the coarsest generation ``k_s`` at which ``E``
    escapes the ``2 c_d``-dilate of the cube containing ``s``.  If that is
    already the coarsest available generation the argument through
    generation ``k_s - 1`` is unavailable, the run is flagged degenerate and
    the root (or the coarsest level if there is no root) is returned.
    """
    space = system.space
    c_d = space.c_d
    if alpha < 3 * c_d**2 / system.delta - 1e-12:
        raise ValueError(f"alpha must be >= 3 c_d^2 / delta = {3 * c_d**2 / system.delta}")
    E = np.unique(np.asarray(E, dtype=int))
    if len(E) < 2:
        raise ValueError("E needs at least two distinct points")
    d = space.distances
    far = np.array([d[q.center, E].max() for q in system.cubes])
    scale = np.array([q.scale for q in system.cubes])
    escapes = far >= 2 * c_d * scale  # E not inside the open ball B(z, 2 c_d C0 delta^k)
    esc = escapes[system.labels]  # (levels, N)
    any_esc = esc.any(axis=0)
    first = np.where(any_esc, np.argmax(esc, axis=0), system.n_levels - 1)
    degenerate = bool(np.any(any_esc & (first == 0)))
    if degenerate:
        root = system.root
        cubes = [root] if root is not None else system.level(system.k_min)
        gens = np.full(space.n, system.k_min)
    else:
        ids = system.labels[first, np.arange(space.n)]
        cubes = [system.cubes[i] for i in np.unique(ids)]
        gens = first + system.k_min
    contains = all(far[q.id] < alpha * q.scale for q in cubes)
    return Covering(cubes, degenerate, bool(contains), gens)


def is_partition(space, cubes):
    counts = np.bincount(np.concatenate([q.members for q in cubes]), minlength=space.n)
    return bool(np.all(counts == 1))
