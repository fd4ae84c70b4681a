"""Sparse families: the stopping-time construction, sparse operators and forms.

The construction follows the level-set recursion: for a selected cube ``P``
the exceptional set ``Omega_P`` collects points where ``||T_P f||`` or the
localized sharp truncation exceed ``lambda C_T <||f||>_{p0, alpha P}``; the
stopping cubes are the maximal dyadic subcubes where ``Omega_P`` has density
above ``1/c2``, and the recursion continues inside them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic import containing_cube, covering_partition
from .maximal import LocalCache, as_values, localized_q_truncation, localized_sharp_truncation
from .operators import RademacherOperator, rademacher_cache
from .space import pointwise_norms
from .weights import weak_lp_norm, weighted_lp_norm


class ConstructionError(RuntimeError):
    pass


@dataclass
class ConstructionParams:
    """Parameters of the stopping-time construction.

    ``lam=None`` means ``4 c1 c2``.  ``variant`` is ``standard``,
    ``fractional`` (thresholds carry ``mu(alpha P)^(1/p0 - 1/q0)``) or
    ``form`` (the q0-double-average truncation replaces the sup).
    """

    p0: float = 1.0
    r: float = 1.0
    alpha: float | None = None
    C_T: float | None = None
    lam: float | None = None
    q0: float | None = None
    variant: str = "standard"
    adaptive: bool = True
    max_doublings: int = 80
    r_x: float = 2.0

    def __post_init__(self):
        if self.p0 < 1 or self.r <= 0:
            raise ValueError("need p0 >= 1 and r > 0")
        if self.alpha is not None and self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.variant not in ("standard", "fractional", "form"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "standard" and self.q0 is None:
            raise ValueError(f"variant {self.variant!r} needs q0")

    def to_json(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class SparseEntry:
    cube: object
    witness: np.ndarray
    average_set: np.ndarray
    dilate_mass: float
    system: int = 0


@dataclass(eq=False)
class SparseFamily:
    """Indexed family of cubes with disjoint witness sets.

    Entries form a multiset: in ``upgraded`` mode two cubes may map to the
    same containing cube and both entries are kept.
    """

    space: object
    entries: list = field(default_factory=list)
    eta: float = 0.5
    averages_mode: str = "dilated"
    degenerate: bool = False

    def __len__(self):
        return len(self.entries)

    @property
    def cubes(self):
        return [e.cube for e in self.entries]

    def to_json(self):
        return {
            "eta": self.eta,
            "mode": self.averages_mode,
            "degenerate": self.degenerate,
            "entries": [
                {"cube": e.cube.id, "system": e.system, "generation": e.cube.generation,
                 "witness": e.witness.tolist()}
                for e in self.entries
            ],
        }


@dataclass
class ConstructionTrace:
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    @property
    def lam_max(self):
        return max((r["lam"] for r in self.records), default=0.0)

    def to_jsonl(self):
        import json

        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records)


def _avg_p(nf, members, mu, p):
    m = mu[members]
    return float((np.dot(nf[members] ** p, m) / m.sum()) ** (1.0 / p))


def _cache_for(op, f, system):
    if isinstance(op, RademacherOperator):
        return rademacher_cache(op, f)
    return LocalCache(op, f, system)


def stopping_cubes(system, P, omega, c2):
    """Maximal strict subcubes of ``P`` where ``omega`` has density above ``1/c2``."""
    mu = system.space.measure
    out = []
    stack = list(P.children)
    while stack:
        q = system.cubes[stack.pop()]
        hit = omega[q.members]
        if not hit.any():
            continue
        frac = mu[q.members][hit].sum() / mu[q.members].sum()
        if frac > 1.0 / c2:
            out.append(q)
        else:
            stack.extend(q.children)
    return sorted(out, key=lambda q: q.id)


def construct_sparse_family(op, f, system, Q=None, params=None):
    """Stopping-time construction of a 1/2-sparse family inside ``Q``.

    Returns ``(family, trace)``.  With ``params.adaptive`` a cube whose
    exceptional set is too large gets ``lambda`` doubled until
    ``mu(Omega_P) <= min(2 c1 / lambda_0, 1 / (2 c2)) mu(P)``; otherwise a
    violation raises :class:`ConstructionError`.
    """
    params = params or ConstructionParams()
    if params.C_T is None:
        raise ValueError("params.C_T is required; see estimate_C_T")
    Q = Q if Q is not None else system.root
    if Q is None:
        raise ValueError("system has no root; pass Q")
    alpha = params.alpha or op.alpha
    space = system.space
    mu = space.measure
    c1 = system.c1(alpha)
    c2 = system.c2()
    lam0 = params.lam if params.lam is not None else 4 * c1 * c2
    if lam0 <= 2 * c1:
        raise ValueError(f"lambda must exceed 2 c1 = {2 * c1}")
    target = min(2 * c1 / lam0, 1.0 / (2 * c2))
    F = as_values(f)
    nf = pointwise_norms(F, params.r_x)
    cache = _cache_for(op, F, system)
    family = SparseFamily(space, eta=0.5)
    trace = ConstructionTrace()
    queue = [Q]
    while queue:
        P = queue.pop(0)
        ball = system.dilate(P, alpha).members
        dil_mass = float(mu[ball].sum())
        level = _avg_p(nf, ball, mu, params.p0)
        if params.variant == "fractional":
            level *= dil_mass ** (1.0 / params.p0 - 1.0 / params.q0)
        TP = op.ynorm(cache(P))
        if params.variant == "form":
            sharp = localized_q_truncation(op, F, system, P, params.q0, cache)[P.members]
        else:
            sharp = localized_sharp_truncation(op, F, system, P, cache)[P.members]
        mP = mu[P.members].sum()
        lam, doublings = lam0, 0
        while True:
            thr = lam * params.C_T * level
            local = (TP > thr) | (sharp > thr)
            ratio = float(mu[P.members][local].sum() / mP)
            if ratio <= target:
                break
            if not params.adaptive:
                raise ConstructionError(
                    f"cube {P.id}: mu(Omega)/mu(P) = {ratio:.4g} exceeds {target:.4g}; C_T is too small"
                )
            if doublings >= params.max_doublings:
                raise ConstructionError(f"cube {P.id}: lambda doubling did not converge")
            lam *= 2
            doublings += 1
        omega = np.zeros(space.n, dtype=bool)
        omega[P.members[local]] = True
        stops = stopping_cubes(system, P, omega, c2)
        covered = np.zeros(space.n, dtype=bool)
        for q in stops:
            covered[q.members] = True
        witness = P.members[~covered[P.members]]
        stop_mass = float(sum(mu[q.members].sum() for q in stops))
        dens = [float(mu[q.members][omega[q.members]].sum() / mu[q.members].sum()) for q in stops]
        trace.append({
            "cube": P.id,
            "generation": P.generation,
            "omega_ratio": ratio,
            "stop_ratio": stop_mass / mP,
            "lam": lam,
            "doublings": doublings,
            "n_stops": len(stops),
            "density_min": min(dens) if dens else None,
            "density_max": max(dens) if dens else None,
            "uncovered": int(np.sum(omega & ~covered)),
        })
        family.entries.append(SparseEntry(P, witness, ball, dil_mass))
        queue.extend(stops)
    return family, trace


def construct_global_sparse(op, f, adjacent, params=None, mode="dilated"):
    """Covering by cubes whose dilates contain ``supp f``, then the local construction.

    ``mode="upgraded"`` replaces every ``alpha P`` by the containing cube
    ``P'`` from the adjacent systems; sparsity drops to ``1/(2 c1')`` with
    ``c1' = max mu(P') / mu(P)``.
    """
    params = params or ConstructionParams()
    system = adjacent.systems[0]
    space = system.space
    alpha = params.alpha or op.alpha
    nf = pointwise_norms(as_values(f), params.r_x)
    supp = np.flatnonzero(nf > 0)
    fam = SparseFamily(space, eta=0.5, averages_mode=mode)
    trace = ConstructionTrace()
    info = {"degenerate": False, "roots": [], "contains_E": True}
    if len(supp) == 0:
        return fam, trace, info
    E = supp
    if len(E) == 1:
        d = space.distances[E[0]].copy()
        d[E[0]] = np.inf
        E = np.array([E[0], int(np.argmin(d))])
    cov = covering_partition(system, E, alpha)
    info.update(degenerate=cov.degenerate, roots=[q.id for q in cov.cubes], contains_E=cov.contains_E)
    fam.degenerate = cov.degenerate
    for Q in cov.cubes:
        sub, tr = construct_sparse_family(op, f, system, Q, params)
        fam.entries.extend(sub.entries)
        trace.records.extend(tr.records)
    if mode == "upgraded":
        fam, ratios = upgrade_family(fam, adjacent, alpha, as_values(f), params)
        info["upgrade"] = ratios
    elif mode != "dilated":
        raise ValueError(f"unknown mode {mode!r}")
    return fam, trace, info


def upgrade_family(family, adjacent, alpha, f, params):
    """Map each ``alpha P`` to its smallest containing cube ``P'``."""
    system = adjacent.systems[0]
    mu = system.space.measure
    nf = pointwise_norms(f, params.r_x)
    new = SparseFamily(family.space, averages_mode="upgraded", degenerate=family.degenerate)
    c1p = 1.0
    pairs = []
    for e in family.entries:
        j, Pp = containing_cube(adjacent, e.average_set)
        c1p = max(c1p, mu[Pp.members].sum() / mu[e.cube.members].sum())
        new.entries.append(SparseEntry(Pp, e.witness, Pp.members, e.dilate_mass, system=j))
        pairs.append((_avg_p(nf, e.average_set, mu, params.p0), _avg_p(nf, Pp.members, mu, params.p0)))
    new.eta = 1.0 / (2 * c1p)
    worst = max((a / b for a, b in pairs if b > 0), default=0.0)
    return new, {"c1_upgrade": c1p, "max_average_ratio": worst,
                 "average_bound_holds": bool(worst <= c1p * (1 + 1e-12))}


# --------------------------------------------------------------------------
# evaluation


def sparse_operator(family, f, p0=1.0, r=1.0, r_x=2.0):
    """``(sum_P <||f||>_{p0, avg(P)}^r 1_P)^(1/r)`` over the family's entries."""
    nf = pointwise_norms(as_values(f), r_x)
    mu = family.space.measure
    out = np.zeros(family.space.n)
    for e in family.entries:
        out[e.cube.members] += _avg_p(nf, e.average_set, mu, p0) ** r
    return out ** (1.0 / r)


def fractional_sparse_operator(family, f, p0=1.0, q0=1.0, r=1.0, r_x=2.0):
    """As :func:`sparse_operator` with the factor ``mu(alpha P)^(r/p0 - r/q0)``."""
    if q0 < p0:
        raise ValueError("need q0 >= p0")
    nf = pointwise_norms(as_values(f), r_x)
    mu = family.space.measure
    out = np.zeros(family.space.n)
    for e in family.entries:
        fac = e.dilate_mass ** (r / p0 - r / q0)
        out[e.cube.members] += fac * _avg_p(nf, e.average_set, mu, p0) ** r
    return out ** (1.0 / r)


def sparse_form(family, f, g, p0=1.0, q0=2.0, r=1.0, r_x=2.0):
    """``(sum_P mu(P) <||f||>_{p0,alpha P}^r <|g|>_{s,P}^r)^(1/r)``, ``1/s = 1/r - 1/q0``."""
    if not 0 < r < q0:
        raise ValueError("need 0 < r < q0")
    if not 1 <= p0 < q0:
        raise ValueError("need 1 <= p0 < q0")
    nf = pointwise_norms(as_values(f), r_x)
    ag = np.abs(np.asarray(g, dtype=float)).reshape(-1)
    s = 1.0 / (1.0 / r - 1.0 / q0)
    mu = family.space.measure
    total = 0.0
    for e in family.entries:
        P = e.cube.members
        total += mu[P].sum() * _avg_p(nf, e.average_set, mu, p0) ** r * _avg_p(ag, P, mu, s) ** r
    return float(total ** (1.0 / r))


def verify_sparsity(family):
    """``(disjoint, min mu(E_P)/mu(P), overlapping pair or None)``."""
    mu = family.space.measure
    owner = np.full(family.space.n, -1)
    clash = None
    worst = 1.0
    for i, e in enumerate(family.entries):
        w = e.witness
        if clash is None:
            prev = owner[w]
            if np.any(prev >= 0):
                clash = (int(prev[prev >= 0][0]), i)
        owner[w] = i
        if not np.all(np.isin(w, e.cube.members)):
            clash = clash or (i, i)
        worst = min(worst, float(mu[w].sum() / mu[e.cube.members].sum()))
    if not family.entries:
        worst = 1.0
    return clash is None, worst, clash


def domination_report(Tf, sparse_values, tol=1e-12):
    """Pointwise ratios ``||Tf(s)|| / sparse(s)``."""
    num = np.asarray(Tf, dtype=float).reshape(len(sparse_values), -1)
    num = np.sqrt(np.sum(num**2, axis=1)) if num.shape[1] > 1 else np.abs(num[:, 0])
    den = np.asarray(sparse_values, dtype=float)
    pos = den > 0
    ratios = num[pos] / den[pos]
    bad = int(np.sum((~pos) & (num > tol)))
    return {
        "max_ratio": float(ratios.max()) if len(ratios) else 0.0,
        "median_ratio": float(np.median(ratios)) if len(ratios) else 0.0,
        "q90_ratio": float(np.quantile(ratios, 0.9)) if len(ratios) else 0.0,
        "uncovered": bad,
        "points": int(pos.sum()),
    }


# --------------------------------------------------------------------------
# constants


def function_battery(space, system, m=1, trials=32, seed=0):
    """Deterministic test functions: point masses, cube indicators, random fields."""
    rng = np.random.default_rng(seed)
    fns = []
    n_point = trials // 4
    n_cube = trials // 4
    for _ in range(n_point):
        f = np.zeros((space.n, m))
        f[rng.integers(space.n)] = rng.normal(size=m)
        fns.append(f)
    for _ in range(n_cube):
        q = system.cubes[rng.integers(len(system.cubes))]
        f = np.zeros((space.n, m))
        f[q.members] = rng.normal(size=m)
        fns.append(f)
    while len(fns) < trials:
        fns.append(rng.normal(size=(space.n, m)))
    return fns


def estimate_C_T(op, system, p_in=1.0, p_out=None, trials=32, seed=0, m=1, q0=None, r_x=2.0):
    """Sum of the largest weak-type ratios of ``T`` and of ``M^#_{T, root}``.

    Ratios are ``||Tf||_{L^{p_out,inf}} / ||f||_{L^{p_in}}`` over
    :func:`function_battery`; the truncation uses the q0 variant when given.
    """
    p_out = p_in if p_out is None else p_out
    space = system.space
    root = system.root or system.level(system.k_min)[0]
    best_T, best_M = 0.0, 0.0
    for f in function_battery(space, system, m, trials, seed):
        nrm = weighted_lp_norm(f, p_in, space=space, r=r_x)
        if nrm == 0:
            continue
        cache = _cache_for(op, f, system)
        Tf = op.ynorm(op.apply(f))
        best_T = max(best_T, weak_lp_norm(Tf, p_out, space=space) / nrm)
        if q0 is None:
            Ms = localized_sharp_truncation(op, f, system, root, cache)
        else:
            Ms = localized_q_truncation(op, f, system, root, q0, cache)
        best_M = max(best_M, weak_lp_norm(Ms, p_out, space=space) / nrm)
    return {"C_T": best_T + best_M, "T_weak": best_T, "sharp_weak": best_M, "trials": trials}


def chain_constant(op, f, system, family, r):
    """Smallest ``C_r`` in the localized l^r estimate along the family's chains."""
    cache = _cache_for(op, as_values(f), system)
    by_id = {e.cube.id: e.cube for e in family.entries}
    worst = 0.0
    for s in range(system.space.n):
        chain = [q for q in system.ancestors(s) if q.id in by_id]
        if not chain:
            continue
        vals = [cache(q)[np.searchsorted(q.members, s)] for q in chain]
        num = float(op.ynorm(vals[0][None])[0])
        terms = [float(op.ynorm(vals[-1][None])[0])]
        terms += [float(op.ynorm((vals[i] - vals[i + 1])[None])[0]) for i in range(len(vals) - 1)]
        den = float(np.sum(np.asarray(terms) ** r) ** (1.0 / r))
        if den > 0:
            worst = max(worst, num / den)
        elif num > 1e-12:
            return np.inf
    return max(worst, 1.0) if worst > 0 else 1.0


def chain_family(system, point):
    """The ancestors of ``point`` as a sparse family (witness = cube minus next ancestor)."""
    anc = system.ancestors(point)
    space = system.space
    fam = SparseFamily(space, eta=0.5)
    for i, q in enumerate(anc):
        if i + 1 < len(anc):
            wit = np.setdiff1d(q.members, anc[i + 1].members)
        else:
            wit = q.members
        fam.entries.append(SparseEntry(q, wit, q.members, float(space.measure[q.members].sum())))
    _, eta, _ = verify_sparsity(fam)
    fam.eta = eta
    return fam


def sparse_matrix(family, p0=1.0):
    """For ``p0 = 1``: the (entries, N) matrix of averaging functionals."""
    if p0 != 1:
        raise ValueError("averaging matrix needs p0 = 1")
    mu = family.space.measure
    A = np.zeros((len(family.entries), family.space.n))
    for i, e in enumerate(family.entries):
        A[i, e.average_set] = mu[e.average_set] / mu[e.average_set].sum()
    return A


def sparse_weighted_norm(family, w, r=1.0):
    """Exact ``||A||_{L^2(w) -> L^2(w)}`` of the sparse operator with ``p0 = 1``.

    ``r = 1``: the operator is ``|f| -> M |f|`` with a nonnegative matrix,
    so the norm is a spectral norm.  ``r = 2``: ``||Af||^2 = sum_P w(P)
    <|f|>_P^2`` is the squared norm of a nonnegative linear map.
    """
    space = family.space
    mu = space.measure
    wv = getattr(w, "values", w)
    A = sparse_matrix(family)
    inv = 1.0 / np.sqrt(wv * mu)
    if r == 1:
        Ind = np.zeros((space.n, len(family.entries)))
        for i, e in enumerate(family.entries):
            Ind[e.cube.members, i] = 1.0
        M = Ind @ A
        B = np.sqrt(wv * mu)[:, None] * M * inv[None, :]
    elif r == 2:
        wP = np.array([np.dot(wv[e.cube.members], mu[e.cube.members]) for e in family.entries])
        B = np.sqrt(wP)[:, None] * A * inv[None, :]
    else:
        raise ValueError("exact norms only for r in {1, 2}")
    return float(np.linalg.norm(B, 2))
