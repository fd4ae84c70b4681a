"""Concrete test operators.

Kernel operators (discrete Hilbert transform, Riesz potential), Fourier
multipliers on periodic grids, and the Rademacher maximal operator with
its localization ``T_Q = M_Rad^{D(Q)}``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from math import gamma as gamma_fn

import numpy as np
from scipy import integrate

from .maximal import LocalCache, Operator, as_values
from .space import lp_norm


def _alpha_for(space, c_K=2.0):
    delta = 2.0 ** (-1.0 / space.anisotropy.min())
    return 3.0 * space.c_d**2 * max(1.0 / delta, c_K)


# --------------------------------------------------------------------------
# kernels


@dataclass(eq=False)
class DiniKernel:
    """Off-diagonal kernel values with a smoothness modulus ``omega``.

    ``omega(t) = C t^beta`` unless a callable is supplied.
    """

    values: np.ndarray
    C: float
    beta: float = 1.0
    c_K: float = 2.0
    omega: object = None
    fitted: str = "scan"

    def modulus(self, t):
        t = np.asarray(t, dtype=float)
        return self.omega(t) if self.omega is not None else self.C * t**self.beta

    @property
    def dini_norm(self):
        return dini_norm(self)

    def to_json(self):
        return {"C": self.C, "beta": self.beta, "c_K": self.c_K, "fitted": self.fitted,
                "dini_norm": dini_norm(self)}


def dini_norm(kernel):
    """``int_0^1 omega(t) dt / t``; closed form for power moduli."""
    if kernel.omega is None:
        if kernel.beta <= 0:
            raise ValueError("omega = C t^beta with beta <= 0 has a divergent Dini integral")
        return float(kernel.C / kernel.beta)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(lambda t: float(kernel.omega(t)) / t, 0.0, 1.0,
                                    epsrel=1e-8, epsabs=0.0, limit=500)
        except integrate.IntegrationWarning as exc:
            raise ValueError(f"Dini integral does not converge: {exc}") from None
    if not np.isfinite(val):
        raise ValueError("Dini integral does not converge")
    return float(val)


def _ball_masses(space):
    # mu(B(s, d(s,t))) for every pair
    d = space.distances
    mu = space.measure
    out = np.empty_like(d)
    for s in range(space.n):
        order = np.argsort(d[s], kind="stable")
        ds = d[s, order]
        cum = np.concatenate([[0.0], np.cumsum(mu[order])])
        out[s] = cum[np.searchsorted(ds, d[s], side="left")]
    return out


def kernel_smoothness_ratio(space, K, omega, c_K=2.0):
    """Largest ``|Delta K| mu(B(s, d(s,t))) / omega(ratio)`` over both slots.

    Exhaustive over triples; a value ``<= 1`` means the smoothness bounds hold
    with modulus ``omega``.  Cost O(N^3).
    """
    d = space.distances
    bm = _ball_masses(space)
    best = 0.0
    for s in range(space.n):
        dst = d[s]
        # second slot: pairs (t, t') with 0 < d(t,t') <= d(s,t)/c_K
        mask = (d > 0) & (d <= dst[:, None] / c_K) & (dst[:, None] > 0)
        if mask.any():
            ti, tj = np.nonzero(mask)
            num = np.abs(K[s, ti] - K[s, tj]) * bm[s, ti]
            best = max(best, float(np.max(num / omega(d[ti, tj] / dst[ti]))))
        # first slot: pairs (s', t) with 0 < d(s,s') <= d(s,t)/c_K
        mask = (dst[:, None] > 0) & (dst[:, None] <= dst[None, :] / c_K)
        if mask.any():
            si, ti = np.nonzero(mask)
            num = np.abs(K[s, ti] - K[si, ti]) * bm[s, ti]
            best = max(best, float(np.max(num / omega(dst[si] / dst[ti]))))
    return best


class KernelOperator(Operator):
    """``Tf(s) = sum_t K(s,t) f(t) mu(t)`` applied componentwise."""

    name = "kernel"

    def __init__(self, space, K, alpha, r_y=2.0, descriptor=None, kernel=None):
        super().__init__(space, alpha=alpha, r_y=r_y, descriptor=descriptor)
        self.K = K
        self.kernel = kernel

    def apply(self, f):
        return self.K @ (self.space.measure[:, None] * as_values(f))

    def apply_many(self, F):
        return np.matmul(self.K, self.space.measure[None, :, None] * F)

    def localized(self, f, system, cube):
        f = as_values(f)
        ball = system.dilate(cube, self.alpha).members
        mu = self.space.measure
        return self.K[np.ix_(cube.members, ball)] @ (mu[ball, None] * f[ball])

    def matrix(self):
        """Matrix acting on value vectors: ``Tf = matrix() @ f``."""
        return self.K * self.space.measure[None, :]


def discrete_hilbert(space, c_K=2.0, fit=None):
    """Kernel ``1/(s - t)`` without the diagonal term.

    The modulus is ``omega(t) = C t``.  ``C`` comes from the exhaustive
    smoothness scan when ``fit`` (default: up to 256 points), otherwise from
    the grid bound ``C = 4`` (``|Delta K| <= 2 t / d(s,t)`` and
    ``mu(B(s,rho)) <= 2 rho``).
    """
    if space.dim != 1:
        raise ValueError("discrete Hilbert transform needs a 1-D space")
    x = space.points[:, 0]
    diff = x[:, None] - x[None, :]
    with np.errstate(divide="ignore"):
        K = np.where(diff != 0, 1.0 / np.where(diff != 0, diff, 1.0), 0.0)
    if fit is None:
        fit = space.n <= 256
    if fit:
        C = kernel_smoothness_ratio(space, K, lambda t: t, c_K)
        how = "scan"
    else:
        C, how = 4.0, "analytic"
    kernel = DiniKernel(K, C, 1.0, c_K, fitted=how)
    alpha = _alpha_for(space, c_K)
    desc = {"kernel": "1/(s-t)", "c_K": c_K, "omega": f"{C:.6g} t", "fitted": how,
            "dini_norm": dini_norm(kernel)}
    op = KernelOperator(space, K, alpha, descriptor=desc, kernel=kernel)
    op.name = "hilbert"
    return op


def _self_term(space, exponent, sub=8):
    # average of |x|_a^exponent over the cell around the origin
    h = space.spacing
    if space.dim == 1 and space.anisotropy[0] == 1:
        half = h[0] / 2
        return 2 * half ** (exponent + 1) / (exponent + 1) / h[0]
    axes = [((np.arange(sub) + 0.5) / sub - 0.5) * hj for hj in h]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, space.dim)
    from .space import anisotropic_norm

    return float(np.mean(anisotropic_norm(mesh, space.anisotropy) ** exponent))


def riesz_potential(space, alpha_frac):
    """Kernel ``d(s,t)^(alpha_frac - D)`` with ``D = |a|_1`` the homogeneous dimension.

    The diagonal carries the average of the kernel over the own cell, so the
    discrete operator is a quadrature of the continuous one.
    """
    D = float(space.anisotropy.sum())
    if not 0 < alpha_frac < D:
        raise ValueError(f"alpha_frac must lie in (0, {D})")
    d = space.distances
    exponent = alpha_frac - D
    with np.errstate(divide="ignore"):
        K = np.where(d > 0, np.where(d > 0, d, 1.0) ** exponent, 0.0)
    np.fill_diagonal(K, _self_term(space, exponent))
    desc = {"kernel": f"d^({alpha_frac:g}-{D:g})", "alpha_frac": alpha_frac, "homogeneous_dim": D}
    op = KernelOperator(space, K, _alpha_for(space), descriptor=desc)
    op.name = "riesz"
    return op


# --------------------------------------------------------------------------
# multipliers


def frequency_lattice(space):
    """Angular frequencies per axis in FFT order, as an open mesh."""
    freqs = [2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(space.shape, space.spacing)]
    return np.meshgrid(*freqs, indexing="ij", sparse=True)


def riesz_type_symbol(space):
    """``sign(xi_1) |xi_1|^(1/a_1) / |xi|_a``, zero at the origin.

    Homogeneous of degree 0 under the anisotropic dilations.  In 1-D this is
    ``sign(xi)``.
    """
    xi = frequency_lattice(space)
    a = space.anisotropy
    norm = np.sqrt(sum(np.abs(x) ** (2.0 / aj) for x, aj in zip(xi, a)))
    num = np.sign(xi[0]) * np.abs(xi[0]) ** (1.0 / a[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(norm > 0, num / np.where(norm > 0, norm, 1.0), 0.0)
    return np.broadcast_to(m, space.shape).copy()


def mihlin_bounds(space, symbol, order=None):
    """``max |xi|_a^(a.theta) |Delta^theta m(xi)|`` per multi-index ``theta``.

    Derivatives are forward differences on the sorted frequency lattice;
    stencils touching a coordinate hyperplane ``xi_j = 0`` are skipped since
    degree-0 symbols jump there.
    """
    a = space.anisotropy
    if order is None:
        order = int(np.ceil(a.sum() + a.max() + 1))
    xi = [np.fft.fftshift(2 * np.pi * np.fft.fftfreq(n, d=h)) for n, h in zip(space.shape, space.spacing)]
    m = np.fft.fftshift(symbol)
    out = {}
    for theta in itertools.product(range(order + 1), repeat=space.dim):
        if sum(theta) > order:
            continue
        g = m
        ok = True
        for ax, t in enumerate(theta):
            if t >= len(xi[ax]):
                ok = False
                break
            for _ in range(t):
                g = np.diff(g, axis=ax) / (xi[ax][1] - xi[ax][0])
        if not ok:
            continue
        valid = np.ones(g.shape, dtype=bool)
        base = []
        for ax, t in enumerate(theta):
            x = xi[ax]
            L = len(x) - t
            # stencil [i, i + t] must stay on one side of 0
            lo, hi = x[:L], x[t:]
            side = (lo > 0) | (hi < 0) if t > 0 else np.ones(L, dtype=bool)
            shape = [1] * space.dim
            shape[ax] = L
            valid &= side.reshape(shape)
            base.append(lo.reshape(shape))
        if not valid.any():
            continue
        norm = np.sqrt(sum(np.abs(b) ** (2.0 / aj) for b, aj in zip(base, a)))
        weight = norm ** float(np.dot(a, theta))
        val = np.abs(g) * weight
        out["".join(map(str, theta))] = float(np.max(val[valid]))
    return out


class MultiplierOperator(Operator):
    """``Tf = IDFT(m DFT f)`` componentwise on a periodic grid."""

    name = "multiplier"

    def __init__(self, space, symbol, alpha, descriptor=None):
        if not space.periodic:
            raise ValueError("Fourier multipliers need a periodic space")
        super().__init__(space, alpha=alpha, descriptor=descriptor)
        self.symbol = np.asarray(symbol).reshape(space.shape)

    def _transform(self, X):
        lead = X.shape[:-2]
        m = X.shape[-1]
        axes = tuple(range(len(lead), len(lead) + self.space.dim))
        Y = X.reshape(lead + self.space.shape + (m,))
        Y = np.fft.ifftn(np.fft.fftn(Y, axes=axes) * self.symbol[..., None], axes=axes)
        Y = Y.reshape(lead + (self.space.n, m))
        if np.max(np.abs(Y.imag), initial=0.0) <= 1e-12 * max(np.max(np.abs(Y.real), initial=0.0), 1e-300):
            return Y.real
        return Y

    def apply(self, f):
        return self._transform(np.asarray(as_values(f)))

    def apply_many(self, F):
        return self._transform(np.asarray(F))

    def matrix(self):
        return self.apply(np.eye(self.space.n))


def anisotropic_multiplier(space, symbol=None):
    """Multiplier operator with a descriptor of its symbol bounds."""
    if not space.periodic:
        raise ValueError("Fourier multipliers need a periodic space")
    symbol = riesz_type_symbol(space) if symbol is None else np.asarray(symbol)
    desc = {"symbol_sup": float(np.max(np.abs(symbol))), "mihlin": mihlin_bounds(space, symbol)}
    return MultiplierOperator(space, symbol, _alpha_for(space), desc)


# --------------------------------------------------------------------------
# Rademacher maximal operator


def khintchine_lower_constant(r):
    """Best constant ``A_r`` in ``A_r (sum x^2)^(1/2) <= (E|sum eps x|^r)^(1/r)``."""
    if r >= 2:
        return 1.0
    p0 = 1.8474
    if r <= p0:
        return 2.0 ** (0.5 - 1.0 / r)
    return float(np.sqrt(2) * (gamma_fn((r + 1) / 2) / np.sqrt(np.pi)) ** (1.0 / r))


@dataclass(frozen=True)
class RademacherParams:
    """Value space ``l^r_m`` and evaluation mode (``chain``, ``khintchine``, ``montecarlo``)."""

    r: float = 1.5
    mode: str = "chain"
    samples: int = 4096
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.r <= 2:
            raise ValueError("r must lie in [1, 2]")
        if self.mode not in ("chain", "khintchine", "montecarlo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "montecarlo" and self.samples < 1000:
            raise ValueError("montecarlo needs at least 1000 samples")


def _sign_patterns(n):
    # first sign fixed to +1: the L^2 norm is invariant under a global flip
    if n == 1:
        return np.ones((1, 1))
    rest = np.array(list(itertools.product([1.0, -1.0], repeat=n - 1)))
    return np.hstack([np.ones((len(rest), 1)), rest])


def _chain_values(y, r):
    # y (u, L, m): best uniform-lambda window over contiguous ancestor runs
    u, L, _ = y.shape
    best = np.zeros(u)
    live = np.any(y != 0, axis=2)
    for ell in range(1, L + 1):
        signs = _sign_patterns(ell)
        for start in range(L - ell + 1):
            if not live[:, start : start + ell].any():
                continue
            X = y[:, start : start + ell, :]
            S = np.einsum("pl,ulm->upm", signs, X)
            val = np.sqrt(np.mean(lp_norm(S, r) ** 2, axis=1) / ell)
            best = np.maximum(best, val)
    return best


def _khintchine_values(y, r, tol=1e-10, max_iter=20000):
    """Max over the simplex of ``(sum_i (sum_g u_g y_gi^2)^(r/2))^(1/r)``.

    Multiplicative updates ``u <- u grad / (p Phi)`` with ``p = r/2``;
    stops when the Frank-Wolfe gap drops below ``tol`` relative to ``p Phi``.
    Returns ``(values, lambdas)`` with ``lambda = sqrt(u)``.
    """
    a = np.abs(y) ** 2
    u_rows, L, _ = a.shape
    p = r / 2.0
    live = np.any(a > 0, axis=2)
    w = np.where(live, 1.0, 0.0)
    cnt = w.sum(axis=1, keepdims=True)
    w = np.divide(w, cnt, out=np.zeros_like(w), where=cnt > 0)
    best = np.zeros(u_rows)
    best_w = w.copy()
    active = cnt[:, 0] > 0
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        v = np.einsum("ul,ulm->um", w[idx], a[idx])
        vp = np.where(v > 0, v, 1.0) ** (p - 1) * (v > 0)
        phi = np.sum(np.where(v > 0, v, 0.0) ** p, axis=1)
        grad = p * np.einsum("um,ulm->ul", vp, a[idx])
        better = phi > best[idx]
        best[idx[better]] = phi[better]
        best_w[idx[better]] = w[idx[better]]
        gap = grad.max(axis=1) - p * phi
        done = gap <= tol * p * phi
        w[idx] = w[idx] * grad / (p * phi)[:, None]
        active[idx[done]] = False
    return best ** (1.0 / r), np.sqrt(best_w)


def _montecarlo_values(y, r, lam, samples, seed):
    rng = np.random.default_rng(seed)
    L = y.shape[1]
    eps = rng.choice([-1.0, 1.0], size=(samples, L))
    out = np.empty(len(y))
    for i in range(len(y)):
        S = (eps * lam[i]) @ y[i]
        out[i] = np.sqrt(np.mean(lp_norm(S, r) ** 2))
    return out


def rademacher_norm(y, params):
    """Value of the randomized norm for ancestor families ``y`` of shape (..., L, m)."""
    y = np.asarray(y, dtype=float)
    lead = y.shape[:-2]
    flat = y.reshape((-1,) + y.shape[-2:])
    if flat.shape[0] == 0:
        return np.zeros(lead)
    uniq, inv = np.unique(flat.reshape(len(flat), -1), axis=0, return_inverse=True)
    uniq = uniq.reshape((-1,) + y.shape[-2:])
    if params.mode == "chain":
        vals = _chain_values(uniq, params.r)
    else:
        vals, lam = _khintchine_values(uniq, params.r)
        if params.mode == "montecarlo":
            vals = _montecarlo_values(uniq, params.r, lam, params.samples, params.seed)
    return vals[inv.reshape(-1)].reshape(lead)


def level_averages(f, system):
    """(L, N, m) average of ``f`` over the generation-``k`` cube of each point."""
    f = as_values(f)
    mu = system.space.measure
    out = np.empty((system.n_levels,) + f.shape, dtype=np.result_type(f, float))
    ncubes = len(system.cubes)
    den = np.bincount(system.labels.reshape(-1), weights=np.tile(mu, system.n_levels), minlength=ncubes)
    for i, lab in enumerate(system.labels):
        num = np.zeros((ncubes, f.shape[1]), dtype=out.dtype)
        np.add.at(num, lab, mu[:, None] * f)
        out[i] = num[lab] / den[lab][:, None]
    return out


class RademacherOperator(Operator):
    """``s -> (<f>_Q)_{Q containing s}`` with values normed by :func:`rademacher_norm`.

    The Y-value at a point is an (L, m) array: row ``g`` is the average over
    the generation ``k_min + g`` ancestor.  ``T_Q`` keeps only rows of cubes
    inside ``Q``.
    """

    name = "rademacher"

    def __init__(self, system, params=None):
        params = params or RademacherParams()
        super().__init__(system.space, alpha=1.0, r_y=params.r,
                         descriptor={"mode": params.mode, "r": params.r, "signs": "real"})
        self.system = system
        self.params = params

    def apply(self, f):
        return np.moveaxis(level_averages(f, self.system), 0, 1)

    def localized(self, f, system, cube):
        vals = self.apply(f)[cube.members]
        vals[:, : cube.generation - self.system.k_min] = 0.0
        return vals

    def ynorm(self, y):
        return rademacher_norm(y, self.params)


class _LocalRademacherCache(LocalCache):
    def __init__(self, op, f, system):
        super().__init__(op, f, system)
        self._full = op.apply(f)

    def __call__(self, cube):
        v = self._store.get(cube.id)
        if v is None:
            v = self._full[cube.members].copy()
            v[:, : cube.generation - self.system.k_min] = 0.0
            self._store[cube.id] = v
        return v


def rademacher_cache(op, f):
    """Cache of ``T_Q f`` that computes all cube averages once."""
    return _LocalRademacherCache(op, f, op.system)


def rademacher_maximal(f, system, params=None):
    op = RademacherOperator(system, params)
    return op.ynorm(op.apply(f))


def lattice_maximal(f, system, r=1.5):
    """``|| sup_Q <|f_i|>_Q ||_{l^r}``: componentwise supremum, then the norm."""
    avg = level_averages(np.abs(as_values(f)), system)
    return lp_norm(avg.max(axis=0), r)


def sharpness_example(space):
    """``f(s) = e_n`` on ``[2^-n, 2^-n+1)``, n = 1..depth, zero on the first cell."""
    depth = int(np.log2(space.n))
    x = space.points[:, 0]
    vals = np.zeros((space.n, depth))
    for n in range(1, depth + 1):
        vals[(x >= 2.0**-n) & (x < 2.0 ** (-n + 1)), n - 1] = 1.0
    return vals


# --------------------------------------------------------------------------
# r-sublinearity


def r_sublinearity_check(op, r, trials=100, seed=0, system=None, m=None):
    """Empirical ``C_r`` for disjoint pieces (or nested chains when ``system`` is given).

    Without ``system``: ``||T(sum f_k)(s)|| / (sum ||T f_k(s)||^r)^(1/r)`` for
    random functions split on random disjoint supports.  With ``system``:
    ``||T_{Q_1} f(s)|| / (||T_{Q_n} f(s)||^r + sum ||T_{Q_k} f(s) - T_{Q_{k+1}} f(s)||^r)^(1/r)``
    over random chains ``Q_n`` in ... in ``Q_1`` and ``s`` in ``Q_n``.
    """
    rng = np.random.default_rng(seed)
    space = op.space
    m = m or 1
    worst, witness = 0.0, None
    for trial in range(trials):
        f = rng.normal(size=(space.n, m))
        if system is None:
            k = int(rng.integers(2, 7))
            piece = rng.integers(0, k, size=space.n)
            parts = [f * (piece == j)[:, None] for j in range(k)]
            total = op.ynorm(op.apply(f))
            each = np.stack([op.ynorm(op.apply(p)) for p in parts])
            den = np.sum(each**r, axis=0) ** (1.0 / r)
            num = total
        else:
            s = int(rng.integers(space.n))
            chain = system.ancestors(s)
            n = int(rng.integers(2, len(chain) + 1)) if len(chain) >= 2 else 1
            pick = np.sort(rng.choice(len(chain), size=n, replace=False))
            cubes = [chain[i] for i in pick]
            cache = rademacher_cache(op, f) if isinstance(op, RademacherOperator) else LocalCache(op, f, system)

            def at(q):
                return cache(q)[np.searchsorted(q.members, s)]

            vals = [at(q) for q in cubes]
            terms = [op.ynorm(vals[-1][None])[0]]
            terms += [op.ynorm((vals[i] - vals[i + 1])[None])[0] for i in range(n - 1)]
            num = np.atleast_1d(op.ynorm(vals[0][None]))
            den = np.atleast_1d(np.sum(np.asarray(terms) ** r) ** (1.0 / r))
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 1e-12, np.inf, 0.0))
        j = int(np.argmax(ratio))
        if ratio[j] > worst:
            worst = float(ratio[j])
            witness = {"trial": trial, "point": j if system is None else s}
    return {"C_r": worst, "r": r, "trials": trials, "witness": witness,
            "mode": "disjoint" if system is None else "chain"}
