"""Monte-Carlo integration over the Heisenberg group and the Siegel domain.

All randomness comes from numpy's Philox counter-based generator. A result
is a function of ``(seed, samples)`` only: work is split into fixed index
chunks, each chunk draws from ``Philox(seed).jumped(chunk)``, and chunk
accumulators ``(sum, sum of squares, count)`` are merged in chunk order, so
the thread count never changes a digit.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import betaln, gammaln

from . import geometry as geo
from . import kernels
from ._validation import NonFiniteIntegrandError, check_positive

CHUNK = 1 << 16


@dataclass(frozen=True)
class Budget:
    samples: int = 100_000
    seed: int = 0
    depth: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def doubled(self):
        return Budget(2 * self.samples, self.seed, self.depth)


@dataclass
class Estimate:
    value: complex | float
    stderr: float
    samples: int = 0
    seed: int | None = None

    @property
    def rel_stderr(self):
        return self.stderr / abs(self.value) if self.value != 0 else np.inf

    def __add__(self, other):
        return Estimate(self.value + other.value, float(np.hypot(self.stderr, other.stderr)),
                        self.samples + other.samples, self.seed)

    def __mul__(self, c):
        return Estimate(self.value * c, self.stderr * abs(c), self.samples, self.seed)

    __rmul__ = __mul__

    def to_dict(self):
        v = self.value
        val = {"re": float(np.real(v)), "im": float(np.imag(v))} if np.iscomplexobj(v) else float(v)
        return {"value": val, "stderr": float(self.stderr), "samples": int(self.samples),
                "seed": self.seed}


@dataclass
class Accumulator:
    """Running ``(sum, sum |x|^2, count)``; merging is plain addition."""
    total: complex = 0.0
    sumsq: float = 0.0
    count: int = 0

    def add(self, x):
        x = np.asarray(x)
        self.total += x.sum()
        self.sumsq += float(np.sum(np.abs(x) ** 2))
        self.count += x.size
        return self

    def merge(self, other):
        return Accumulator(self.total + other.total, self.sumsq + other.sumsq,
                           self.count + other.count)

    def estimate(self, scale=1.0, seed=None):
        if self.count == 0:
            return Estimate(0.0, 0.0, 0, seed)
        mean = self.total / self.count
        var = max(self.sumsq / self.count - abs(mean) ** 2, 0.0)
        se = np.sqrt(var / max(self.count - 1, 1))
        if np.iscomplexobj(mean) and mean.imag == 0:
            mean = mean.real
        return Estimate(mean * scale, float(se * abs(scale)), self.count, seed)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    bg = np.random.Philox(seed)
    if stream:
        bg = bg.jumped(stream)
    return np.random.Generator(bg)


def _chunks(total, size=CHUNK):
    out = []
    start = 0
    while start < total:
        out.append((start, min(size, total - start)))
        start += size
    return out


def run_chunks(fn, total, seed, threads=1, size=CHUNK):
    """Evaluate ``fn(rng, count) -> Accumulator`` over fixed chunks and merge in order."""
    jobs = [(i, c) for i, (_, c) in enumerate(_chunks(total, size))]

    def one(job):
        i, c = job
        return fn(make_rng(seed, i), c)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(one, jobs))
    else:
        parts = [one(j) for j in jobs]
    acc = Accumulator()
    for p in parts:
        acc = acc.merge(p)
    return acc


def _check_finite(vals, pts):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise NonFiniteIntegrandError(pts[np.argmax(bad)])


# ---------------------------------------------------------------- boxes

def integrate_box(f, lo, hi, budget: Budget, threads: int = 1) -> Estimate:
    """Stratified Monte-Carlo integral of a vectorised ``f`` over a box.

    Each axis is cut into ``2**budget.depth`` strata; every stratum gets the
    same number of uniform samples (at least two).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
        raise ValueError("box must be finite with hi > lo")
    d = lo.size
    m = 2 ** budget.depth
    n_strata = m ** d
    per = max(2, budget.samples // n_strata)
    width = (hi - lo) / m
    cell_vol = float(np.prod(width))
    idx = np.array(np.unravel_index(np.arange(n_strata), (m,) * d)).T  # (S, d)

    # one chunk = a block of strata
    block = max(1, CHUNK // per)
    blocks = [(s, min(block, n_strata - s)) for s in range(0, n_strata, block)]

    def run(bi):
        s0, ns = blocks[bi]
        rng = make_rng(budget.seed, bi)
        u = rng.random((ns, per, d))
        pts = lo + (idx[s0:s0 + ns, None, :] + u) * width
        vals = np.asarray(f(pts.reshape(-1, d))).reshape(ns, per)
        _check_finite(vals.ravel(), pts.reshape(-1, d))
        means = vals.mean(axis=1)
        var = vals.var(axis=1, ddof=1) / per
        return means.sum(), var.sum()

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(blocks))))
    else:
        parts = [run(i) for i in range(len(blocks))]
    total = sum(p[0] for p in parts)
    var = sum(p[1] for p in parts)
    if np.iscomplexobj(total) and total.imag == 0:
        total = total.real
    return Estimate(total * cell_vol, float(np.sqrt(var) * cell_vol), per * n_strata, budget.seed)


# --------------------------------------------------------------- balls

def sample_unit_ball(n, count, rng):
    """Uniform points of the gauge ball ``B(0, 1)`` in ``H_n`` (rejection)."""
    half = geo.ball_bounding_box(n, 1.0)
    out = []
    got = 0
    while got < count:
        m = int(1.7 * (count - got)) + 16
        v = rng.uniform(-half, half, size=(m, 2 * n + 1))
        v = v[geo.hgauge(v) < 1.0]
        out.append(v)
        got += len(v)
    return np.concatenate(out)[:count]


def sample_ball(x, r, count, seed=0):
    """I.i.d. uniform points of ``B(x, r)``; equal to ``sample_ball(0, r) . x``."""
    check_positive(r, "r")
    x = np.asarray(x, dtype=float)
    n = geo.dim_of(x)
    v = geo.dilate_h(r, sample_unit_ball(n, count, make_rng(seed)))
    return geo.group_mul(v, x)


def unit_sphere_directions(n, count, rng):
    """Points of the unit gauge sphere distributed by the polar surface measure."""
    u = sample_unit_ball(n, count, rng)
    return geo.dilate_h_vec(1.0 / geo.hgauge(u), u)


@dataclass(frozen=True)
class BallWindow:
    center: np.ndarray
    r: float


@dataclass(frozen=True)
class BoxWindow:
    lo: np.ndarray
    hi: np.ndarray


def integrate_boundary(f, window, budget: Budget, threads: int = 1) -> Estimate:
    """Integral of ``f`` over a window of ``H_n`` with respect to Haar measure.

    A ball window is integrated as ``f * 1_B`` over its bounding box in
    center-relative coordinates (right translation preserves the measure).
    """
    if isinstance(window, BoxWindow):
        return integrate_box(f, window.lo, window.hi, budget, threads)
    if isinstance(window, BallWindow):
        c = np.asarray(window.center, dtype=float)
        n = geo.dim_of(c)
        half = geo.ball_bounding_box(n, window.r)

        def g(v):
            inside = geo.hgauge(v) < window.r
            out = np.zeros(len(v), dtype=complex)
            if np.any(inside):
                out[inside] = f(geo.group_mul(v[inside], c))
            return out if np.any(out.imag) else out.real

        return integrate_box(g, -half, half, budget, threads)
    raise TypeError(f"unknown window {window!r}")


def integrate_boundary_improper(f, center, r0, budget: Budget, rtol=1e-3,
                                max_doublings=30, threads=1, sampler=None):
    """Improper integral over ``H_n`` by doubling ball windows ``B(center, r)``.

    Stops at the first window whose estimate differs from the previous one by
    less than ``rtol`` relative (Cauchy criterion). With an importance
    ``sampler`` every window reuses the same draws, so successive differences
    are estimates of annulus integrals. Returns the last estimate and the
    schedule of ``(r, Estimate)``.
    """
    center = np.asarray(center, dtype=float)
    r = float(r0)
    schedule = []
    prev = None
    for _ in range(max_doublings):
        if sampler is None:
            est = integrate_boundary(f, BallWindow(center, r), budget, threads)
        else:
            rr = r

            def g(x, rr=rr):
                return np.where(geo.hdist(x, center) < rr, f(x), 0.0)

            est = importance_integral(g, sampler, budget, threads)
        schedule.append((r, est))
        if prev is not None and abs(est.value - prev.value) <= rtol * abs(est.value):
            return est, schedule
        prev = est
        r *= 2.0
    return prev, schedule


def estimate_poisson_constant(n=1, budget: Budget | None = None, rtol=1e-3, height=1.0):
    """Monte-Carlo value of ``int P(zeta, .) dH`` for ``zeta = [0, 0, height]``.

    Windows double from ``2 sqrt(height)``; draws come from a kernel-matched
    proposal with heavier tails than ``P``.
    """
    budget = budget or Budget(400_000, 0, 0)
    zeta = np.zeros(2 * n + 2)
    zeta[-1] = height

    def f(w):
        return kernels.poisson_kernel_u(zeta, w)

    prop = BoundaryKernelSampler(zeta, n + 0.75)
    return integrate_boundary_improper(f, np.zeros(2 * n + 1), 2.0 * np.sqrt(height),
                                       budget, rtol, sampler=prop)


# ------------------------------------------------------ importance samplers

class BoundaryKernelSampler:
    """Samples ``eta`` in ``H_n`` with density proportional to ``|2 beta(eta, zeta)|^{-2q}``.

    With ``zeta = [z0, t0, k]`` and ``v = eta . [z0, t0]^{-1}``, the density is
    ``((k + |v_z|^2/4)^2 + v_t^2)^{-q} / Z``; ``|v_z|^2 / 4k`` is beta-prime
    ``(n, 2q-1-n)`` and ``v_t / (k + |v_z|^2/4)`` is a scaled Student t with
    ``2q - 1`` degrees of freedom.
    """

    def __init__(self, center, q):
        center = np.asarray(center, dtype=float)
        self.n = geo.udim_of(center)
        self.k = float(center[-1])
        if self.k <= 0:
            raise ValueError("center must be interior")
        if not q > (self.n + 1) / 2.0:
            raise ValueError("q must exceed (n+1)/2 for integrability")
        self.q = float(q)
        self.g = center[:-1]
        self.ginv = geo.group_inv(self.g)
        self.log_z = self.log_norm(self.n, self.q, self.k)

    @staticmethod
    def log_norm(n, q, k):
        p = 2 * q - 1
        return (0.5 * np.log(np.pi) + gammaln(q - 0.5) - gammaln(q)
                + n * np.log(4 * np.pi) + gammaln(p - n) - gammaln(p)
                + (n + 1 - 2 * q) * np.log(k))

    def _sample_rel(self, count, rng, k):
        n, q = self.n, self.q
        p = 2 * q - 1
        u = stats.betaprime(n, p - n).rvs(size=count, random_state=rng)
        dirs = rng.normal(size=(count, 2 * n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rad = 2.0 * np.sqrt(k * u)
        L = k * (1.0 + u)
        x = stats.t(p).rvs(size=count, random_state=rng)
        v = np.empty((count, 2 * n + 1))
        v[:, :2 * n] = dirs * rad[:, None]
        v[:, 2 * n] = L * x / np.sqrt(p)
        return v

    def sample(self, count, rng):
        return geo.group_mul(self._sample_rel(count, rng, self.k), self.g)

    def logpdf(self, eta):
        v = geo.group_mul(eta, self.ginv)
        zz = np.sum(v[..., :-1] ** 2, axis=-1)
        L = self.k + 0.25 * zz
        return -self.q * np.log(L * L + v[..., -1] ** 2) - self.log_z


class DomainKernelSampler:
    """Samples ``[w, s, h]`` with density proportional to ``h^{a-1} |2 beta(omega, zeta)|^{-2q}``.

    The height satisfies ``h / k ~ betaprime(a, 2q-1-n-a)``; given ``h`` the
    base point follows :class:`BoundaryKernelSampler` with ``k`` replaced by
    ``h + k``.
    """

    def __init__(self, center, a, q):
        center = np.asarray(center, dtype=float)
        self.inner = BoundaryKernelSampler(center, q)
        self.n, self.k, self.q, self.a = self.inner.n, self.inner.k, self.inner.q, float(a)
        self.b = 2 * q - 1 - self.n - a
        if not (self.a > 0 and self.b > 0):
            raise ValueError("height exponents give a non-integrable density")
        n = self.n
        p = 2 * q - 1
        coef = (0.5 * np.log(np.pi) + gammaln(q - 0.5) - gammaln(q)
                + n * np.log(4 * np.pi) + gammaln(p - n) - gammaln(p))
        self.log_z = coef + betaln(self.a, self.b) + (self.a + n + 1 - 2 * q) * np.log(self.k)

    def sample(self, count, rng):
        h = self.k * stats.betaprime(self.a, self.b).rvs(size=count, random_state=rng)
        v = self.inner._sample_rel(count, rng, h + self.k)
        return geo.with_height(geo.group_mul(v, self.inner.g), h)

    def logpdf(self, u):
        u = np.asarray(u, dtype=float)
        v = geo.group_mul(u[..., :-1], self.inner.ginv)
        h = u[..., -1]
        zz = np.sum(v[..., :-1] ** 2, axis=-1)
        L = h + self.k + 0.25 * zz
        with np.errstate(divide="ignore"):
            return (self.a - 1) * np.log(h) - self.q * np.log(L * L + v[..., -1] ** 2) - self.log_z


class MixtureSampler:
    """Finite mixture of samplers exposing ``sample`` and ``logpdf``."""

    def __init__(self, components, weights=None):
        self.components = list(components)
        w = np.ones(len(self.components)) if weights is None else np.asarray(weights, float)
        self.weights = w / w.sum()

    def sample(self, count, rng):
        counts = rng.multinomial(count, self.weights)
        parts = [c.sample(m, rng) for c, m in zip(self.components, counts) if m > 0]
        pts = np.concatenate(parts)
        return pts[rng.permutation(len(pts))]

    def logpdf(self, x):
        lp = np.stack([c.logpdf(x) for c in self.components])
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)[:, None]
        return np.logaddexp.reduce(lp + lw, axis=0)


@dataclass
class PowerLaw:
    """Radial law ``q(s)`` proportional to ``s^e1`` on ``(0, R]`` and ``R^{e1-e2} s^e2`` beyond.

    ``e2 = None`` truncates the law at ``R``.
    """
    e1: float
    R: float
    e2: float | None = None
    _mass: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.e1 <= -1:
            raise ValueError("inner exponent must exceed -1")
        a1 = self.R ** (self.e1 + 1) / (self.e1 + 1)
        a2 = 0.0 if self.e2 is None else self.R ** (self.e1 + 1) / (-self.e2 - 1)
        if self.e2 is not None and self.e2 >= -1:
            raise ValueError("tail exponent must be below -1")
        self._mass = (a1, a2)

    def sample(self, count, rng):
        a1, a2 = self._mass
        inner = rng.random(count) < a1 / (a1 + a2)
        u = 1.0 - rng.random(count)
        s = np.where(inner, self.R * u ** (1.0 / (self.e1 + 1)),
                     self.R * u ** (1.0 / (self.e2 + 1)) if self.e2 is not None else 0.0)
        return s

    def logpdf(self, s):
        a1, a2 = self._mass
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            inner = self.e1 * np.log(s)
            if self.e2 is None:
                outer = np.full_like(s, -np.inf)
            else:
                outer = (self.e1 - self.e2) * np.log(self.R) + self.e2 * np.log(s)
        return np.where(s <= self.R, inner, outer) - np.log(a1 + a2)


class RadialSampler:
    """Density ``q(d(y, c)) / (Q c_n d^{Q-1})`` on ``H_n`` for a radial law ``q``."""

    def __init__(self, center, law: PowerLaw):
        self.c = np.asarray(center, dtype=float)
        self.n = geo.dim_of(self.c)
        self.Q = 2 * self.n + 2
        self.law = law
        self.cinv = geo.group_inv(self.c)
        self.log_sigma = np.log(self.Q * geo.ball_volume_exact(self.n))

    def sample(self, count, rng):
        theta = unit_sphere_directions(self.n, count, rng)
        s = self.law.sample(count, rng)
        return geo.group_mul(geo.dilate_h_vec(s, theta), self.c)

    def logpdf(self, y):
        s = geo.hdist(y, self.c)
        with np.errstate(divide="ignore"):
            return self.law.logpdf(s) - self.log_sigma - (self.Q - 1) * np.log(s)


class UniformBallSampler:
    def __init__(self, center, r):
        self.c = np.asarray(center, dtype=float)
        self.r = float(r)
        self.n = geo.dim_of(self.c)
        self.log_vol = np.log(geo.ball_volume_exact(self.n)) + (2 * self.n + 2) * np.log(self.r)

    def sample(self, count, rng):
        v = geo.dilate_h(self.r, sample_unit_ball(self.n, count, rng))
        return geo.group_mul(v, self.c)

    def logpdf(self, y):
        inside = geo.hdist(y, self.c) < self.r
        return np.where(inside, -self.log_vol, -np.inf)


def importance_integral(f, sampler, budget: Budget, threads=1) -> Estimate:
    """``int f`` estimated as the mean of ``f(X) / p(X)`` with ``X ~ sampler``."""

    def chunk(rng, count):
        x = sampler.sample(count, rng)
        w = np.asarray(f(x)) * np.exp(-sampler.logpdf(x))
        _check_finite(w, x)
        return Accumulator().add(w)

    return run_chunks(chunk, budget.samples, budget.seed, threads).estimate(seed=budget.seed)
