"""Tents, kernel combinations in ``H^2_alpha`` and empirical Carleson constants.

A kernel combination ``f = sum_j c_j K_alpha(., zeta_j)`` has
``||f||^2 = sum_{j,k} c_j conj(c_k) K_alpha(zeta_k, zeta_j)``. With the Gram
matrix ``G_{jk} = K_alpha(zeta_k, zeta_j)``, the mass matrix
``M_{jk} = sum_a m_a K_alpha(zeta_a, zeta_j) conj K_alpha(zeta_a, zeta_k)`` and
``x = conj(c)``, the Carleson quotient of ``f`` is ``x^H M x / x^H G x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular
from scipy.special import gamma as gamma_fn
from sklearn.base import BaseEstimator

from . import geometry as geo
from . import kernels
from . import potential as pot
from . import quadrature as qd
from ._validation import (DomainError, ParameterRangeError, SingularKernelError,
                          SolverError, check_alpha, check_distinct, check_interior)

COND_MAX = 1e12


# -------------------------------------------------------------- combos

class KernelCombo:
    """``sum_j c_j K_alpha(., zeta_j)`` with interior centers ``[z, t, h]``."""

    def __init__(self, alpha, coefs, centers):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        coefs = np.atleast_1d(np.asarray(coefs, dtype=complex))
        if len(coefs) != len(centers):
            raise geo.DimensionError("one coefficient per center required")
        if len(centers):
            n = geo.udim_of(centers)
            kernels._check_kernel_alpha(alpha, n)
            check_interior(centers, "kernel centers")
            check_distinct(centers, "kernel centers")
        self.alpha = float(alpha)
        self.coefs = coefs
        self.centers = centers

    def __len__(self):
        return len(self.coefs)

    def __call__(self, u):
        """Evaluate at domain points ``[z, t, h]`` (batched)."""
        u = np.asarray(u, dtype=float)
        if len(self) == 0:
            return np.zeros(u.shape[:-1], dtype=complex)
        K = kernels.hs_kernel_u(self.alpha, u[..., None, :], self.centers)
        return K @ self.coefs

    def derivative(self, m, u):
        """``m``-th derivative in the last complex variable at ``u``."""
        u = np.asarray(u, dtype=float)
        if len(self) == 0:
            return np.zeros(u.shape[:-1], dtype=complex)
        D = kernels.hs_kernel_vertical_derivative_u(self.alpha, m, u[..., None, :], self.centers)
        return D @ self.coefs

    def scaled(self, c):
        return KernelCombo(self.alpha, self.coefs * c, self.centers.copy())

    def __add__(self, other):
        if other.alpha != self.alpha:
            raise ValueError("cannot add combinations of different order")
        cs = np.concatenate([self.centers, other.centers])
        co = np.concatenate([self.coefs, other.coefs])
        # merge repeated centers
        uniq, inv = np.unique(cs, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq), dtype=complex)
        np.add.at(merged, inv.ravel(), co)
        return KernelCombo(self.alpha, merged, uniq)

    def to_dict(self):
        terms = []
        for c, p in zip(self.coefs, self.centers):
            z, t = geo.split(p[:-1])
            terms.append({"re": float(c.real), "im": float(c.imag),
                          "z": [[float(v.real), float(v.imag)] for v in z],
                          "t": float(t), "h": float(p[-1])})
        return {"alpha": self.alpha, "terms": terms}

    @classmethod
    def from_dict(cls, d):
        terms = d["terms"]
        if not terms:
            return cls(d["alpha"], np.zeros(0), np.zeros((0, 4)))
        cs = [geo.upoint([complex(a, b) for a, b in tm["z"]], tm["t"], tm["h"]) for tm in terms]
        return cls(d["alpha"], [complex(tm["re"], tm["im"]) for tm in terms], np.array(cs))

    def __repr__(self):
        return f"KernelCombo(alpha={self.alpha}, terms={len(self)})"


# -------------------------------------------------------- Gram machinery

def gram_matrix(alpha, centers):
    """``G_{jk} = K_alpha(zeta_k, zeta_j)``; Hermitian positive definite."""
    C = check_interior(np.atleast_2d(centers), "centers")
    check_distinct(C, "centers")
    return kernels.hs_kernel_u(alpha, C[None, :, :], C[:, None, :])


def mass_matrix(alpha, centers, mu: pot.AtomicMeasure):
    """``M_{jk} = sum_a m_a K_alpha(zeta_a, zeta_j) conj K_alpha(zeta_a, zeta_k)``."""
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(mu) == 0:
        return np.zeros((len(C), len(C)), dtype=complex)
    check_interior(mu.points, "atoms")
    Ka = kernels.hs_kernel_u(alpha, mu.points[:, None, :], C[None, :, :])  # (a, j)
    return (Ka.T * mu.masses) @ Ka.conj()


@dataclass
class HermitianSystem:
    G: np.ndarray
    M: np.ndarray
    centers: np.ndarray | None = None

    @classmethod
    def build(cls, alpha, centers, mu):
        return cls(gram_matrix(alpha, centers), mass_matrix(alpha, centers, mu),
                   np.atleast_2d(centers))


@dataclass
class QuotientResult:
    value: float
    vector: np.ndarray
    cond: float
    kept: np.ndarray
    pruned: list = field(default_factory=list)
    min_eig_G: float = 0.0


def _cond(G):
    w = np.linalg.eigvalsh(G)
    return (w[-1] / w[0] if w[0] > 0 else np.inf), w[0]


def _prune(G, cond_max):
    kept = list(range(len(G)))
    pruned = []
    cond, _ = _cond(G)
    while cond > cond_max and len(kept) > 1:
        best = None
        for i in range(len(kept)):
            sub = kept[:i] + kept[i + 1:]
            c, _ = _cond(G[np.ix_(sub, sub)])
            if best is None or c < best[0]:
                best = (c, i)
        cond = best[0]
        pruned.append(kept.pop(best[1]))
    return np.array(kept), pruned, cond


def carleson_quotient(system: HermitianSystem, cond_max=COND_MAX, prune=True) -> QuotientResult:
    """Largest ``lambda`` with ``M x = lambda G x`` (Cholesky reduction of ``G``).

    When ``cond(G) > cond_max`` centers are dropped one at a time, each time
    removing the one that best improves conditioning; without ``prune`` an
    ill-conditioned ``G`` raises ``SolverError``.
    """
    G = np.asarray(system.G)
    M = np.asarray(system.M)
    if len(G) == 0:
        return QuotientResult(0.0, np.zeros(0), 1.0, np.zeros(0, dtype=int))
    cond, wmin = _cond(G)
    kept = np.arange(len(G))
    pruned = []
    if cond > cond_max:
        if not prune:
            raise SolverError(f"Gram matrix condition number {cond:.3g} exceeds {cond_max:.0e}")
        kept, pruned, cond = _prune(G, cond_max)
        if cond > cond_max:
            raise SolverError("pruning could not restore a usable Gram matrix")
        G = G[np.ix_(kept, kept)]
        M = M[np.ix_(kept, kept)]
        wmin = np.linalg.eigvalsh(G)[0]
    L = cholesky(G, lower=True)
    Y = solve_triangular(L, M, lower=True)
    A = solve_triangular(L, Y.conj().T, lower=True).conj().T
    A = 0.5 * (A + A.conj().T)
    w, V = eigh(A)
    x = solve_triangular(L.conj().T, V[:, -1], lower=False)
    return QuotientResult(float(max(w[-1], 0.0)), x, float(cond), kept, pruned, float(wmin))


# ----------------------------------------------------------------- norms

def hs_norm_gram(combo: KernelCombo):
    """Exact RKHS norm ``sqrt(x^H G x)`` with ``x = conj(c)``."""
    if len(combo) == 0:
        return 0.0
    G = gram_matrix(combo.alpha, combo.centers)
    x = combo.coefs.conj()
    return float(np.sqrt(max(np.real(x.conj() @ G @ x), 0.0)))


def norm_prefactor(alpha, m):
    """``4^m / Gamma(2m - 2 alpha)``: the weight making the volume norm the RKHS norm."""
    return 4.0 ** m / gamma_fn(2 * m - 2 * alpha)


def hs_norm_volume(combo: KernelCombo, m: int, budget: qd.Budget = qd.Budget(200_000),
                   threads=1) -> qd.Estimate:
    """Monte-Carlo ``(4^m / Gamma(2m-2a) int |d^m F|^2 h^{2m - 2a - 1} dV)^{1/2}``.

    The integral runs over ``[z, t, h]`` coordinates. Draws come from a mixture
    of densities ``h^{2m-2a-1} |2 beta(., zeta_j)|^{-2(s+m)}`` matching each
    term, weighted by ``|c_j| sqrt(K(zeta_j, zeta_j))``.
    """
    if int(m) != m or m <= combo.alpha:
        raise ParameterRangeError(f"need an integer m > alpha, got m={m}")
    if len(combo) == 0 or not np.any(combo.coefs):
        return qd.Estimate(0.0, 0.0, 0, budget.seed)
    a = combo.alpha
    n = geo.udim_of(combo.centers)
    s = n + 1 - 2 * a
    w = np.abs(combo.coefs) * np.sqrt(np.real(np.diagonal(gram_matrix(a, combo.centers))))
    sampler = qd.MixtureSampler(
        [qd.DomainKernelSampler(c, 2 * m - 2 * a, s + m) for c in combo.centers], w)

    def f(u):
        return np.abs(combo.derivative(m, u)) ** 2 * u[:, -1] ** (2 * m - 2 * a - 1)

    sq = qd.importance_integral(f, sampler, budget, threads) * norm_prefactor(a, m)
    val = float(np.sqrt(max(sq.value, 0.0)))
    se = sq.stderr / (2 * val) if val > 0 else 0.0
    return qd.Estimate(val, se, sq.samples, budget.seed)


# ------------------------------------------------- fractional differentiation

def frac_diff(combo: KernelCombo) -> KernelCombo:
    """Image ``sum_j c_j K_{alpha/2}(., zeta_j)`` in the Hardy space ``H^2``.

    Since ``<K_{a/2}(., zeta), K_{a/2}(., omega)>_{H^2} = K_a(omega, zeta)``,
    the coefficients carry over unchanged and the map is an isometry onto its
    image.
    """
    return KernelCombo(combo.alpha / 2.0, combo.coefs.copy(), combo.centers.copy())


def h2_inner_closed(alpha_half, zeta, omega):
    """``<K_b(., zeta), K_b(., omega)>_{H^2} = K_{2b}(omega, zeta)`` for ``b = alpha_half``."""
    return kernels.hs_kernel_u(2 * alpha_half, omega, zeta)


def h2_norm_closed(image: KernelCombo):
    """``H^2`` norm of a combination of ``K_{a/2}`` kernels via the closed inner product."""
    if len(image) == 0:
        return 0.0
    C = image.centers
    G = h2_inner_closed(image.alpha, C[:, None, :], C[None, :, :])  # G_jk = K_a(zeta_k, zeta_j)
    x = image.coefs.conj()
    return float(np.sqrt(max(np.real(x.conj() @ G @ x), 0.0)))


def h2_inner_quadrature(alpha_half, zeta, omega, budget: qd.Budget = qd.Budget(400_000),
                        threads=1) -> qd.Estimate:
    """Boundary integral ``int K_b([eta, 0], zeta) conj K_b([eta, 0], omega) dH(eta)``.

    Uses a two-center mixture of kernel-matched boundary densities with
    exponent ``q = n + 1 - 2b``, so ``|K_b|^2`` is matched near each center and
    in the tail.
    """
    zeta = np.asarray(zeta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = geo.udim_of(zeta)
    kernels._check_kernel_alpha(alpha_half, n)
    q = n + 1 - 2 * alpha_half
    sampler = qd.MixtureSampler([qd.BoundaryKernelSampler(zeta, q),
                                 qd.BoundaryKernelSampler(omega, q)])

    def f(eta):
        e = geo.with_height(eta, 0.0)
        return (kernels.hs_kernel_u(alpha_half, e, zeta)
                * np.conj(kernels.hs_kernel_u(alpha_half, e, omega)))

    return qd.importance_integral(f, sampler, budget, threads)


def h2_norm_quadrature(image: KernelCombo, budget: qd.Budget = qd.Budget(400_000), threads=1):
    """``(int |F([eta, 0])|^2 dH)^{1/2}`` for a combination of ``K_{a/2}`` kernels."""
    if len(image) == 0:
        return qd.Estimate(0.0, 0.0, 0, budget.seed)
    n = geo.udim_of(image.centers)
    q = n + 1 - 2 * image.alpha
    sampler = qd.MixtureSampler([qd.BoundaryKernelSampler(c, q) for c in image.centers],
                                np.abs(image.coefs) + 1e-300)

    def f(eta):
        return np.abs(image(geo.with_height(eta, 0.0))) ** 2

    sq = qd.importance_integral(f, sampler, budget, threads)
    val = float(np.sqrt(max(sq.value, 0.0)))
    return qd.Estimate(val, sq.stderr / (2 * val) if val > 0 else 0.0, sq.samples, budget.seed)


# -------------------------------------------------------------- tents

def tent_contains(E: geo.BallFamily, u, mode="metric", samples=512, seed=0):
    """Whether ``B([z, t], sqrt h)`` lies in the union of ``E``.

    ``metric``: some ball satisfies ``d(c, [z, t]) + sqrt h <= r`` (sufficient).
    ``sampled``: uniform points of the ball and of its boundary sphere all lie
    in the union (necessary up to sampling).
    """
    u = np.asarray(u, dtype=float)
    if np.any(u[..., -1] <= 0):
        raise DomainError("tents contain interior points only")
    single = u.ndim == 1
    U = np.atleast_2d(u)
    if len(E) == 0:
        out = np.zeros(len(U), dtype=bool)
        return bool(out[0]) if single else out
    base, rh = U[:, :-1], np.sqrt(U[:, -1])
    if mode == "metric":
        d = geo.hdist(base[:, None, :], E.centers[None, :, :])
        out = np.any(d + rh[:, None] <= E.radii[None, :], axis=1)
    elif mode == "sampled":
        n = E.n
        rng = qd.make_rng(seed)
        pts = np.concatenate([qd.sample_unit_ball(n, samples, rng),
                              qd.unit_sphere_directions(n, samples, rng)])
        out = np.empty(len(U), dtype=bool)
        for i in range(len(U)):
            y = geo.group_mul(geo.dilate_h(rh[i], pts), base[i])
            out[i] = bool(np.all(E.contains(y)))
    else:
        raise ValueError(f"unknown tent mode {mode!r}")
    return bool(out[0]) if single else out


def tent_measure(mu: pot.AtomicMeasure, E: geo.BallFamily, mode="metric", per_ball=False):
    """``mu(T(E))``, or ``sum_i mu(T(B_i))`` with ``per_ball``."""
    if len(mu) == 0 or len(E) == 0:
        return 0.0
    if per_ball:
        return float(sum(tent_measure(mu, E.subfamily(i), mode) for i in range(len(E))))
    inside = tent_contains(E, mu.points, mode)
    return float(mu.masses[np.atleast_1d(inside)].sum())


def subcap_ratio(alpha, mu: pot.AtomicMeasure, E: geo.BallFamily, grid=None, mode="metric",
                 threads=1, return_parts=False):
    """``sum_i mu(T(B_i)) / cap_alpha(union E)`` for a disjoint family."""
    if len(E) == 0:
        raise ZeroDivisionError("the empty family has zero capacity")
    check_alpha(alpha, E.n, main_theorem=True)
    if not E.is_disjoint():
        raise ValueError("ball family must be pairwise disjoint")
    num = tent_measure(mu, E, mode, per_ball=True)
    cap = pot.capacity_primal(alpha, E, grid, threads=threads).value
    r = num / cap
    return (r, num, cap) if return_parts else r


# --------------------------------------------------- holomorphic potentials

def lift(mu: pot.AtomicMeasure, eps):
    """Atoms moved to height ``eps`` (the shift ``zeta -> zeta + i eps``)."""
    if not eps > 0:
        raise ParameterRangeError("lift offset must be positive")
    return geo.with_height(mu.base, mu.points[:, -1] + eps)


def holomorphic_potential(alpha, mu: pot.AtomicMeasure, eps, zeta=None):
    """``F(zeta) = sum_a m_a K_alpha(zeta, omega_a + i eps)``.

    Returns ``(values or None, combo, ||F||_{H^2_alpha})``.
    """
    if len(mu) == 0:
        n = geo.udim_of(mu.points)
        combo = KernelCombo(alpha, np.zeros(0), np.zeros((0, 2 * n + 2)))
        vals = None if zeta is None else np.zeros(np.shape(zeta)[:-1], dtype=complex)
        return vals, combo, 0.0
    combo = KernelCombo(alpha, mu.masses.astype(complex), lift(mu, eps))
    vals = None if zeta is None else combo(np.asarray(zeta, dtype=float))
    return vals, combo, hs_norm_gram(combo)


def sample_tent(A: geo.BallFamily, count, seed=0, heights=None):
    """Points of ``T(A)`` by the metric criterion.

    Without ``heights``: a ball is chosen by volume, a base point uniformly in
    it, and ``h`` uniformly in ``(0, (r - d)^2)``. With ``heights``: bases as
    before, each paired with a given height and kept only if it is a tent
    point (possibly none).
    """
    rng = qd.make_rng(seed)
    n = A.n
    p = A.radii ** (2 * n + 2)
    idx = rng.choice(len(A), size=count, p=p / p.sum())
    unit = qd.sample_unit_ball(n, count, rng)
    v = geo.dilate_h_vec(A.radii[idx], unit)
    base = geo.group_mul(v, A.centers[idx])
    room = A.radii[idx] - geo.hgauge(v)
    if heights is None:
        h = rng.uniform(0.0, 1.0, count) * room ** 2
        h = np.maximum(h, 1e-300)
        return geo.with_height(base, h)
    h = np.asarray(heights, dtype=float)[rng.integers(0, len(heights), count)]
    pts = geo.with_height(base, h)
    return pts[tent_contains(A, pts, "metric")] if len(pts) else pts


def necessity_check(alpha, A: geo.BallFamily, grid=None, samples=1000, seed=0, eps_rel=1e-3,
                    heights=None, eps_sweep=(1e-2, 1e-3, 1e-4), threads=1):
    """Minimum of ``Re F_{mu^A}`` over tent samples and ``||F||^2 / cap(A)``.

    ``mu^A`` comes from :func:`siegelcap.potential.capacity_dual`; atoms are
    lifted by ``eps_rel * r_max^2``.
    """
    check_alpha(alpha, A.n, main_theorem=True)
    cert = pot.capacity_dual(alpha, A, grid, threads=threads)
    scale = float(A.radii.max() ** 2)
    pts = sample_tent(A, samples, seed, heights)
    report = {"alpha": alpha, "capacity": cert.value, "mass": cert.dual.total,
              "eps": eps_rel * scale, "tent_samples": int(len(pts)), "seed": seed}
    if len(pts) == 0:
        report.update({"empty": True, "min_re_F": None, "norm_sq_over_cap": None,
                       "eps_sweep": []})
        return report
    vals, combo, norm = holomorphic_potential(alpha, cert.dual, eps_rel * scale, pts)
    sweep = []
    for e in eps_sweep:
        v, _, nm = holomorphic_potential(alpha, cert.dual, e * scale, pts)
        sweep.append({"eps_rel": e, "min_re_F": float(v.real.min()),
                      "norm_sq_over_cap": float(nm ** 2 / cert.value)})
    report.update({"empty": False, "min_re_F": float(vals.real.min()),
                   "max_abs_F": float(np.abs(vals).max()),
                   "norm_sq_over_cap": float(norm ** 2 / cert.value), "eps_sweep": sweep})
    return report


def sufficiency_check(alpha, mu: pot.AtomicMeasure, combos, E_schedule, grid=None, threads=1):
    """Empirical Carleson constant over the span of all combo centers vs the
    largest subcapacitary ratio over the ball-family schedule."""
    n = geo.udim_of(mu.points) if len(mu) else (combos[0].centers.shape[-1] - 2) // 2
    check_alpha(alpha, n, main_theorem=True)
    centers = np.concatenate([c.centers for c in combos]) if combos else np.zeros((0, 2 * n + 2))
    centers = np.unique(centers, axis=0)
    if len(mu) == 0:
        carl = 0.0
        info = {"cond": 1.0, "pruned": []}
    else:
        res = carleson_quotient(HermitianSystem.build(alpha, centers, mu))
        carl = res.value
        info = {"cond": res.cond, "pruned": [int(i) for i in res.pruned]}
    subs = []
    for E in E_schedule:
        r, num, cap = subcap_ratio(alpha, mu, E, grid, threads=threads, return_parts=True)
        subs.append({"balls": len(E), "r_max": float(E.radii.max()), "tent_mass": num,
                     "capacity": cap, "ratio": r})
    sub = max((s["ratio"] for s in subs), default=0.0)
    return {"carleson": carl, "subcap": sub,
            "ratio": (carl / sub) if sub > 0 else (0.0 if carl == 0 else np.inf),
            "centers": int(len(centers)), "schedule": subs, **info}


# ------------------------------------------------------------ estimator

class CarlesonEmbedding(BaseEstimator):
    """Estimator wrapper: ``fit(centers, mu)`` finds the best Carleson quotient on the span."""

    def __init__(self, alpha=0.75, cond_max=COND_MAX, prune=True):
        self.alpha = alpha
        self.cond_max = cond_max
        self.prune = prune

    def fit(self, centers, mu):
        system = HermitianSystem.build(self.alpha, centers, mu)
        res = carleson_quotient(system, self.cond_max, self.prune)
        self.constant_ = res.value
        self.cond_ = res.cond
        self.kept_ = res.kept
        C = np.atleast_2d(centers)[res.kept]
        self.extremal_ = KernelCombo(self.alpha, res.vector.conj(), C)
        return self

    def transform(self, u):
        """Values of the extremal combination at domain points."""
        if not hasattr(self, "extremal_"):
            raise AttributeError("CarlesonEmbedding is not fitted")
        return self.extremal_(u)
