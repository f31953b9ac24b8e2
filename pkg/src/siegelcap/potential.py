"""Riesz potentials, maximal functions and Riesz capacity on ``H_n``.

Discretisation
--------------
Densities live on cell-centred grids. A grid is an axis-aligned box in
coordinates relative to an *anchor* point ``a``: node ``k`` sits at
``v_k . a``. Because the gauge distance is invariant under right
multiplication, translating a set together with its anchor leaves every
discrete quantity unchanged, and dilating the box with the set scales every
quantity by the continuum exponent.

The discrete Riesz operator is ``(I f)_k = sum_j I_alpha(x_k, x_j) w f_j`` with
cell volume ``w``. On the diagonal the kernel is replaced by its average over
a gauge ball with the volume of one cell,
``C_alpha Q / (2 alpha) rho_cell^{-(Q - 2 alpha)}``.

Capacity
--------
The primal ``min ||f||^2, f >= 0, I f >= 1 on A`` has the reduced dual
``min_{mu >= 0} mu^T G mu / 2 - sum mu`` with ``G = I_AN W I_AN^T``, whose
minimiser ``mu`` gives ``f = I_AN^T mu``. ``G mu`` is the discrete
``I_alpha(I_alpha mu)`` at the A-nodes.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc
from sklearn.base import BaseEstimator

from . import geometry as geo
from . import kernels
from . import quadrature as qd
from ._validation import (InfeasibleDiscretizationError, ParameterRangeError,
                          SingularKernelError, SolverError, check_alpha,
                          check_gamma, check_positive)

BLOCK = 2048


# ------------------------------------------------------------------ grids

@dataclass(frozen=True)
class GridSpec:
    """Recipe for a capacity grid around a ball family.

    ``margin`` is measured in units of the largest radius: the box covers the
    balls enlarged by ``margin * r_max``.
    """
    shape: tuple = (32, 32, 32)
    margin: float = 2.0

    def __post_init__(self):
        shape = (int(self.shape),) * 3 if np.isscalar(self.shape) else tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if any(s < 1 for s in shape):
            raise ValueError("grid shape must be positive")
        if not self.margin >= 0:
            raise ValueError("margin must be nonnegative")

    def to_dict(self):
        return {"shape": list(self.shape), "margin": float(self.margin)}


class Grid:
    """Cell-centred grid on the box ``[lo, hi]`` of anchor-relative coordinates."""

    def __init__(self, lo, hi, shape, anchor=None):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.shape = tuple(int(s) for s in shape)
        if len(self.shape) != self.lo.size or self.lo.size != self.hi.size:
            raise geo.DimensionError("box and shape dimensions differ")
        self.n = geo.dim_of(self.lo)
        if not np.all(self.hi > self.lo):
            raise ValueError("empty grid box")
        self.anchor = np.zeros_like(self.lo) if anchor is None else np.asarray(anchor, dtype=float)
        self.spacing = (self.hi - self.lo) / np.array(self.shape)
        self.cell_volume = float(np.prod(self.spacing))
        self.Q = geo.homogeneous_dim(self.n)
        # radius of the gauge ball with the volume of one cell
        self.cell_radius = (self.cell_volume / geo.ball_volume_exact(self.n)) ** (1.0 / self.Q)
        self._nodes = None

    @property
    def size(self):
        return int(np.prod(self.shape))

    def rel_nodes(self):
        axes = [self.lo[i] + (np.arange(s) + 0.5) * self.spacing[i] for i, s in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def nodes(self):
        if self._nodes is None:
            self._nodes = geo.group_mul(self.rel_nodes(), self.anchor)
        return self._nodes

    def locate(self, x):
        """Flat cell index of each point, ``-1`` outside the box."""
        v = geo.group_mul(np.asarray(x, dtype=float), geo.group_inv(self.anchor))
        idx = np.floor((v - self.lo) / self.spacing).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=-1)
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, np.array(self.shape) - 1).T), self.shape)
        return np.where(ok, flat, -1)

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "shape": list(self.shape),
                "anchor": self.anchor.tolist()}

    @classmethod
    def around(cls, A: geo.BallFamily, spec: GridSpec, anchor=None):
        """Grid covering ``A`` enlarged by ``spec.margin * r_max``."""
        if len(A) == 0:
            raise InfeasibleDiscretizationError("cannot build a grid around an empty family")
        n = A.n
        if len(spec.shape) != 2 * n + 1:
            spec = GridSpec((spec.shape[0],) * (2 * n + 1), spec.margin)
        a = A.centers[0] if anchor is None else np.asarray(anchor, dtype=float)
        rel = geo.group_mul(A.centers, geo.group_inv(a))
        R = A.radii + spec.margin * A.radii.max()
        zabs = np.sqrt(np.sum(rel[:, :2 * n] ** 2, axis=-1))
        half = np.empty_like(rel)
        half[:, :2 * n] = 2.0 * R[:, None]
        half[:, 2 * n] = R * R + R * zabs
        lo = (rel - half).min(axis=0)
        hi = (rel + half).max(axis=0)
        return cls(lo, hi, spec.shape, a)


@dataclass
class GridDensity:
    """Nonnegative piecewise-constant density on the cells of a grid."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.size:
            raise geo.DimensionError("one value per grid node required")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("grid density must be finite and nonnegative")

    @property
    def weights(self):
        return self.values * self.grid.cell_volume

    def l2_norm_sq(self):
        return float(np.sum(self.values ** 2) * self.grid.cell_volume)

    def __call__(self, x):
        idx = self.grid.locate(x)
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)

    def scaled(self, c):
        return GridDensity(self.grid, c * self.values)

    @classmethod
    def from_function(cls, grid, f):
        return cls(grid, f(grid.nodes()))


@dataclass
class AtomicMeasure:
    """Finite sum of point masses at domain points ``[z, t, h]``."""
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if self.points.ndim == 1:
            self.points = self.points[None, :]
        if len(self.points) != len(self.masses):
            raise geo.DimensionError("one mass per atom required")
        if len(self.masses):
            geo.udim_of(self.points)
        if np.any(self.masses < 0) or not np.all(np.isfinite(self.masses)):
            raise ValueError("masses must be finite and nonnegative")

    @classmethod
    def empty(cls, n=1):
        return cls(np.zeros((0, 2 * n + 2)), np.zeros(0))

    @classmethod
    def on_boundary(cls, base_points, masses):
        return cls(geo.with_height(np.atleast_2d(base_points), 0.0), masses)

    def __len__(self):
        return len(self.masses)

    @property
    def total(self):
        return float(self.masses.sum())

    @property
    def base(self):
        return self.points[:, :-1]

    def scaled(self, c):
        return AtomicMeasure(self.points.copy(), self.masses * c)

    def translate(self, g):
        return AtomicMeasure(geo.translate_u(self.points, g), self.masses.copy())

    def dilate(self, r):
        return AtomicMeasure(geo.dilate(r, self.points), self.masses.copy())

    def to_dict(self):
        out = []
        for p, m in zip(self.points, self.masses):
            z, t = geo.split(p[:-1])
            out.append({"z": [[float(v.real), float(v.imag)] for v in z], "t": float(t),
                        "h": float(p[-1]), "mass": float(m)})
        return {"atoms": out}

    @classmethod
    def from_dict(cls, d, n=1):
        atoms = d["atoms"]
        if not atoms:
            return cls.empty(n)
        pts = [geo.upoint([complex(a, b) for a, b in at["z"]], at["t"], at["h"]) for at in atoms]
        return cls(np.array(pts), [at["mass"] for at in atoms])


# ------------------------------------------------------- kernel matrices

def cell_average_kernel(alpha, grid: Grid):
    """Average of ``I_alpha(0, .)`` over the gauge ball with the volume of one cell."""
    Q = grid.Q
    return kernels.riesz_constant(alpha, grid.n) * Q / (2 * alpha) * grid.cell_radius ** (-(Q - 2 * alpha))


def riesz_matrix(alpha, X, Y, self_value=None, threads=1):
    """Matrix ``I_alpha(X_k, Y_j)``; coincident pairs take ``self_value``.

    Raises ``SingularKernelError`` on coincident pairs when no value is given.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = geo.dim_of(X)
    blocks = [(s, min(s + BLOCK, len(Y))) for s in range(0, len(Y), BLOCK)]

    def one(b):
        s, e = b
        d = geo.hdist(X[:, None, :], Y[None, s:e, :])
        zero = d == 0
        if np.any(zero) and self_value is None:
            raise SingularKernelError("Riesz kernel evaluated at coincident points")
        with np.errstate(divide="ignore"):
            m = kernels.riesz_radial(alpha, n, d)
        if np.any(zero):
            m[zero] = self_value
        return m

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(one, blocks))
    else:
        parts = [one(b) for b in blocks]
    return np.concatenate(parts, axis=1) if parts else np.zeros((len(X), 0))


def grid_operator(alpha, grid: Grid, rows=None, threads=1):
    """Rows of the discrete Riesz operator without the cell weight: ``I(x_k, x_j)``."""
    nodes = grid.nodes()
    X = nodes if rows is None else nodes[rows]
    return riesz_matrix(alpha, X, nodes, cell_average_kernel(alpha, grid), threads)


def _gram(alpha, grid, rows, threads=1):
    """``G = I_AN W I_AN^T`` accumulated over column blocks in fixed order."""
    nodes = grid.nodes()
    X = nodes[rows]
    diag = cell_average_kernel(alpha, grid)
    G = np.zeros((len(rows), len(rows)))
    for s in range(0, len(nodes), BLOCK):
        M = riesz_matrix(alpha, X, nodes[s:s + BLOCK], diag, threads)
        G += M @ M.T
    return G * grid.cell_volume


# ---------------------------------------------------------- potentials

def riesz_potential(alpha, source, x):
    """``I_alpha(source)(x)`` for a grid density or an atomic measure.

    For grid sources a node closer than one cell radius is treated as the
    evaluation point's own cell and contributes its cell-averaged kernel.
    Atomic sources use the base points ``[z, t]`` of their atoms.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if isinstance(source, GridDensity):
        g = source.grid
        n = g.n
        check_alpha_riesz(alpha, n)
        out = np.zeros(len(X))
        nodes = g.nodes()
        diag = cell_average_kernel(alpha, g)
        w = source.weights
        nz = np.nonzero(w)[0]
        for s in range(0, len(nz), BLOCK):
            idx = nz[s:s + BLOCK]
            d = geo.hdist(X[:, None, :], nodes[None, idx, :])
            with np.errstate(divide="ignore"):
                m = kernels.riesz_radial(alpha, n, d)
            m[d < g.cell_radius] = diag
            out += m @ w[idx]
    elif isinstance(source, AtomicMeasure):
        if len(source) == 0:
            out = np.zeros(len(X))
        else:
            check_alpha_riesz(alpha, geo.dim_of(X))
            out = riesz_matrix(alpha, X, source.base) @ source.masses
    else:
        raise TypeError("source must be a GridDensity or an AtomicMeasure")
    return float(out[0]) if single else out


def check_alpha_riesz(alpha, n):
    if not 0 < alpha < n + 1:
        raise ParameterRangeError(f"alpha={alpha} outside (0, {n + 1})")


def conv_ratio(alpha, x, u, budget: qd.Budget = qd.Budget(200_000), threads=1) -> qd.Estimate:
    """``int I_alpha(x, y) I_alpha(y, u) dy / I_{2 alpha}(x, u)``.

    Importance sampling from a two-center mixture of radial laws matching
    the local singularity ``s^{2 alpha - 1}`` and the tail
    ``s^{4 alpha - Q - 1}`` of the integrand in polar form, so the weights
    stay bounded.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = geo.dim_of(x)
    check_alpha(alpha, n, main_theorem=True)
    D = float(geo.hdist(x, u))
    if D == 0:
        raise SingularKernelError("x and u coincide")
    Q = 2 * n + 2
    law = qd.PowerLaw(2 * alpha - 1, D, 4 * alpha - Q - 1)
    sampler = qd.MixtureSampler([qd.RadialSampler(x, law), qd.RadialSampler(u, law)])

    def f(y):
        return (kernels.riesz_radial(alpha, n, geo.hdist(y, x))
                * kernels.riesz_radial(alpha, n, geo.hdist(y, u)))

    est = qd.importance_integral(f, sampler, budget, threads)
    return est * (1.0 / kernels.riesz_radial(2 * alpha, n, D))


def ball_average(f, x, r, samples=4096, seed=0):
    """Monte-Carlo mean of ``f`` over ``B(x, r)`` with its standard error."""
    pts = qd.sample_ball(x, r, samples, seed)
    v = np.asarray(f(pts), dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


def hardy_littlewood_max(f, x, radii, samples=4096, seed=0):
    """``max_r r^{-Q} int_{B(x,r)} f`` over a radius schedule.

    ``f`` is a :class:`GridDensity` or any vectorised nonnegative function.
    Ball integrals use ``c_n r^Q`` times a Monte-Carlo mean with shared draws.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if radii.size == 0:
        raise ValueError("radius schedule is empty")
    check_positive(radii, "radii")
    x = np.asarray(x, dtype=float)
    cn = geo.ball_volume_exact(geo.dim_of(x))
    best = 0.0
    for r in radii:
        m, _ = ball_average(f, x, r, samples, seed)
        best = max(best, cn * m)
    return best


def a1_ratio(alpha, x, u, radii, budget: qd.Budget = qd.Budget(50_000), threads=1):
    """``sup_r r^{-Q} int_{B(x,r)} I_alpha(u, y) dy / I_alpha(x, u)`` over ``radii``.

    Returns ``(sup, per-radius estimates)``. Each ball integral mixes uniform
    draws on the ball with a radial law around ``u`` that absorbs the
    singularity when ``u`` is close to the ball.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = geo.dim_of(x)
    check_alpha_riesz(alpha, n)
    D = float(geo.hdist(x, u))
    if D == 0:
        raise SingularKernelError("x and u coincide")
    Q = 2 * n + 2
    ref = kernels.riesz_radial(alpha, n, D)
    out = []
    for r in np.atleast_1d(radii):
        check_positive(r, "r")
        comps = [qd.UniformBallSampler(x, r)]
        if D < 2 * r:
            comps.append(qd.RadialSampler(u, qd.PowerLaw(2 * alpha - 1, r)))
        sampler = qd.MixtureSampler(comps)

        def f(y, r=r):
            inside = geo.hdist(y, x) < r
            d = geo.hdist(y, u)
            val = np.zeros(len(y))
            val[inside] = kernels.riesz_radial(alpha, n, d[inside])
            return val

        est = qd.importance_integral(f, sampler, budget, threads)
        out.append(est * (r ** (-Q) / ref))
    return max(e.value for e in out), out


# ------------------------------------------------------------- Poisson

def poisson_draws(n, samples, seed):
    """Draws from the normalised Poisson kernel at ``[0, 0, 1]``."""
    s = qd.BoundaryKernelSampler(geo.with_height(np.zeros(2 * n + 1), 1.0), n + 1)
    return s.sample(samples, qd.make_rng(seed))


def poisson_extension(f, zeta, budget: qd.Budget = qd.Budget(20_000)):
    """``P[f](zeta) = int P(zeta, w) f(w) dH(w)`` for interior ``zeta = [z, t, h]``.

    ``f`` is a :class:`GridDensity` or a vectorised function on ``H_n``.
    Draws are ``delta_{sqrt h}(v) . [z, t]`` with ``v`` from the normalised
    kernel at ``[0, 0, 1]``; for grid densities half of the budget is instead
    drawn uniformly on the grid box and the two halves are combined with
    balance-heuristic weights, which keeps the weights bounded for points far
    from the support. The draws and weights depend only on the seed and the
    grid, so densities on one grid share common random numbers and
    ``f <= g`` gives ``P[f] <= P[g]`` exactly.
    Accepts a batch of points.
    """
    zeta = np.asarray(zeta, dtype=float)
    single = zeta.ndim == 1
    Z = np.atleast_2d(zeta)
    n = geo.udim_of(Z)
    if np.any(Z[:, -1] <= 0):
        raise geo.DomainError("Poisson extension needs interior points")
    cP = kernels.poisson_constant(n)
    box = (f.grid.lo, f.grid.hi) if isinstance(f, GridDensity) else None
    if box is None:
        v = poisson_draws(n, budget.samples, budget.seed)
    else:
        m = budget.samples // 2
        v = poisson_draws(n, budget.samples - m, budget.seed)
        lo, hi = box
        box_vol = float(np.prod(hi - lo))
        ub = geo.group_mul(qd.make_rng(budget.seed, 1).uniform(lo, hi, size=(m, lo.size)),
                           f.grid.anchor)
        fu = f(ub)
    vals, errs = [], []
    for p in Z:
        y = geo.group_mul(geo.dilate_h(np.sqrt(p[-1]), v), p[:-1])
        fy = np.asarray(f(y), dtype=float)
        if box is None:
            w = cP * fy
        else:
            # balance heuristic over the two proposals
            rel = geo.group_mul(y, geo.group_inv(f.grid.anchor))
            in_box = np.all((rel >= lo) & (rel < hi), axis=-1)
            Py = kernels.poisson_kernel_u(p, y)
            Pu = kernels.poisson_kernel_u(p, ub)
            den_y = 0.5 * Py / cP + 0.5 * in_box / box_vol
            den_u = 0.5 * Pu / cP + 0.5 / box_vol
            # one-sample balance heuristic: each draw contributes f P / q_mix
            w = np.concatenate([fy * Py / den_y, fu * Pu / den_u])
        vals.append(w.mean())
        errs.append(w.std(ddof=1) / np.sqrt(len(w)))
    if single:
        return qd.Estimate(vals[0], errs[0], budget.samples, budget.seed)
    return qd.Estimate(np.array(vals), np.array(errs), budget.samples, budget.seed)


def _admissible_coords(omega, gamma, h_max, layers, per_layer, seed, gamma_ref):
    """Scaled coordinates ``(a, b, log2 h)`` of the layered admissible sample."""
    check_gamma(gamma)
    gamma_ref = max(gamma, 8.0) if gamma_ref is None else gamma_ref
    if gamma > gamma_ref:
        raise ValueError("gamma exceeds the reference aperture")
    n = geo.dim_of(np.asarray(omega, dtype=float))
    amax = np.sqrt(8 * gamma_ref - 4)
    bmax = 2 * gamma_ref
    out = []
    for k in range(layers):
        # an integer seed: qmc spawns children from Generator seeds, which is not
        # reproducible for jumped bit generators
        sob = qmc.Sobol(2 * n + 1, scramble=True,
                        seed=int(qd.make_rng(seed, k).integers(2 ** 63)))
        ab = (2 * sob.random(per_layer) - 1) * np.r_[np.full(2 * n, amax), bmax]
        ab = np.vstack([np.zeros(2 * n + 1), ab])  # the axis point lies in every region
        ab = ab[_in_region(ab, gamma)]
        out.append(np.column_stack([ab, np.full(len(ab), np.log2(h_max) - k)]))
    return np.concatenate(out)


def _in_region(ab, gamma):
    aa = np.sum(ab[:, :-1] ** 2, axis=-1)
    return (aa + 4) ** 2 / 16 + ab[:, -1] ** 2 < 4 * gamma * gamma


def _admissible_points(omega, c):
    """Domain points from scaled coordinates ``c = (a, b, log2 h)``."""
    h = 2.0 ** c[:, -1]
    v = c[:, :-1].copy()
    v[:, :-1] *= np.sqrt(h)[:, None]
    v[:, -1] *= h
    return geo.with_height(geo.group_mul(v, np.asarray(omega, dtype=float)), h)


def admissible_samples(omega, gamma, h_max=1.0, layers=16, per_layer=64, seed=0,
                       gamma_ref=None):
    """Deterministic points of ``Gamma_gamma(omega)`` on heights ``h_max 2^{-k}``.

    In the scaled coordinates ``v_z = sqrt(h) a``, ``v_t = h b`` the region is
    ``(|a|^2 + 4)^2 / 16 + b^2 < 4 gamma^2`` for every height. Candidates are
    drawn once for the aperture ``gamma_ref`` and filtered, so the sample for a
    smaller aperture is a subset of the sample for a larger one. Each layer
    is a scrambled Sobol sequence with its own seed, so raising ``per_layer``
    only adds points.
    """
    c = _admissible_coords(omega, gamma, h_max, layers, per_layer, seed, gamma_ref)
    return _admissible_points(omega, c)


def admissible_max(F, omega, gamma, h_max=1.0, layers=16, per_layer=64, seed=0,
                   gamma_ref=None, rounds=0, top=16, proposals=16):
    """``max |F|`` over ``Gamma_gamma(omega)``; a lower bound of ``M_gamma F(omega)``.

    Starts from :func:`admissible_samples`. Each of ``rounds`` hill-climbing
    rounds perturbs the ``top`` best points in the scaled coordinates
    ``(a, b, log2 h)`` with a step that halves every round, keeping heights
    at most ``h_max``. ``F`` takes a batch of domain points.
    """
    c = _admissible_coords(omega, gamma, h_max, layers, per_layer, seed, gamma_ref)
    vals = np.abs(np.asarray(F(_admissible_points(omega, c)), dtype=float))
    rng = qd.make_rng(seed, layers + 1)
    scale = np.r_[np.full(c.shape[1] - 2, np.sqrt(8 * gamma - 4)), 2 * gamma, 1.0]
    for r in range(rounds):
        best = c[np.argsort(vals)[-top:]]
        step = 0.25 * 0.5 ** r * scale
        cand = (best[:, None, :] + rng.normal(size=(len(best), proposals, c.shape[1])) * step)
        cand = cand.reshape(-1, c.shape[1])
        cand = cand[_in_region(cand[:, :-1], gamma) & (cand[:, -1] <= np.log2(h_max))]
        if len(cand) == 0:
            continue
        cv = np.abs(np.asarray(F(_admissible_points(omega, cand)), dtype=float))
        c = np.concatenate([c, cand])
        vals = np.concatenate([vals, cv])
    return float(vals.max())


# ------------------------------------------------------------- capacity

@dataclass
class CapacityCertificate:
    value: float
    primal: GridDensity | None
    dual: AtomicMeasure | None
    gap: float
    primal_value: float = 0.0
    dual_value: float = 0.0
    grid: Grid | None = None
    a_nodes: np.ndarray | None = None
    potential: np.ndarray | None = None  # discrete I_alpha(I_alpha mu) on A-nodes
    energy: float = 0.0
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def rel_gap(self):
        return self.gap / self.primal_value if self.primal_value > 0 else 0.0

    def triple(self):
        """``(mu(A), int (I_alpha mu)^2, capacity)``."""
        return (self.dual.total if self.dual is not None else 0.0, self.energy, self.value)

    def equilibrium_fraction(self, lo=0.9, hi=1.0, tol=1e-6):
        if self.potential is None or self.potential.size == 0:
            return 1.0
        p = self.potential
        return float(np.mean((p >= lo - tol) & (p <= hi + tol)))

    def to_dict(self):
        d = {"value": self.value, "gap": self.gap, "rel_gap": self.rel_gap,
             "primal_value": self.primal_value, "dual_value": self.dual_value,
             "energy": self.energy, "iterations": self.iterations,
             "grid": self.grid.to_dict() if self.grid is not None else None,
             "a_nodes": int(0 if self.a_nodes is None else len(self.a_nodes))}
        d.update(self.info)
        if self.dual is not None:
            d["atoms"] = self.dual.to_dict()["atoms"]
        return d


def _empty_certificate(grid=None):
    return CapacityCertificate(0.0, None, AtomicMeasure.empty(), 0.0, grid=grid,
                               a_nodes=np.zeros(0, dtype=int), potential=np.zeros(0))


def _setup(alpha, A, grid, threads):
    n = A.n
    check_alpha(alpha, n, main_theorem=True)
    if isinstance(grid, GridSpec) or grid is None:
        grid = Grid.around(A, grid or GridSpec())
    rows = np.nonzero(A.contains(grid.nodes()))[0]
    if rows.size == 0:
        raise InfeasibleDiscretizationError("no grid node lies in A; refine the grid")
    G = _gram(alpha, grid, rows, threads)
    return grid, rows, G


def nnqp_fista(G, tol=1e-8, max_iter=10_000):
    """Minimise ``mu^T G mu / 2 - sum mu`` over ``mu >= 0``.

    Accelerated projected gradient with adaptive restart, followed by an exact
    solve on the detected support. Returns ``(mu, iterations, kkt_residual)``.
    """
    m = len(G)
    L = float(np.linalg.eigvalsh(G)[-1])
    step = 1.0 / L
    mu = np.full(m, 1.0 / G.sum(axis=1).max())
    y = mu.copy()
    t = 1.0
    scale = 1.0 / np.max(np.diag(G))

    def kkt(v):
        g = G @ v - 1.0
        return float(np.max(np.abs(np.minimum(v / scale, g))))

    it = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        g = G @ y - 1.0
        new = np.maximum(y - step * g, 0.0)
        if np.dot(g, new - mu) > 0:  # restart when momentum points uphill
            t = 1.0
            y = mu.copy()
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = new + (t - 1) / t_new * (new - mu)
        mu, t = new, t_new
        if it % 25 == 0:
            res = kkt(mu)
            if res < tol:
                break
            pol = _polish(G, mu, tol)
            if pol is not None:
                return pol, it, kkt(pol)
    res = kkt(mu)
    pol = _polish(G, mu, tol)
    if pol is not None and kkt(pol) <= res:
        return pol, it, kkt(pol)
    return mu, it, res


def _polish(G, mu, tol):
    S = mu > 1e-12 * max(mu.max(), 1e-300)
    if not np.any(S):
        return None
    try:
        x = np.linalg.solve(G[np.ix_(S, S)], np.ones(S.sum()))
    except np.linalg.LinAlgError:
        return None
    if np.any(x <= 0):
        return None
    out = np.zeros_like(mu)
    out[S] = x
    if np.all(G[~S][:, S] @ x >= 1.0 - tol):
        return out
    return None


def _certificate(alpha, grid, rows, G, mu, iters, res, threads, method):
    Gmu = G @ mu
    supp = mu > 1e-6 * mu.max()
    dual_scale = 1.0 / Gmu[supp].max()
    dual_mu = mu * dual_scale
    dual_value = float(dual_mu.sum())
    primal_scale = 1.0 / Gmu.min()
    energy_raw = float(mu @ Gmu)
    primal_value = energy_raw * primal_scale ** 2
    # primal density on the grid: f = I_AN^T mu, scaled to be feasible
    nodes = grid.nodes()
    f = np.zeros(grid.size)
    X = nodes[rows]
    diag = cell_average_kernel(alpha, grid)
    for s in range(0, grid.size, BLOCK):
        M = riesz_matrix(alpha, X, nodes[s:s + BLOCK], diag, threads)
        f[s:s + BLOCK] = mu @ M
    f *= primal_scale
    atoms = AtomicMeasure(geo.with_height(X, 0.0), dual_mu)
    return CapacityCertificate(
        value=primal_value, primal=GridDensity(grid, f), dual=atoms,
        gap=primal_value - dual_value, primal_value=primal_value, dual_value=dual_value,
        grid=grid, a_nodes=rows, potential=Gmu * dual_scale,
        energy=float(dual_mu @ (G @ dual_mu)), iterations=iters,
        info={"method": method, "kkt_residual": res})


def capacity_primal(alpha, A: geo.BallFamily, grid=None, tol=1e-8, max_iter=10_000,
                    threads=1, fail_tol=1e-4) -> CapacityCertificate:
    """Discrete capacity ``min ||f||^2`` with ``f >= 0`` and ``I_alpha f >= 1`` on A-nodes.

    ``grid`` is a :class:`GridSpec` (grid built around ``A``) or a prebuilt
    :class:`Grid`. The value is the norm of a feasible density, so it is an
    upper bound for the discrete problem; the dual value is a lower bound.
    """
    if len(A) == 0:
        return _empty_certificate(grid if isinstance(grid, Grid) else None)
    grid, rows, G = _setup(alpha, A, grid, threads)
    mu, iters, res = nnqp_fista(G, tol, max_iter)
    if res > fail_tol:
        raise SolverError(f"projected gradient stalled at KKT residual {res:.3g}")
    return _certificate(alpha, grid, rows, G, mu, iters, res, threads, "primal")


def capacity_dual(alpha, A: geo.BallFamily, grid=None, tol=1e-10, max_iter=20_000,
                  threads=1, fail_tol=1e-3) -> CapacityCertificate:
    """Maximise ``mu(A)`` over atoms on A-nodes with ``I_alpha(I_alpha mu) <= 1`` on the support.

    Multiplicative updates ``mu <- mu / (G mu)`` (entrywise), rescaled after
    each step so that the largest potential on the support is one.
    """
    if len(A) == 0:
        return _empty_certificate(grid if isinstance(grid, Grid) else None)
    grid, rows, G = _setup(alpha, A, grid, threads)
    mu = 1.0 / G.sum(axis=1)
    prev = -np.inf
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = mu / (G @ mu)
        Gmu = G @ mu
        supp = mu > 1e-6 * mu.max()
        mu = mu / Gmu[supp].max()
        val = mu.sum()
        res = abs(val - prev) / val
        if res < tol:
            break
        prev = val
    if res > fail_tol:
        raise SolverError(f"multiplicative updates stalled (relative change {res:.3g})")
    return _certificate(alpha, grid, rows, G, mu, it, float(res), threads, "dual")


def capacity_margin_sweep(alpha, A, shape=(32, 32, 32), margins=(1.0, 2.0, 4.0), **kw):
    """Capacity values for several grid margins (the box truncation is not controlled)."""
    return [(m, capacity_primal(alpha, A, GridSpec(shape, m), **kw)) for m in margins]


def capacity_exponent(n, alpha):
    """Homogeneity exponent ``2n + 2 - 4 alpha`` of ``cap_alpha``."""
    return 2 * n + 2 - 4 * alpha


# ----------------------------------------------- strong capacitary functional

def covering_family(grid: Grid, mask):
    """Balls of radius one grid spacing around the selected nodes."""
    n = grid.n
    r = float(max(np.max(grid.spacing[:2 * n]), np.sqrt(grid.spacing[-1])))
    nodes = grid.nodes()[np.asarray(mask)]
    return geo.BallFamily(nodes, np.full(len(nodes), r))


def default_levels(count=16, lo=0.01, hi=1.0):
    return np.geomspace(lo, hi, count)


def strong_cap_functional(alpha, f: GridDensity, levels=None, cap_grid=GridSpec((12, 12, 12), 1.0),
                          threads=1):
    """Riemann-sum approximation of ``int cap_alpha({I_alpha f > lam}) lam dlam``.

    ``levels`` are fractions of ``max I_alpha f`` on the nodes of ``f``'s
    grid. Each superlevel node set is covered by balls of one grid spacing
    and its capacity computed on ``cap_grid``. Returns
    ``(value, value / ||f||^2, table)`` where the table lists
    ``(level, nodes, capacity)``.
    """
    levels = default_levels() if levels is None else np.sort(np.asarray(levels, dtype=float))
    if levels.size == 0:
        raise ValueError("level schedule is empty")
    norm = f.l2_norm_sq()
    if norm == 0:
        return 0.0, 0.0, []
    g = f.grid
    pot = np.zeros(g.size)
    nz = np.nonzero(f.values)[0]
    diag = cell_average_kernel(alpha, g)
    nodes = g.nodes()
    for s in range(0, g.size, BLOCK):
        M = riesz_matrix(alpha, nodes[s:s + BLOCK], nodes[nz], diag, threads)
        pot[s:s + BLOCK] = M @ f.weights[nz]
    top = pot.max()
    lam = levels * top
    caps = []
    table = []
    for frac, l in zip(levels, lam):
        mask = pot > l
        if not np.any(mask):
            caps.append(0.0)
            table.append((float(frac), 0, 0.0))
            continue
        E = covering_family(g, mask)
        c = capacity_primal(alpha, E, cap_grid, threads=threads).value
        caps.append(c)
        table.append((float(frac), int(mask.sum()), c))
    caps = np.array(caps)
    # trapezoid rule in lam^2 / 2 between levels; below the first level cap is
    # at least cap(lam_0), which contributes cap(lam_0) lam_0^2 / 2
    sq = 0.5 * lam ** 2
    value = float(caps[0] * sq[0] + np.sum(0.5 * (caps[1:] + caps[:-1]) * np.diff(sq)))
    return value, value / norm, table


def bump_density(grid: Grid, center, radius, height=1.0, power=2):
    """``height (1 - (d / radius)^2)^power`` inside ``B(center, radius)``."""
    d = geo.hdist(grid.nodes(), np.asarray(center, dtype=float))
    v = np.where(d < radius, height * np.clip(1 - (d / radius) ** 2, 0, None) ** power, 0.0)
    return GridDensity(grid, v)


# ---------------------------------------------------------------- estimator

class RieszCapacity(BaseEstimator):
    """Estimator wrapper: ``fit(A)`` computes the discrete capacity of a ball family.

    Parameters mirror :func:`capacity_primal`; ``method`` selects the primal
    (projected gradient) or dual (multiplicative update) solver.
    """

    def __init__(self, alpha=0.75, shape=(32, 32, 32), margin=2.0, method="primal",
                 tol=1e-8, max_iter=10_000, threads=1):
        self.alpha = alpha
        self.shape = shape
        self.margin = margin
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.threads = threads

    def fit(self, A, y=None):
        if self.method not in ("primal", "dual"):
            raise ValueError(f"unknown method {self.method!r}")
        spec = GridSpec(self.shape, self.margin)
        solver = capacity_primal if self.method == "primal" else capacity_dual
        self.certificate_ = solver(self.alpha, A, spec, tol=self.tol, max_iter=self.max_iter,
                                   threads=self.threads)
        self.capacity_ = self.certificate_.value
        return self

    def transform(self, X):
        """Equilibrium potential ``I_alpha(f)`` of the fitted primal density at ``X``."""
        if not hasattr(self, "certificate_"):
            raise AttributeError("RieszCapacity is not fitted")
        if self.certificate_.primal is None:
            return np.zeros(len(np.atleast_2d(X)))
        return riesz_potential(self.alpha, self.certificate_.primal, X)
