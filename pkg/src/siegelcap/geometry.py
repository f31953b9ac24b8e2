"""Heisenberg group algebra and the coordinates of the Siegel domain.

Array layout
------------
A Heisenberg point ``[z, t]`` with ``z`` in C^n is stored as a real array of
length ``2n + 1``: ``[Re z_1, Im z_1, ..., Re z_n, Im z_n, t]``. A point of the
closed foliated domain ``[z, t, h]`` appends the height, giving length
``2n + 2``. Points of C^{n+1} (the Siegel domain itself) are complex arrays of
length ``n + 1``. Every function accepts leading batch dimensions.

The affine maps ``L_g`` of the Siegel domain act on Heisenberg coordinates by
*right* multiplication, ``psi(L_g zeta) = [x . g, h]``, and the gauge distance
``d(p, q) = |p . q^{-1}|`` is invariant under that action.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn

from ._validation import DimensionError, DomainError, check_positive


def dim_of(p: np.ndarray) -> int:
    """Complex dimension n of a Heisenberg (2n+1) array."""
    d = np.shape(p)[-1]
    if d < 3 or d % 2 == 0:
        raise DimensionError(f"a Heisenberg point needs odd length >= 3, got {d}")
    return (d - 1) // 2


def udim_of(u: np.ndarray) -> int:
    d = np.shape(u)[-1]
    if d < 4 or d % 2 == 1:
        raise DimensionError(f"a domain point needs even length >= 4, got {d}")
    return (d - 2) // 2


def split(p):
    """Return ``(z, t)`` with complex ``z`` of shape (..., n)."""
    p = np.asarray(p, dtype=float)
    n = dim_of(p)
    z = p[..., 0:2 * n:2] + 1j * p[..., 1:2 * n:2]
    return z, p[..., 2 * n]


def join(z, t):
    z = np.asarray(z, dtype=complex)
    t = np.asarray(t, dtype=float)
    n = z.shape[-1]
    out = np.empty(np.broadcast_shapes(z.shape[:-1], t.shape) + (2 * n + 1,))
    out[..., 0:2 * n:2] = z.real
    out[..., 1:2 * n:2] = z.imag
    out[..., 2 * n] = t
    return out


def hpoint(z, t) -> np.ndarray:
    """Build a single Heisenberg point from a complex vector and a real."""
    return join(np.atleast_1d(np.asarray(z, dtype=complex)), float(t))


def upoint(z, t, h) -> np.ndarray:
    return np.append(hpoint(z, t), float(h))


def base_of(u):
    u = np.asarray(u, dtype=float)
    udim_of(u)
    return u[..., :-1]


def height_of(u):
    return np.asarray(u, dtype=float)[..., -1]


def with_height(p, h):
    p = np.asarray(p, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), p.shape[:-1])
    return np.concatenate([p, h[..., None]], axis=-1)


def _herm(z, w):
    """Sum_j z_j conj(w_j)."""
    return np.sum(z * np.conj(w), axis=-1)


def _same_dim(p, q):
    if np.shape(p)[-1] != np.shape(q)[-1]:
        raise DimensionError(
            f"dimension mismatch: {np.shape(p)[-1]} vs {np.shape(q)[-1]}")


# ---------------------------------------------------------------- group law

def group_mul(p, q):
    """Group product ``[z + w, t + s - Im(z . conj w) / 2]``."""
    _same_dim(p, q)
    z, t = split(p)
    w, s = split(q)
    return join(z + w, t + s - 0.5 * np.imag(_herm(z, w)))


def group_inv(p):
    return -np.asarray(p, dtype=float)


def dilate_h(r, p):
    """Heisenberg dilation ``[rz, r^2 t]``."""
    check_positive(r, "r")
    p = np.array(p, dtype=float)
    p[..., :-1] *= r
    p[..., -1] *= r * r
    return p


def dilate_h_vec(r, p):
    """Dilation with one factor per point (``r`` broadcasts over the batch)."""
    p = np.array(p, dtype=float)
    r = np.asarray(r, dtype=float)[..., None]
    p[..., :-1] *= r
    p[..., -1:] *= r * r
    return p


def dilate(r, u):
    """Dilation ``[rz, r^2 t, r^2 h]`` of domain points."""
    check_positive(r, "r")
    u = np.array(u, dtype=float)
    udim_of(u)
    u[..., :-2] *= r
    u[..., -2:] *= r * r
    return u


# ------------------------------------------------------------------ gauges

def gauge(u):
    """Extended gauge ``((|z|^2 + h)^2 / 16 + t^2)^{1/4}`` on domain points."""
    u = np.asarray(u, dtype=float)
    n = udim_of(u)
    zz = np.sum(u[..., :2 * n] ** 2, axis=-1)
    t = u[..., 2 * n]
    h = u[..., 2 * n + 1]
    if np.any(h < 0):
        raise DomainError("gauge is defined for h >= 0 only")
    return ((zz + h) ** 2 / 16.0 + t * t) ** 0.25


def hgauge(p):
    """Gauge of Heisenberg points (the ``h = 0`` slice)."""
    p = np.asarray(p, dtype=float)
    n = dim_of(p)
    zz = np.sum(p[..., :2 * n] ** 2, axis=-1)
    t = p[..., 2 * n]
    return (zz * zz / 16.0 + t * t) ** 0.25


def hdist(p, q):
    """Gauge distance ``|p . q^{-1}|`` on the Heisenberg group.

    The twist is computed as ``Im((z - w) . conj w)``, which vanishes exactly
    for ``p = q`` (the direct product can leave a rounding residue).
    """
    _same_dim(p, q)
    z, t = split(p)
    w, s = split(q)
    dz = z - w
    dt = t - s + 0.5 * np.imag(_herm(dz, w))
    zz = np.sum(np.abs(dz) ** 2, axis=-1)
    return (zz * zz / 16.0 + dt * dt) ** 0.25


def dist(u, v):
    """Extended distance ``d([z,t,h],[w,s,k]) = gauge([[z,t].[w,s]^{-1}, 4(h+k)])``.

    On boundary points this is :func:`hdist`; with ``v`` on the boundary it
    is the quantity used for admissible regions and tents.
    """
    _same_dim(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    rel = group_mul(u[..., :-1], group_inv(v[..., :-1]))
    return gauge(with_height(rel, 4.0 * (u[..., -1] + v[..., -1])))


# ----------------------------------------------------------- Siegel domain

def rho(zeta):
    """Defining function ``Im zeta_{n+1} - |zeta'|^2 / 4``."""
    zeta = np.asarray(zeta, dtype=complex)
    return zeta[..., -1].imag - 0.25 * np.sum(np.abs(zeta[..., :-1]) ** 2, axis=-1)


def psi(zeta, atol=0.0):
    """Foliated coordinates ``[zeta', Re zeta_{n+1}, rho(zeta)]``."""
    zeta = np.asarray(zeta, dtype=complex)
    h = rho(zeta)
    if np.any(h < -atol):
        raise DomainError("point lies outside the closed Siegel domain (rho < 0)")
    return with_height(join(zeta[..., :-1], zeta[..., -1].real), np.maximum(h, 0.0))


def psi_inv(u):
    """Inverse coordinates ``(z, t + i|z|^2/4 + i h)``."""
    u = np.asarray(u, dtype=float)
    udim_of(u)
    z, t = split(u[..., :-1])
    h = u[..., -1]
    last = t + 1j * (0.25 * np.sum(np.abs(z) ** 2, axis=-1) + h)
    return np.concatenate([z, last[..., None]], axis=-1)


def left_translate(g, zeta):
    """The affine map ``L_g`` of the closed Siegel domain.

    ``(zeta', zeta_{n+1}) -> (zeta' + z, zeta_{n+1} + t + i zeta'.conj(z)/2 + i|z|^2/4)``
    for ``g = [z, t]``. It preserves ``rho`` and composes as
    ``L_g o L_g' = L_{g' . g}``.
    """
    zeta = np.asarray(zeta, dtype=complex)
    z, t = split(g)
    if z.shape[-1] != zeta.shape[-1] - 1:
        raise DimensionError("translation and point have different dimensions")
    zp = zeta[..., :-1]
    last = zeta[..., -1] + t + 0.5j * _herm(zp, z) + 0.25j * np.sum(np.abs(z) ** 2, axis=-1)
    return np.concatenate([zp + z, last[..., None]], axis=-1)


def translate_u(u, g):
    """Action of ``L_g`` in foliated coordinates: ``[x, h] -> [x . g, h]``."""
    u = np.asarray(u, dtype=float)
    return with_height(group_mul(u[..., :-1], g), u[..., -1])


def cayley(b):
    """Cayley map from the unit ball of C^{n+1} onto the Siegel domain."""
    b = np.asarray(b, dtype=complex)
    den = 1.0 - b[..., -1]
    if np.any(np.abs(den) == 0.0):
        raise DomainError("Cayley map has a pole at b_{n+1} = 1")
    head = 2.0 * b[..., :-1] / den[..., None]
    last = 1j * (1.0 + b[..., -1]) / den
    return np.concatenate([head, last[..., None]], axis=-1)


# ---------------------------------------------------------------- volumes

def homogeneous_dim(n: int) -> int:
    return 2 * n + 2


def ball_volume_exact(n: int) -> float:
    """Closed form of ``c_n = |B(0, 1)|``: ``pi^n 4^n B(n/2, 3/2) / Gamma(n)``."""
    return float(np.pi ** n * 4.0 ** n * beta_fn(n / 2.0, 1.5) / gamma_fn(n))


def ball_bounding_box(n: int, r: float = 1.0):
    """Half-widths of the box ``|Re z_j|, |Im z_j| <= 2r``, ``|t| <= r^2``."""
    return np.concatenate([np.full(2 * n, 2.0 * r), [r * r]])


@dataclass
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    seed: int


def ball_volume_constant(n: int = 1, samples: int = 1_000_000, seed: int = 0,
                         radius: float = 1.0, center=None, max_stderr: float | None = None):
    """Monte-Carlo estimate of ``c_n`` from ``|B(x, r)| / r^{2n+2}``.

    Rejection sampling over the box ``|z_j| <= 2r, |t| <= r^2`` (coordinates
    relative to the center). Raises ``ValueError`` when ``max_stderr`` cannot
    be met with the given number of samples.
    """
    check_positive(radius, "radius")
    half = ball_bounding_box(n, radius)
    box_vol = float(np.prod(2 * half))
    if max_stderr is not None:
        p = min(ball_volume_exact(n) * radius ** homogeneous_dim(n) / box_vol, 0.5)
        predicted = box_vol * np.sqrt(p * (1 - p) / samples) / radius ** homogeneous_dim(n)
        if predicted > max_stderr:
            raise ValueError(
                f"budget of {samples} samples gives stderr ~{predicted:.3g} > {max_stderr}")
    rng = np.random.Generator(np.random.Philox(seed))
    hits = 0
    done = 0
    chunk = 1 << 18
    c = np.zeros(2 * n + 1) if center is None else np.asarray(center, dtype=float)
    while done < samples:
        m = min(chunk, samples - done)
        v = rng.uniform(-half, half, size=(m, 2 * n + 1))
        y = group_mul(v, c)
        hits += int(np.count_nonzero(hdist(y, c) < radius))
        done += m
    p = hits / samples
    scale = box_vol / radius ** homogeneous_dim(n)
    return VolumeEstimate(scale * p, scale * np.sqrt(p * (1 - p) / samples), samples, seed)


class Heisenberg:
    """Dimension context: validates shapes and builds points for a fixed ``n``."""

    def __init__(self, n: int = 1):
        if int(n) != n or n < 1:
            raise DimensionError(f"n must be a positive integer, got {n}")
        self.n = int(n)

    @property
    def Q(self) -> int:
        return 2 * self.n + 2

    def check_h(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 2 * self.n + 1:
            raise DimensionError(f"expected Heisenberg points of length {2 * self.n + 1}")
        return p

    def check_u(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != 2 * self.n + 2:
            raise DimensionError(f"expected domain points of length {2 * self.n + 2}")
        if np.any(u[..., -1] < 0):
            raise DomainError("height must be nonnegative")
        return u

    def identity(self):
        return np.zeros(2 * self.n + 1)

    def random_h(self, rng, size, scale=1.0):
        return rng.normal(scale=scale, size=(size, 2 * self.n + 1))

    def random_u(self, rng, size, scale=1.0, interior=True):
        p = self.random_h(rng, size, scale)
        h = rng.exponential(scale * scale, size=size) if interior else np.zeros(size)
        return with_height(p, h)

    def mul(self, p, q):
        return group_mul(self.check_h(p), self.check_h(q))

    def inv(self, p):
        return group_inv(self.check_h(p))

    def dist(self, u, v):
        return dist(self.check_u(u), self.check_u(v))

    def c_n(self) -> float:
        return ball_volume_exact(self.n)


class BallFamily:
    """Finite family of closed gauge balls ``B(c_i, r_i)`` in ``H_n``."""

    def __init__(self, centers, radii):
        centers = np.asarray(centers, dtype=float)
        if centers.ndim == 1:
            centers = centers[None, :]
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if centers.size == 0:
            centers = centers.reshape(0, centers.shape[-1] if centers.ndim == 2 else 3)
        if len(centers) != len(radii):
            raise DimensionError("one radius per center required")
        if len(radii):
            dim_of(centers)
            check_positive(radii, "radii")
        self.centers = centers
        self.radii = radii

    @classmethod
    def empty(cls, n=1):
        return cls(np.zeros((0, 2 * n + 1)), np.zeros(0))

    @property
    def n(self):
        return (self.centers.shape[-1] - 1) // 2

    def __len__(self):
        return len(self.radii)

    def __iter__(self):
        return iter(zip(self.centers, self.radii))

    def contains(self, x, closed=True):
        """Membership of Heisenberg points in the union."""
        x = np.asarray(x, dtype=float)
        if len(self) == 0:
            return np.zeros(x.shape[:-1], dtype=bool)
        d = hdist(x[..., None, :], self.centers)
        return np.any(d <= self.radii if closed else d < self.radii, axis=-1)

    def translate(self, g):
        """Image under ``x -> x . g`` (the action preserving distances)."""
        return BallFamily(group_mul(self.centers, g), self.radii.copy())

    def dilate(self, r):
        return BallFamily(dilate_h(r, self.centers), self.radii * r)

    def union(self, other):
        return BallFamily(np.concatenate([self.centers, other.centers]),
                          np.concatenate([self.radii, other.radii]))

    def subfamily(self, idx):
        idx = np.atleast_1d(idx)
        return BallFamily(self.centers[idx], self.radii[idx])

    def is_disjoint(self):
        """Sufficient test ``d(c_i, c_j) >= r_i + r_j`` (the gauge is a metric)."""
        if len(self) < 2:
            return True
        d = hdist(self.centers[:, None, :], self.centers[None, :, :])
        s = self.radii[:, None] + self.radii[None, :]
        np.fill_diagonal(d, np.inf)
        return bool(np.all(d >= s))

    def volume(self):
        """Sum of ball volumes (the union volume when disjoint)."""
        return float(ball_volume_exact(self.n) * np.sum(self.radii ** homogeneous_dim(self.n)))

    def to_dict(self):
        balls = []
        for c, r in self:
            z, t = split(c)
            balls.append({"center": {"z": [[float(v.real), float(v.imag)] for v in z],
                                     "t": float(t)}, "r": float(r)})
        return {"balls": balls}

    @classmethod
    def from_dict(cls, d, n=None):
        balls = d["balls"]
        if not balls:
            return cls.empty(n or 1)
        cs = [hpoint([complex(a, b) for a, b in ball["center"]["z"]], ball["center"]["t"])
              for ball in balls]
        return cls(np.array(cs), [ball["r"] for ball in balls])

    def __repr__(self):
        return f"BallFamily(n={self.n}, balls={len(self)})"
