"""Closed-form kernels: Riesz, Hardy-Sobolev reproducing kernel, Poisson.

The reproducing kernel of ``H^2_alpha`` is

    K_alpha(omega, zeta) = Gamma(n+1-2 alpha) / (4 pi)^{n+1} * beta^{-(n+1-2 alpha)},
    beta = (omega_{n+1} - conj zeta_{n+1}) / (2i) - omega' . conj(zeta') / 4,

holomorphic in ``omega``. In foliated coordinates ``omega = [w,s,k]``,
``zeta = [z,t,h]`` one has ``2 beta = h + k + |w-z|^2/4 - i(s - t + Im(w.conj z)/2)``,
so ``Re beta > 0`` away from the diagonal of the boundary and the principal
branch of the power is used throughout.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import factorial, poch

from . import geometry as geo
from ._validation import (DomainError, ParameterRangeError, SingularKernelError,
                          check_gamma)


def _check_kernel_alpha(alpha, n):
    if not (0 < alpha < (n + 1) / 2.0):
        raise ParameterRangeError(f"alpha={alpha} outside (0, {(n + 1) / 2}) for n={n}")


# ------------------------------------------------------------------ Riesz

def riesz_constant(alpha, n):
    return gamma_fn(n + 1 - alpha) / (2.0 ** alpha * (2 * np.pi) ** (n + 1))


def riesz_radial(alpha, n, d):
    """``I_alpha`` as a function of the gauge distance ``d``."""
    return riesz_constant(alpha, n) * np.asarray(d, dtype=float) ** (-(2 * n + 2 - 2 * alpha))


def riesz_kernel(alpha, x, y):
    """Riesz kernel ``Gamma(n+1-a) / (2^a (2 pi)^{n+1} d(x,y)^{2n+2-2a})``."""
    n = geo.dim_of(x)
    if not 0 < alpha < n + 1:
        raise ParameterRangeError(f"alpha={alpha} outside (0, {n + 1})")
    d = geo.hdist(x, y)
    if np.any(d == 0):
        raise SingularKernelError("Riesz kernel evaluated at coincident points")
    return riesz_radial(alpha, n, d)


# ------------------------------------------------------- Hardy-Sobolev kernel

def hs_constant(alpha, n):
    return gamma_fn(n + 1 - 2 * alpha) / (4 * np.pi) ** (n + 1)


def siegel_base(omega, zeta):
    """``(omega_{n+1} - conj zeta_{n+1}) / (2i) - omega'.conj(zeta') / 4``."""
    omega = np.asarray(omega, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    if omega.shape[-1] != zeta.shape[-1]:
        raise geo.DimensionError("points of different dimension")
    return ((omega[..., -1] - np.conj(zeta[..., -1])) / 2j
            - 0.25 * np.sum(omega[..., :-1] * np.conj(zeta[..., :-1]), axis=-1))


def u_base(u, v):
    """``2 beta`` in foliated coordinates for ``omega = Psi^{-1} u``, ``zeta = Psi^{-1} v``.

    Equals ``h + k + |w-z|^2/4 - i(s - t + Im(w.conj z)/2)``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w, s = geo.split(u[..., :-1])
    z, t = geo.split(v[..., :-1])
    re = u[..., -1] + v[..., -1] + 0.25 * np.sum(np.abs(w - z) ** 2, axis=-1)
    im = s - t + 0.5 * np.imag(np.sum(w * np.conj(z), axis=-1))
    return re - 1j * im


def _power(base, expo):
    if np.any(base == 0):
        raise SingularKernelError("kernel evaluated on the boundary diagonal")
    if np.any(base.real < 0):
        # cannot happen for points of the closed domain
        raise DomainError("kernel base left the right half-plane")
    return base ** (-expo)


def hs_kernel(alpha, omega, zeta):
    """``K_alpha(omega, zeta)`` from the C^{n+1} definition."""
    omega = np.asarray(omega, dtype=complex)
    n = omega.shape[-1] - 1
    _check_kernel_alpha(alpha, n)
    return hs_constant(alpha, n) * _power(siegel_base(omega, zeta), n + 1 - 2 * alpha)


def hs_kernel_u(alpha, u, v):
    """``K_alpha`` evaluated from foliated coordinates (fast path)."""
    n = geo.udim_of(u)
    _check_kernel_alpha(alpha, n)
    return hs_constant(alpha, n) * _power(0.5 * u_base(u, v), n + 1 - 2 * alpha)


def hs_kernel_display(alpha, u, v):
    """``Gamma(n+1-2a) / (2 pi)^{n+1} * (2 beta)^{-(n+1-2a)}``.

    This is the closed form appearing at the end of the fractional
    differentiation computation. It equals ``2^{2 alpha} K_alpha``; it is not
    the reproducing kernel and is kept only for cross-checks.
    """
    n = geo.udim_of(u)
    return gamma_fn(n + 1 - 2 * alpha) / (2 * np.pi) ** (n + 1) * _power(
        u_base(u, v), n + 1 - 2 * alpha)


def hs_kernel_vertical_derivative(alpha, m, omega, zeta):
    """``d^m / d omega_{n+1}^m K_alpha(omega, zeta)``.

    Each derivative of ``beta`` is ``1/(2i)``, so the result is
    ``C (-1)^m (s)_m (2i)^{-m} beta^{-(s+m)}`` with ``s = n+1-2 alpha``.
    """
    if int(m) != m or m < 0:
        raise ParameterRangeError("derivative order must be a nonnegative integer")
    omega = np.asarray(omega, dtype=complex)
    n = omega.shape[-1] - 1
    _check_kernel_alpha(alpha, n)
    s = n + 1 - 2 * alpha
    pref = hs_constant(alpha, n) * (-1.0) ** m * poch(s, m) * (2j) ** (-m)
    return pref * _power(siegel_base(omega, zeta), s + m)


def hs_kernel_vertical_derivative_u(alpha, m, u, v):
    n = geo.udim_of(u)
    _check_kernel_alpha(alpha, n)
    s = n + 1 - 2 * alpha
    pref = hs_constant(alpha, n) * (-1.0) ** m * poch(s, m) * (2j) ** (-m)
    return pref * _power(0.5 * u_base(u, v), s + m)


def kernel_gauge_identity(alpha, x, y):
    """Both sides of ``|K_{alpha/2}(x, y)| = I_alpha(x, y)`` on boundary points.

    The left side is evaluated through the C^{n+1} definition at
    ``Psi^{-1}[x, 0]`` and ``Psi^{-1}[y, 0]``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(geo.hdist(x, y) == 0):
        raise SingularKernelError("coincident boundary points")
    lhs = np.abs(hs_kernel(alpha / 2.0, geo.psi_inv(geo.with_height(x, 0.0)),
                           geo.psi_inv(geo.with_height(y, 0.0))))
    rhs = riesz_kernel(alpha, x, y)
    return lhs, rhs


# ------------------------------------------------------------------ Poisson

def poisson_kernel(zeta, omega):
    """Unnormalised Poisson kernel ``rho(zeta)^{n+1} / |beta(zeta, omega)|^{2(n+1)}``."""
    zeta = np.asarray(zeta, dtype=complex)
    n = zeta.shape[-1] - 1
    r = geo.rho(zeta)
    if np.any(r <= 0):
        raise DomainError("Poisson kernel needs an interior first argument")
    return r ** (n + 1) / np.abs(siegel_base(zeta, omega)) ** (2 * (n + 1))


def poisson_kernel_u(u, w):
    """Poisson kernel for ``u = [z,t,h]`` interior and Heisenberg point ``w``.

    Equals ``4^{n+1} h^{n+1} / d(u, w)^{4(n+1)}``.
    """
    u = np.asarray(u, dtype=float)
    n = geo.udim_of(u)
    h = u[..., -1]
    if np.any(h <= 0):
        raise DomainError("Poisson kernel needs an interior first argument")
    b = 0.5 * u_base(u, geo.with_height(w, 0.0))
    return h ** (n + 1) / np.abs(b) ** (2 * (n + 1))


def poisson_constant(n):
    """``c_P(n) = int P(zeta, .) dH = (4 pi)^{n+1} / n!`` (independent of zeta).

    Derived by integrating the kernel in closed form; Monte-Carlo
    confirmation lives in :func:`siegelcap.quadrature.estimate_poisson_constant`.
    """
    return float((4 * np.pi) ** (n + 1) / factorial(n))


# ------------------------------------------------------- admissible regions

def admissible_region_contains(gamma, omega, zeta):
    """``|beta(zeta, omega)| < gamma rho(zeta)`` in C^{n+1} coordinates."""
    check_gamma(gamma)
    zeta = np.asarray(zeta, dtype=complex)
    return np.abs(siegel_base(zeta, omega)) < gamma * geo.rho(zeta)


def admissible_region_contains_u(gamma, w, u):
    """``d([z,t,h], [w,s]) < sqrt(2 gamma h)`` in foliated coordinates."""
    check_gamma(gamma)
    u = np.asarray(u, dtype=float)
    return geo.dist(u, geo.with_height(w, 0.0)) < np.sqrt(2 * gamma * u[..., -1])


def admissible_margin(gamma, omega, zeta):
    """Signed slack of the C^{n+1} inequality, normalised by ``gamma rho``."""
    zeta = np.asarray(zeta, dtype=complex)
    r = gamma * geo.rho(zeta)
    return (r - np.abs(siegel_base(zeta, omega))) / r
