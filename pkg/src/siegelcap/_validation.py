"""Exceptions and input checks shared across the package."""
from __future__ import annotations

import numbers

import numpy as np


class SiegelcapError(Exception):
    pass


class DimensionError(SiegelcapError, ValueError):
    pass


class DomainError(SiegelcapError, ValueError):
    """Point outside the set where an operation is defined."""


class SingularKernelError(SiegelcapError, ValueError):
    """Kernel evaluated on its singular set (coincident points)."""


class ParameterRangeError(SiegelcapError, ValueError):
    pass


class NonFiniteIntegrandError(SiegelcapError, FloatingPointError):
    def __init__(self, point):
        self.point = np.asarray(point)
        super().__init__(f"integrand is not finite at {self.point.tolist()}")


class SolverError(SiegelcapError, RuntimeError):
    """Iterative solver failed to reach tolerance."""


class InfeasibleDiscretizationError(SiegelcapError, ValueError):
    pass


def check_positive(x, name):
    if not np.all(np.asarray(x) > 0):
        raise ParameterRangeError(f"{name} must be positive, got {x}")
    return x


def check_alpha(alpha, n, main_theorem=False):
    """Validate ``0 < alpha < (n+1)/2``; with ``main_theorem`` also ``alpha > n/2``."""
    if not isinstance(alpha, numbers.Real):
        raise ParameterRangeError(f"alpha must be real, got {alpha!r}")
    lo = n / 2.0 if main_theorem else 0.0
    if not (lo < alpha < (n + 1) / 2.0):
        raise ParameterRangeError(
            f"alpha={alpha} outside ({lo}, {(n + 1) / 2.0}) for n={n}")
    return float(alpha)


def check_gamma(gamma):
    if not gamma > 1:
        raise ParameterRangeError(f"aperture gamma must exceed 1, got {gamma}")
    return float(gamma)


def check_interior(u, name="point"):
    u = np.asarray(u, dtype=float)
    if np.any(u[..., -1] <= 0):
        raise DomainError(f"{name} must lie in the open domain (h > 0)")
    return u


def check_distinct(points, name="centers", atol=1e-14):
    pts = np.asarray(points, dtype=float).reshape(-1, np.shape(points)[-1])
    if len(pts) < 2:
        return
    diff = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=-1)
    np.fill_diagonal(diff, np.inf)
    if np.any(diff <= atol):
        i, j = np.argwhere(diff <= atol)[0]
        raise ValueError(f"duplicate {name} at indices {i} and {j}")
