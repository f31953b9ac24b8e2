import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad
from scipy.special import gamma as G

from siegelcap import geometry as geo
from siegelcap import kernels as K
from siegelcap._validation import DomainError, ParameterRangeError, SingularKernelError

RNG = np.random.default_rng(2024)
H1 = geo.Heisenberg(1)


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_kernel_modulus_equals_riesz_kernel(alpha):
    x, y = H1.random_h(RNG, 10_000), H1.random_h(RNG, 10_000)
    lhs, rhs = K.kernel_gauge_identity(alpha, x, y)
    assert np.max(np.abs(lhs / rhs - 1)) <= 1e-10


def test_riesz_kernel_hand_value():
    # d = 1 at x = [2, 0]; I_alpha = Gamma(2 - a) / (2^a (2 pi)^2)
    a = 0.75
    val = K.riesz_kernel(a, geo.hpoint(2.0, 0.0), np.zeros(3))
    assert val == pytest.approx(G(2 - a) / (2 ** a * (2 * np.pi) ** 2), rel=1e-14)


def test_foliated_and_complex_kernels_agree():
    u, v = H1.random_u(RNG, 500), H1.random_u(RNG, 500)
    for a in (0.3, 0.75, 0.95):
        np.testing.assert_allclose(K.hs_kernel_u(a, u, v),
                                   K.hs_kernel(a, geo.psi_inv(u), geo.psi_inv(v)), rtol=1e-11)


def test_kernel_hermitian_and_positive_diagonal():
    u, v = H1.random_u(RNG, 200), H1.random_u(RNG, 200)
    np.testing.assert_allclose(K.hs_kernel_u(0.75, u, v), np.conj(K.hs_kernel_u(0.75, v, u)),
                               rtol=1e-13)
    d = K.hs_kernel_u(0.75, u, u)
    assert np.all(np.abs(d.imag) <= 1e-14 * d.real) and np.all(d.real > 0)


def test_kernel_gram_is_positive_semidefinite():
    u = H1.random_u(RNG, 12)
    Gm = K.hs_kernel_u(0.75, u[None, :, :], u[:, None, :])
    assert np.linalg.eigvalsh(Gm).min() > -1e-12 * np.abs(Gm).max()


def test_display_form_is_four_to_alpha_times_kernel():
    u, v = H1.random_u(RNG, 50), H1.random_u(RNG, 50)
    for a in (0.6, 0.75):
        np.testing.assert_allclose(K.hs_kernel_display(a, u, v), 4 ** a * K.hs_kernel_u(a, u, v),
                                   rtol=1e-13)


def test_kernel_real_part_bound():
    # Re beta^{-s} >= cos(s pi / 2) |beta^{-s}| since |arg beta| < pi / 2
    u, v = H1.random_u(RNG, 2000), H1.random_u(RNG, 2000)
    a = 0.75
    k = K.hs_kernel_u(a, u, v)
    s = 2 - 2 * a
    assert np.all(k.real >= np.cos(s * np.pi / 2) * np.abs(k) * (1 - 1e-12))


@pytest.mark.parametrize("m", [1, 2, 3])
def test_vertical_derivative_against_finite_differences(m):
    omega = geo.psi_inv(H1.random_u(RNG, 1))[0]
    zeta = geo.psi_inv(H1.random_u(RNG, 1))[0]
    a, h = 0.75, 1e-3
    e = np.array([0, 1.0])

    def f(x):
        return K.hs_kernel(a, omega + x * e, zeta)

    # central differences along the real direction of omega_{n+1}
    if m == 1:
        fd = (f(h) - f(-h)) / (2 * h)
    elif m == 2:
        fd = (f(h) - 2 * f(0) + f(-h)) / h ** 2
    else:
        fd = (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h ** 3)
    exact = K.hs_kernel_vertical_derivative(a, m, omega, zeta)
    assert abs(fd - exact) <= 1e-4 * abs(exact)
    u = geo.psi(omega[None])[0]
    v = geo.psi(zeta[None])[0]
    assert K.hs_kernel_vertical_derivative_u(a, m, u, v) == pytest.approx(exact, rel=1e-10)


def test_derivative_order_validation():
    w = geo.psi_inv(H1.random_u(RNG, 1))[0]
    with pytest.raises(ParameterRangeError):
        K.hs_kernel_vertical_derivative(0.75, 1.5, w, w)


def test_poisson_kernel_forms_agree():
    u = H1.random_u(RNG, 300)
    w = H1.random_h(RNG, 300)
    Pu = K.poisson_kernel_u(u, w)
    Pc = K.poisson_kernel(geo.psi_inv(u), geo.psi_inv(geo.with_height(w, 0.0)))
    np.testing.assert_allclose(Pu, Pc, rtol=1e-10)


def test_poisson_constant_against_quadrature_n1():
    # integrand at zeta = [0, 0, 1]: 4^2 / ((r^2 + 4)^2 / 16 + t^2)^2, polar in z
    def inner(t, r):
        return 2 * np.pi * r * 16.0 / ((r * r + 4) ** 2 / 16 + t * t) ** 2
    val, _ = dblquad(inner, 0, 50, -200, 200, epsabs=1e-10)
    # t integral in closed form: int dt / (A^2 + t^2)^2 = pi / (2 A^3)
    exact, _ = quad(lambda r: 2 * np.pi * r * 16.0 * np.pi / (2 * ((r * r + 4) / 4) ** 3),
                    0, np.inf, epsabs=1e-12)
    assert K.poisson_constant(1) == pytest.approx(exact, rel=1e-9)
    assert K.poisson_constant(1) == pytest.approx(val, rel=1e-3)


def test_poisson_constant_against_quadrature_n2():
    # t integral in closed form: int dt / (A^2 + t^2)^3 = 3 pi / (8 A^5)
    def radial(r):
        A = (r * r + 4) / 4
        return 2 * np.pi ** 2 * r ** 3 * 4 ** 3 * 3 * np.pi / (8 * A ** 5)
    val, _ = quad(radial, 0, np.inf, epsabs=1e-12)
    assert K.poisson_constant(2) == pytest.approx(val, rel=1e-8)


def test_poisson_kernel_is_left_invariant_in_height_scaling():
    u = geo.upoint(0.0, 0.0, 1.0)
    w = H1.random_h(RNG, 100)
    r = 1.7
    np.testing.assert_allclose(K.poisson_kernel_u(geo.dilate(r, u), geo.dilate_h(r, w)),
                               r ** -4 * K.poisson_kernel_u(u, w), rtol=1e-12)


@settings(max_examples=200)
@given(st.floats(1.01, 8.0), st.integers(0, 2 ** 31))
def test_admissible_definitions_agree(gamma, seed):
    rng = np.random.default_rng(seed)
    w = H1.random_h(rng, 1)[0]
    u = geo.with_height(geo.group_mul(H1.random_h(rng, 200, 0.7), w), np.exp(rng.uniform(-3, 1, 200)))
    a = K.admissible_region_contains(gamma, geo.psi_inv(geo.with_height(w, 0.0)), geo.psi_inv(u))
    b = K.admissible_region_contains_u(gamma, w, u)
    margin = K.admissible_margin(gamma, geo.psi_inv(geo.with_height(w, 0.0)), geo.psi_inv(u))
    assert np.all((a == b) | (np.abs(margin) < 1e-9))


def test_admissible_axis_point_and_gamma_validation():
    w = np.zeros(3)
    assert K.admissible_region_contains_u(2.0, w, geo.upoint(0.0, 0.0, 0.5))
    with pytest.raises(ParameterRangeError):
        K.admissible_region_contains_u(1.0, w, geo.upoint(0.0, 0.0, 0.5))


def test_kernel_errors():
    x = np.zeros(3)
    with pytest.raises(SingularKernelError):
        K.riesz_kernel(0.75, x, x)
    with pytest.raises(SingularKernelError):
        K.hs_kernel_u(0.75, geo.with_height(x, 0.0), geo.with_height(x, 0.0))
    with pytest.raises(ParameterRangeError):
        K.hs_kernel_u(1.0, geo.upoint(0.0, 0.0, 1.0), geo.upoint(0.0, 0.0, 1.0))
    with pytest.raises(DomainError):
        K.poisson_kernel_u(geo.upoint(0.0, 0.0, 0.0), x)
