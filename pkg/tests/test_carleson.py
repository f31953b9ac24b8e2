import numpy as np
import pytest
from scipy.linalg import eigh

from siegelcap import carleson as C
from siegelcap import geometry as geo
from siegelcap import kernels as K
from siegelcap import potential as P
from siegelcap import quadrature as qd
from siegelcap._validation import DomainError, ParameterRangeError, SolverError

RNG = np.random.default_rng(77)
H1 = geo.Heisenberg(1)
GRID = P.GridSpec((14, 14, 14), 1.5)


def _centers(k, rng=RNG):
    return geo.with_height(H1.random_h(rng, k, 1.0), rng.uniform(0.3, 1.5, k))


def _combo(k=3, alpha=0.75, rng=RNG):
    c = rng.normal(size=k) + 1j * rng.normal(size=k)
    return C.KernelCombo(alpha, c, _centers(k, rng))


def test_combo_roundtrip_and_evaluation():
    f = _combo(4)
    g = C.KernelCombo.from_dict(f.to_dict())
    np.testing.assert_allclose(g.centers, f.centers)
    np.testing.assert_allclose(g.coefs, f.coefs)
    u = H1.random_u(RNG, 20)
    direct = sum(c * K.hs_kernel_u(0.75, u, p) for c, p in zip(f.coefs, f.centers))
    np.testing.assert_allclose(f(u), direct, rtol=1e-12)
    assert len(C.KernelCombo.from_dict({"alpha": 0.75, "terms": []})) == 0


def test_combo_addition_merges_repeated_centers():
    f = _combo(2)
    s = f + f
    assert len(s) == 2
    u = H1.random_u(RNG, 5)
    np.testing.assert_allclose(s(u), 2 * f(u), rtol=1e-12)
    with pytest.raises(ValueError):
        f + C.KernelCombo(0.6, f.coefs, f.centers)


def test_combo_validation():
    c = _centers(2)
    with pytest.raises(geo.DimensionError):
        C.KernelCombo(0.75, [1.0], c)
    with pytest.raises(DomainError):
        C.KernelCombo(0.75, [1.0], geo.with_height(np.zeros(3), 0.0))


def test_gram_matrix_hermitian_positive_definite():
    G = C.gram_matrix(0.75, _centers(6))
    np.testing.assert_allclose(G, G.conj().T, rtol=1e-13)
    assert np.linalg.eigvalsh(G).min() > 0


def test_gram_norm_matches_pairwise_sum():
    f = _combo(3)
    s = sum(f.coefs[j] * np.conj(f.coefs[k]) * K.hs_kernel_u(0.75, f.centers[k], f.centers[j])
            for j in range(3) for k in range(3))
    assert C.hs_norm_gram(f) == pytest.approx(np.sqrt(s.real), rel=1e-12)


@pytest.mark.parametrize("m", [1, 2])
def test_volume_norm_agrees_with_gram_norm(m):
    f = _combo(2, rng=np.random.default_rng(3))
    est = C.hs_norm_volume(f, m, qd.Budget(300_000, 5))
    exact = C.hs_norm_gram(f)
    assert abs(est.value - exact) < max(4 * est.stderr, 1e-2 * exact)


def test_volume_norm_requires_integer_m_above_alpha():
    with pytest.raises(ParameterRangeError):
        C.hs_norm_volume(_combo(1), 0)
    with pytest.raises(ParameterRangeError):
        C.hs_norm_volume(_combo(1), 1.5)


def test_h2_inner_product_closed_vs_quadrature():
    zeta, omega = geo.upoint(0.2, 0.1, 0.8), geo.upoint(-0.3j, -0.4, 0.5)
    est = C.h2_inner_quadrature(0.375, zeta, omega, qd.Budget(400_000, 9))
    exact = C.h2_inner_closed(0.375, zeta, omega)
    assert abs(est.value - exact) < max(4 * est.stderr, 1e-2 * abs(exact))


def test_frac_diff_is_isometric():
    f = _combo(3)
    img = C.frac_diff(f)
    assert img.alpha == pytest.approx(0.375)
    assert C.h2_norm_closed(img) == pytest.approx(C.hs_norm_gram(f), rel=1e-12)
    est = C.h2_norm_quadrature(img, qd.Budget(400_000, 2))
    assert abs(est.value - C.hs_norm_gram(f)) < max(4 * est.stderr, 2e-2 * est.value)


def test_tent_membership_modes():
    E = geo.BallFamily(np.zeros((1, 3)), [1.0])
    inside = geo.upoint(0.0, 0.0, 0.25)   # ball radius 0.5 around the origin
    outside = geo.upoint(0.0, 0.0, 1.44)  # radius 1.2 exceeds the family
    assert C.tent_contains(E, inside) and not C.tent_contains(E, outside)
    assert C.tent_contains(E, inside, "sampled") and not C.tent_contains(E, outside, "sampled")
    # metric membership implies sampled membership
    pts = C.sample_tent(E, 200, seed=1)
    assert C.tent_contains(E, pts, "metric").all()
    assert C.tent_contains(E, pts[:20], "sampled").all()
    with pytest.raises(DomainError):
        C.tent_contains(E, geo.upoint(0.0, 0.0, 0.0))


def test_tent_measure_additive_over_disjoint_balls():
    E = geo.BallFamily(np.array([[0.0, 0.0, 0.0], [8.0, 0.0, 0.0]]), [1.0, 1.0])
    mu = P.AtomicMeasure(np.concatenate([C.sample_tent(E, 50, seed=2),
                                         geo.upoint(20.0, 0.0, 0.1)[None]]), np.ones(51))
    assert C.tent_measure(mu, E) == pytest.approx(50.0)
    assert C.tent_measure(mu, E, per_ball=True) == pytest.approx(50.0)
    assert C.tent_measure(P.AtomicMeasure.empty(), E) == 0.0


def test_subcap_ratio_errors():
    mu = P.AtomicMeasure(geo.upoint(0.0, 0.0, 0.1), [1.0])
    with pytest.raises(ZeroDivisionError):
        C.subcap_ratio(0.75, mu, geo.BallFamily.empty())
    overlap = geo.BallFamily(np.zeros((2, 3)), [1.0, 0.5])
    with pytest.raises(ValueError):
        C.subcap_ratio(0.75, mu, overlap)
    with pytest.raises(ParameterRangeError):
        C.subcap_ratio(0.2, mu, geo.BallFamily(np.zeros((1, 3)), [1.0]))


def test_subcap_ratio_translation_invariant():
    E = geo.BallFamily(np.zeros((1, 3)), [1.0])
    mu = P.AtomicMeasure(C.sample_tent(E, 30, seed=4), RNG.uniform(0.5, 1.5, 30))
    g = geo.hpoint(1.3 - 0.4j, 2.0)
    r0 = C.subcap_ratio(0.75, mu, E, GRID)
    r1 = C.subcap_ratio(0.75, mu.translate(g), E.translate(g), GRID)
    assert r1 == pytest.approx(r0, rel=1e-6)


def test_carleson_quotient_matches_generalized_eigensolver():
    cs = _centers(6)
    mu = P.AtomicMeasure(_centers(15), RNG.uniform(0.1, 1, 15))
    sys_ = C.HermitianSystem.build(0.75, cs, mu)
    res = C.carleson_quotient(sys_)
    oracle = eigh(sys_.M, sys_.G, eigvals_only=True)[-1]
    assert res.value == pytest.approx(oracle, rel=1e-9)
    # the extremal combination attains the quotient, random ones do not exceed it
    x = res.vector
    q = np.real(x.conj() @ sys_.M @ x) / np.real(x.conj() @ sys_.G @ x)
    assert q == pytest.approx(res.value, rel=1e-9)
    for _ in range(50):
        y = RNG.normal(size=6) + 1j * RNG.normal(size=6)
        assert np.real(y.conj() @ sys_.M @ y) <= res.value * np.real(y.conj() @ sys_.G @ y) * (1 + 1e-9)


def test_carleson_quotient_is_mass_of_combination():
    # x^H M x = sum_a m_a |f(zeta_a)|^2 for f = sum c_j K(., zeta_j) and x = conj(c)
    f = _combo(4)
    mu = P.AtomicMeasure(_centers(10), RNG.uniform(0.1, 1, 10))
    M = C.mass_matrix(0.75, f.centers, mu)
    x = f.coefs.conj()
    assert np.real(x.conj() @ M @ x) == pytest.approx(np.sum(mu.masses * np.abs(f(mu.points)) ** 2),
                                                      rel=1e-10)


def test_ill_conditioned_gram_prunes_or_raises():
    base = _centers(3)
    near = base.copy()
    near[0, -1] += 1e-9
    cs = np.concatenate([base, near[:1]])
    mu = P.AtomicMeasure(_centers(5), np.ones(5))
    sys_ = C.HermitianSystem.build(0.75, cs, mu)
    with pytest.raises(SolverError):
        C.carleson_quotient(sys_, prune=False)
    res = C.carleson_quotient(sys_)
    assert len(res.pruned) >= 1 and res.cond <= C.COND_MAX


def test_holomorphic_potential_norm_and_values():
    mu = P.AtomicMeasure(_centers(4), [1.0, 2.0, 0.5, 1.5])
    u = H1.random_u(RNG, 10)
    vals, combo, norm = C.holomorphic_potential(0.75, mu, 0.1, u)
    lifted = C.lift(mu, 0.1)
    direct = sum(m * K.hs_kernel_u(0.75, u, p) for m, p in zip(mu.masses, lifted))
    np.testing.assert_allclose(vals, direct, rtol=1e-12)
    assert norm == pytest.approx(C.hs_norm_gram(combo))
    with pytest.raises(ParameterRangeError):
        C.lift(mu, 0.0)
    v, c, nm = C.holomorphic_potential(0.75, P.AtomicMeasure.empty(), 0.1, u)
    assert nm == 0.0 and np.all(v == 0)


def test_necessity_check_real_part_positive():
    A = geo.BallFamily(np.zeros((1, 3)), [1.0])
    rep = C.necessity_check(0.75, A, GRID, samples=200, seed=0)
    assert rep["min_re_F"] > 0
    assert rep["norm_sq_over_cap"] > 0
    assert len(rep["eps_sweep"]) == 3


def test_sufficiency_check_reports_both_sides():
    E = geo.BallFamily(np.zeros((1, 3)), [1.0])
    mu = P.AtomicMeasure(C.sample_tent(E, 20, seed=3), np.ones(20))
    combos = [C.KernelCombo(0.75, np.ones(3), _centers(3))]
    rep = C.sufficiency_check(0.75, mu, combos, [E], GRID)
    assert rep["carleson"] > 0 and rep["subcap"] > 0
    assert rep["ratio"] == pytest.approx(rep["carleson"] / rep["subcap"])


def test_carleson_embedding_estimator():
    cs = _centers(5)
    mu = P.AtomicMeasure(_centers(12), RNG.uniform(0.1, 1, 12))
    est = C.CarlesonEmbedding(alpha=0.75).fit(cs, mu)
    oracle = eigh(C.mass_matrix(0.75, cs, mu), C.gram_matrix(0.75, cs), eigvals_only=True)[-1]
    assert est.constant_ == pytest.approx(oracle, rel=1e-9)
    f = est.extremal_
    ratio = np.sum(mu.masses * np.abs(f(mu.points)) ** 2) / C.hs_norm_gram(f) ** 2
    assert ratio == pytest.approx(est.constant_, rel=1e-8)
    assert est.get_params()["alpha"] == 0.75
    with pytest.raises(AttributeError):
        C.CarlesonEmbedding().transform(cs)
