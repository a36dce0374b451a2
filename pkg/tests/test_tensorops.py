import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from polyfields import Poly2, fd_gradient, tensor_field, vector_field

from micromorph2d.tensorops import (IDENTITY, R, DegenerateHomogenization, IsotropicLaw, MaterialRegion,
                                    apply_isotropic, curl_tensor, curl_tensor_2d, curl_vector, dev,
                                    div_tensor, div_vector, homogenize_meso, macro_stiffness, rotate,
                                    rotate_t, skw, sph, spherical_microdistortion, sym, tr)

finite = st.floats(-1e3, 1e3, allow_nan=False)
mats = arrays(np.float64, (2, 2), elements=finite)
batches = arrays(np.float64, st.tuples(st.integers(1, 5), st.just(2), st.just(2)), elements=finite)


@given(mats)
def test_dev_plus_sph_reassembles(m):
    assert np.allclose(dev(m) + sph(m), m, atol=1e-12 * (1 + np.abs(m).max()))
    assert abs(tr(dev(m))) <= 1e-12 * (1 + np.abs(m).max())
    s = sph(m)
    assert s[0, 1] == 0 and s[1, 0] == 0 and s[0, 0] == s[1, 1]


@given(mats)
def test_sym_skw_split(m):
    assert np.allclose(sym(m) + skw(m), m, atol=1e-12 * (1 + np.abs(m).max()))
    assert np.array_equal(sym(m), sym(m).T)
    assert np.array_equal(skw(m), -skw(m).T)


@given(batches)
def test_projectors_idempotent_and_orthogonal(m):
    scale = 1e-12 * (1 + np.abs(m).max())
    for proj in (dev, sph, sym, skw):
        assert np.allclose(proj(proj(m)), proj(m), atol=scale)
    assert np.allclose(dev(sph(m)), 0, atol=scale)
    assert np.allclose(sph(dev(m)), 0, atol=scale)


def test_rotation_convention():
    assert np.array_equal(R, [[0, 1], [-1, 0]])
    v = np.array([3.0, -2.0])
    assert np.array_equal(rotate(v), R @ v)
    assert np.array_equal(rotate_t(v), R.T @ v)


def test_isotropic_law_flags():
    assert IsotropicLaw(1.0, 0.0).positive_definite
    assert not IsotropicLaw(1.0, -2.0).positive_definite
    assert not IsotropicLaw(0.0, 1.0).positive_definite
    assert IsotropicLaw(2.0, 3.0).scaled(10) == IsotropicLaw(20.0, 30.0)
    assert IsotropicLaw.from_shear_bulk(2.0, 5.0) == IsotropicLaw(2.0, 3.0)


def test_material_region_validation():
    law = IsotropicLaw(1.0, 1.0)
    assert MaterialRegion(law, law, mu_c=0.0).mu_c == 0.0
    with pytest.raises(ValueError):
        MaterialRegion(law, law, mu_c=-1.0)
    with pytest.raises(ValueError):
        MaterialRegion(law, law, lc=-1.0)
    assert MaterialRegion(law, law, mu_macro=2.0, lc=3.0).curvature_modulus == 18.0


def test_apply_isotropic_examples():
    assert np.allclose(apply_isotropic(IsotropicLaw(1, 0), IDENTITY), 2 * IDENTITY)
    assert np.allclose(apply_isotropic(IsotropicLaw(76.9, 115.4), np.zeros((2, 2))), 0)
    assert np.allclose(apply_isotropic(IsotropicLaw(1, 2), [[1, 0], [0, 0]]), [[4, 0], [0, 2]])


def test_curl_examples():
    x = np.array([0.3, -0.7])
    const = lambda p: np.zeros(np.shape(p)[:-1] + (2, 2, 2))  # noqa: E731
    assert np.allclose(curl_tensor_2d(const, x), 0)

    def grad_shear(p):  # P = [[y, 0], [0, -y]]
        g = np.zeros(np.shape(p)[:-1] + (2, 2, 2))
        g[..., 0, 0, 1] = 1
        g[..., 1, 1, 1] = -1
        return g
    assert np.allclose(curl_tensor_2d(grad_shear, x), [-1, 0])


def test_curl_of_spherical_tensor_matches_finite_differences():
    q = Poly2(np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]]))  # x^2 + y^2
    x = np.array([0.4, 1.3])

    def grad_p(p):
        g = q.grad(p)
        return np.einsum("ij,...k->...ijk", IDENTITY, g)

    exact = curl_tensor_2d(grad_p, x)
    fd = curl_tensor(fd_gradient(lambda p: q(p)[..., None, None] * IDENTITY, x))
    assert np.allclose(exact, fd, atol=1e-6)
    assert np.allclose(exact, rotate_t(q.grad(x)), atol=1e-12)


# --- algebraic identities between the planar operators ---------------------

def _points(rng, n=40):
    return rng.uniform(-2, 2, size=(n, 2))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_curl_vector_is_div_of_rotated(seed):
    rng = np.random.default_rng(seed)
    value, grad = vector_field(rng, 4)
    x = _points(rng)
    g = grad(x)
    g_rot = np.einsum("ij,...jk->...ik", R, g)
    lhs, rhs = curl_vector(g), div_vector(g_rot)
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(lhs).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_row_curl_is_row_div_of_rotated(seed):
    rng = np.random.default_rng(seed)
    value, grad = tensor_field(rng, 4)
    x = _points(rng)
    g = grad(x)
    g_rot = np.einsum("...ikd,jk->...ijd", g, R)  # gradient of P R^T
    lhs, rhs = curl_tensor(g), div_tensor(g_rot)
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(lhs).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_curl_of_spherical_part(seed):
    rng = np.random.default_rng(seed)
    q = Poly2.random(rng, 4)
    x = _points(rng)
    gq = q.grad(x)
    g_sph = 0.5 * np.einsum("ij,...k->...ijk", IDENTITY, gq)
    lhs = curl_tensor(g_sph)
    rhs = 0.5 * rotate_t(gq)
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(lhs).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rotated_gradient_is_divergence_free(seed):
    rng = np.random.default_rng(seed)
    q = Poly2.random(rng, 5)
    x = _points(rng)
    H = q.hess(x)
    g = np.einsum("ij,...jk->...ik", R, H)
    assert np.abs(div_vector(g)).max() <= 1e-12 * (1 + np.abs(H).max())


# --- scale transition ------------------------------------------------------

def test_homogenize_examples():
    law = homogenize_meso(769.0, 1154.0, 76.9, 115.4)
    assert law.mu == pytest.approx(769 * 76.9 / 692.1, rel=1e-13)
    assert law.mu == pytest.approx(85.444444444444, rel=1e-12)
    assert law.bulk == pytest.approx(1923 * 192.3 / (1923 - 192.3), rel=1e-13)
    assert law.bulk == pytest.approx(213.66666666666, rel=1e-12)
    with pytest.raises(DegenerateHomogenization):
        homogenize_meso(76.9, 1154.0, 76.9, 115.4)
    with pytest.raises(DegenerateHomogenization):
        homogenize_meso(769.0, -600.0, 76.9, 115.4)


def test_macro_stiffness_examples():
    assert macro_stiffness(IsotropicLaw(1, 0), IsotropicLaw(1, 0)) == IsotropicLaw(0.5, 0.0)
    cm = IsotropicLaw(769.0, 1154.0)
    back = macro_stiffness(homogenize_meso(769.0, 1154.0, 76.9, 115.4), cm)
    assert back.mu == pytest.approx(76.9, rel=1e-10)
    assert back.lam == pytest.approx(115.4, rel=1e-10)


@given(st.floats(1.1, 1e4), st.floats(1.1, 1e4), st.floats(1.0, 500.0), st.floats(0.0, 500.0))
def test_homogenization_round_trip(f_mu, f_kap, mu_M, lam_M):
    kap_M = mu_M + lam_M
    mu_m, kap_m = f_mu * mu_M, f_kap * kap_M
    ce = homogenize_meso(mu_m, kap_m - mu_m, mu_M, lam_M)
    back = macro_stiffness(ce, IsotropicLaw(mu_m, kap_m - mu_m))
    assert back.mu == pytest.approx(mu_M, rel=1e-10)
    assert back.bulk == pytest.approx(kap_M, rel=1e-10)


def _mandel(law):
    m, l = law.mu, law.lam
    return np.array([[2 * m + l, l, 0], [l, 2 * m + l, 0], [0, 0, 2 * m]])


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_macro_stiffness_matches_dense_voigt_product(seed):
    rng = np.random.default_rng(seed)
    ce = IsotropicLaw(*rng.uniform(1, 100, 2))
    cm = IsotropicLaw(*rng.uniform(1, 100, 2))
    S = rng.standard_normal((2, 2))
    S = S + S.T
    dense = _mandel(cm) @ np.linalg.solve(_mandel(ce) + _mandel(cm), _mandel(ce))
    s = np.array([S[0, 0], S[1, 1], np.sqrt(2) * S[0, 1]])
    out = dense @ s
    got = apply_isotropic(macro_stiffness(ce, cm), S)
    assert np.allclose([got[0, 0], got[1, 1], np.sqrt(2) * got[0, 1]], out, rtol=1e-12, atol=1e-12)


def test_spherical_microdistortion_examples():
    zero = np.zeros((2, 2))
    ce, cm = IsotropicLaw(1, 1), IsotropicLaw(2, 2)
    assert np.allclose(spherical_microdistortion(ce, cm, zero, zero), 0)
    for factor, expected in ((10.0, 0.01), (1000.0, 1e-4)):
        cm = IsotropicLaw(76.9, 115.4).scaled(factor)
        ce = homogenize_meso(cm.mu, cm.lam, 76.9, 115.4)
        got = spherical_microdistortion(ce, cm, 0.1 * IDENTITY, zero)
        assert np.allclose(got, expected * IDENTITY, rtol=1e-12, atol=0)
