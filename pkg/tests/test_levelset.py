import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbfem import levelset as ls
from nbfem.errors import InadmissibleBand, OutsideBand
from nbfem.experiments import preset_torus
from nbfem.levelset import BandSpec, Circle, CoefficientMode, Sphere, Torus

from conftest import band_points


@pytest.mark.parametrize(
    "surface, x, expected",
    [
        (Circle(1.0), [2.0, 0.0], 1.0),
        (Sphere(1.0), [0.0, 0.0, 0.5], -0.5),
        (Torus(1.0, 0.6), [2.0, 0.0, 0.0], 0.4),
    ],
)
def test_signed_distance_examples(surface, x, expected):
    assert ls.signed_distance(surface, np.array(x)) == pytest.approx(expected, abs=1e-15)


def test_circle_normal_and_hessian():
    x = np.array([2.0, 0.0])
    np.testing.assert_allclose(ls.normal(Circle(1.0), x), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(ls.hessian(Circle(1.0), x), [[0.0, 0.0], [0.0, 0.5]], atol=1e-15)


def test_sphere_hessian_eigenvalues():
    ev = np.linalg.eigvalsh(ls.hessian(Sphere(1.0), np.array([2.0, 0.0, 0.0])))
    np.testing.assert_allclose(np.sort(ev), [0.0, 0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize(
    "surface, x, foot",
    [
        (Circle(1.0), [2.0, 0.0], [1.0, 0.0]),
        (Torus(1.0, 0.6), [2.0, 0.0, 0.0], [1.6, 0.0, 0.0]),
    ],
)
def test_closest_point_examples(surface, x, foot):
    np.testing.assert_allclose(ls.closest_point(surface, np.array(x)), foot, atol=1e-15)


def test_closest_point_outside_band():
    with pytest.raises(OutsideBand):
        ls.closest_point(Sphere(1.0), np.array([0.0, 0.0, -3.0]))


def test_origin_rejected_as_medial_axis():
    with pytest.raises(OutsideBand):
        ls.normal(Circle(0.4), np.zeros(2))


def test_normal_extend_examples():
    assert ls.normal_extend(lambda y: y[..., 1], Circle(1.0), np.array([0.0, 2.0])) == pytest.approx(1.0)
    x, _ = band_points(Sphere(1.0), 50, seed=3)
    np.testing.assert_array_equal(ls.normal_extend(lambda y: np.full(y.shape[:-1], 7.5), Sphere(1.0), x), 7.5)


def test_normal_extend_torus_constant_along_normal():
    p = preset_torus()
    x, _ = band_points(p.surface, 200, seed=4, frac=0.2)
    shifted = x + 0.1 * p.surface.grad(x)
    a = ls.normal_extend(p.u, p.surface, x)
    b = ls.normal_extend(p.u, p.surface, shifted)
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_coefficient_circle_exact():
    a, mu = ls.coefficient(Circle(1.0), CoefficientMode.EXACT, np.array([2.0, 0.0]))
    assert mu == pytest.approx(0.5)
    np.testing.assert_allclose(a, np.diag([0.5, 2.0]), atol=1e-14)


def test_coefficient_sphere_exact():
    a, mu = ls.coefficient(Sphere(1.0), "exact", np.array([2.0, 0.0, 0.0]))
    assert mu == pytest.approx(0.25)
    np.testing.assert_allclose(a, np.diag([0.25, 1.0, 1.0]), atol=1e-14)


def test_coefficient_zero_mode(surface):
    x, _ = band_points(surface, 20, seed=1)
    a, mu = ls.coefficient(surface, CoefficientMode.ZERO, x)
    np.testing.assert_array_equal(a, np.broadcast_to(np.eye(surface.dim), a.shape))
    np.testing.assert_array_equal(mu, 1.0)


@pytest.mark.parametrize(
    "surface, d, expected",
    [(Sphere(1.0), 0.25, True), (Circle(1.0), 0.6, False), (Torus(1.0, 0.6), 0.12, True), (Torus(1.0, 0.6), 0.13, False)],
)
def test_band_admissible(surface, d, expected):
    assert ls.band_admissible(surface, d) is expected


def test_bandspec_rejects_wide_band():
    with pytest.raises(InadmissibleBand, match="curvature_bound"):
        BandSpec.for_mesh(Circle(1.0), 6.0, 0.1)
    with pytest.raises(InadmissibleBand):
        BandSpec.for_mesh(Circle(1.0), 0.0, 0.1)
    assert BandSpec.for_mesh(Circle(1.0), 5.0, 0.1).d == pytest.approx(0.5)


def test_curvature_bounds():
    assert Circle(2.0).curvature_bound == 0.5
    assert Sphere(1.0).curvature_bound == 2.0
    assert Torus(1.0, 0.6).curvature_bound == pytest.approx(1 / 0.6 + 1 / 0.4)


# --- sampled invariants -----------------------------------------------------


def test_distance_invariants(surface):
    x, off = band_points(surface, 10_000, seed=7)
    n = ls.normal(surface, x)
    h = ls.hessian(surface, x)
    assert np.max(np.abs(np.linalg.norm(n, axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(np.einsum("qij,qj->qi", h, n))) < 1e-12
    foot = ls.closest_point(surface, x)
    assert np.max(np.abs(surface.phi(foot))) < 1e-10
    np.testing.assert_allclose(np.linalg.norm(x - foot, axis=1), np.abs(surface.phi(x)), atol=1e-12)
    np.testing.assert_allclose(surface.phi(x), off, atol=1e-12)


def test_gradient_matches_finite_differences(surface):
    x, _ = band_points(surface, 200, seed=8)
    eps = 1e-6
    fd = np.stack([(surface.phi(x + eps * e) - surface.phi(x - eps * e)) / (2 * eps)
                   for e in np.eye(surface.dim)], axis=1)
    np.testing.assert_allclose(surface.grad(x), fd, atol=1e-8)
    fdh = np.stack([(surface.grad(x + eps * e) - surface.grad(x - eps * e)) / (2 * eps)
                    for e in np.eye(surface.dim)], axis=2)
    np.testing.assert_allclose(surface.hess(x), fdh, atol=1e-7)


def spectral_sample(surface, n=10_000, seed=9):
    """Eigenvalues and determinants of I - phi H on band points with d * curvature_bound = 1/2."""
    x, _ = band_points(surface, n, seed=seed, frac=0.5)
    phi = surface.phi(x)
    m = np.eye(surface.dim) - phi[:, None, None] * surface.hess(x)
    return x, np.linalg.eigvalsh(m), np.linalg.det(m)


@pytest.mark.parametrize("name", ["sphere", "torus"])
def test_spectral_bounds_3d(name):
    from conftest import SURFACES

    _, ev, det = spectral_sample(SURFACES[name])
    assert ev.min() >= 0.5 - 1e-12 and ev.max() <= 1.5 + 1e-12
    assert det.min() >= 0.25 - 1e-12 and det.max() <= 2.25 + 1e-12


def test_spectral_relation_circle():
    # with a single curvature the tangential eigenvalue is 1/(1 + phi kappa), in [2/3, 2]
    c = Circle(1.0)
    x, ev, det = spectral_sample(c)
    phi = c.phi(x)
    np.testing.assert_allclose(np.sort(ev, axis=1)[:, 0], np.minimum(1.0, 1 / (1 + phi)), rtol=1e-12)
    assert ev.min() >= 2 / 3 - 1e-12 and ev.max() <= 2 + 1e-12
    assert det.min() >= 0.25 - 1e-12 and det.max() <= 2.25 + 1e-12


def test_coefficient_spd(surface):
    x, _ = band_points(surface, 2000, seed=10)
    a, mu = ls.coefficient(surface, "exact", x)
    np.testing.assert_allclose(a, np.swapaxes(a, 1, 2), atol=1e-14)
    assert np.linalg.eigvalsh(a).min() > 0
    assert mu.min() > 0


def test_sphere_coarea_identity():
    rho = 1.5
    x = np.array([[rho, 0.0, 0.0]])
    mu = ls.area_factor(Sphere(1.0), x)[0]
    assert mu == pytest.approx(1 / rho**2, rel=1e-15)
    assert mu * 4 * np.pi * rho**2 == pytest.approx(4 * np.pi, abs=1e-9)


def test_circle_area_factor_is_arclength_ratio():
    r = np.linspace(0.6, 1.4, 9)
    x = np.stack([r, np.zeros_like(r)], axis=1)
    np.testing.assert_allclose(ls.area_factor(Circle(1.0), x), 1.0 / r, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(0, 2 * np.pi), s=st.floats(-0.4, 0.4))
def test_circle_foot_point_property(t, s):
    c = Circle(1.0)
    y = np.array([np.cos(t), np.sin(t)])
    foot = ls.closest_point(c, (1 + s) * y)
    np.testing.assert_allclose(foot, y, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0, 2 * np.pi), b=st.floats(0, 2 * np.pi), s=st.floats(-0.1, 0.1))
def test_torus_angles_roundtrip(a, b, s):
    t = Torus(1.0, 0.6)
    ring = 1.0 + 0.6 * np.cos(b)
    y = np.array([ring * np.cos(a), ring * np.sin(a), 0.6 * np.sin(b)])
    x = y + s * t.grad(y)
    aa, bb = t.angles(x)
    assert np.cos(aa) == pytest.approx(np.cos(a), abs=1e-12)
    assert np.sin(bb) == pytest.approx(np.sin(b), abs=1e-12)
    assert t.phi(x) == pytest.approx(s, abs=1e-13)
