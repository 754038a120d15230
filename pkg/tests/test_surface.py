import math

import numpy as np
import pytest
from scipy.integrate import quad

from cmcflow.ambient import MetricModel
from cmcflow.errors import (CommonGraphFailure, ConfigError, CurvatureHypothesisViolated,
                            InnerSphereNotEnclosed, NonPositiveRadius, UnsupportedOrder)
from cmcflow.harmonics import fibonacci_directions, sh_index
from cmcflow.surface import (GraphSurface, RoundnessParams, barycenter, enclosed_volume,
                             euclidean_comparison, fundamental_forms, gradient_norm,
                             harmonic_peak, hawking_mass, hessian, intrinsic_scalar_curvature,
                             lp_norm, measures_and_radii, radii_about, regraph,
                             roundness_classify, sobolev_norm, volume_derivative,
                             write_fields_csv)

E = MetricModel.euclidean()
S1 = MetricModel.schwarzschild(1.0)


def schwarzschild_sphere_H(r, m=1.0):
    # conformal change of H for g = phi^4 delta, outward normal
    phi = 1 + m / (2 * r)
    dphi = -m / (2 * r * r)
    return phi**-2 * (2 / r + 4 * dphi / phi)


def test_euclidean_sphere_geometry():
    f = fundamental_forms(E, GraphSurface.sphere(2.0))
    assert np.allclose(f.H, 1.0, atol=1e-13)
    assert np.allclose(f.kappa, 0.5, atol=1e-13)
    assert np.abs(f.Ao2).max() < 1e-26
    assert f.area == pytest.approx(16 * math.pi, rel=1e-14)
    assert f.h == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("r", [5.0, 10.0, 37.0])
def test_schwarzschild_sphere_mean_curvature(r):
    f = fundamental_forms(S1, GraphSurface.sphere(r))
    assert np.allclose(f.H, schwarzschild_sphere_H(r), rtol=1e-13)
    radii = measures_and_radii(f)
    assert radii.sigma_area == pytest.approx(r * (1 + 0.5 / r) ** 2, rel=1e-13)


def test_schwarzschild_h_frozen_value():
    # closed-form conformal oracle at r = 10, m = 1
    f = fundamental_forms(S1, GraphSurface.sphere(10.0))
    assert f.h == pytest.approx(0.16412914372098047, rel=1e-13)


def test_translated_sphere_is_round():
    f = fundamental_forms(E, GraphSurface.sphere(3.0, center=(10, 20, 30)))
    assert np.allclose(f.H, 2 / 3.0, atol=1e-12)
    assert np.allclose(barycenter(f), [10, 20, 30], atol=1e-12)


def test_off_center_sphere_through_regraph():
    # a sphere centered at (0.7, 0, 0) written as a graph about the origin
    s = regraph(GraphSurface.sphere(6.0, center=(0.7, 0, 0)), (0.0, 0.0, 0.0))
    f = fundamental_forms(E, s)
    assert np.abs(f.H - 2 / 6.0).max() < 1e-9
    assert f.area == pytest.approx(4 * math.pi * 36, rel=1e-8)


def test_gauss_bonnet():
    s = GraphSurface.sphere(8.0, perturb=[[2, 1, 0.6], [3, -2, 0.3], [1, 0, 0.5]])
    f = fundamental_forms(E, s)
    K = f.kappa[:, 0] * f.kappa[:, 1]
    assert f.integrate(K) == pytest.approx(4 * math.pi, rel=1e-9)


def test_gauss_equation_in_schwarzschild():
    s = GraphSurface.sphere(10.0, perturb=[[1, 0, 0.3], [2, 1, 0.5], [3, -2, 0.2]])
    f = fundamental_forms(S1, s)
    intrinsic = intrinsic_scalar_curvature(S1, s)
    gauss = f.scalar_ambient - 2 * f.ric_nn + f.H**2 - f.A2
    assert np.abs(intrinsic - gauss).max() < 1e-12


@pytest.mark.parametrize("r", [5, 10, 20, 50, 100])
def test_hawking_mass_on_centered_spheres(r):
    f = fundamental_forms(S1, GraphSurface.sphere(float(r)))
    assert hawking_mass(f) == pytest.approx(1.0, abs=1e-12)


def test_hawking_mass_euclidean_zero():
    f = fundamental_forms(E, GraphSurface.sphere(7.0))
    assert abs(hawking_mass(f)) < 1e-12


def test_volume_oracles():
    assert enclosed_volume(E, GraphSurface.sphere(3.0), 2.0) == pytest.approx(76 * math.pi / 3,
                                                                            rel=1e-14)
    exact = 4 * math.pi * quad(lambda s: (1 + 0.5 / s) ** 6 * s * s, 2, 10, epsabs=1e-13)[0]
    assert enclosed_volume(S1, GraphSurface.sphere(10.0), 2.0) == pytest.approx(exact, rel=1e-13)


def test_volume_derivative_matches_offset_difference():
    s = GraphSurface.sphere(9.0, perturb=[[2, 0, 0.4], [1, 1, 0.3]])
    y00 = 1 / math.sqrt(4 * math.pi)
    eps = 1e-5

    def shifted(c):
        co = s.coeffs.copy()
        co[0] += c / y00
        return s.with_coeffs(co)

    fd = (enclosed_volume(S1, shifted(eps), 3.0) - enclosed_volume(S1, shifted(-eps), 3.0)) / (2 * eps)
    assert volume_derivative(S1, s) == pytest.approx(fd, rel=1e-8)


def test_volume_rejects_unenclosed_inner_sphere():
    with pytest.raises(InnerSphereNotEnclosed):
        enclosed_volume(E, GraphSurface.sphere(3.0), 4.0)


def test_gradient_and_hessian_on_round_sphere():
    R = 5.0
    f = fundamental_forms(E, GraphSurface.sphere(R))
    z = f.X[:, 2]
    # |grad z|^2 = 1 - z^2/R^2, integral 8 pi R^2 / 3
    assert f.integrate(gradient_norm(f, z) ** 2) == pytest.approx(8 * math.pi * R * R / 3, rel=1e-12)
    # Laplacian of a degree-3 harmonic: -12/R^2 Y
    Y = f.grid.basis(0)[()][:, sh_index(3, 1)]
    lap = np.einsum("nij,nij->n", f.ginv, hessian(f, Y))
    assert np.allclose(lap, -12 / R**2 * Y, atol=1e-12)


def test_sobolev_norms():
    R = 4.0
    f = fundamental_forms(E, GraphSurface.sphere(R))
    one = np.ones(f.grid.size)
    assert sobolev_norm(f, one, 0, 2) == pytest.approx(math.sqrt(4 * math.pi) * R, rel=1e-13)
    assert sobolev_norm(f, one, 2, 2) == pytest.approx(math.sqrt(4 * math.pi) * R, rel=1e-9)
    z = f.X[:, 2]
    w1 = lp_norm(f, z, 2) + R * lp_norm(f, gradient_norm(f, z), 2)
    assert sobolev_norm(f, z, 1, 2) == pytest.approx(w1, rel=1e-13)
    with pytest.raises(UnsupportedOrder):
        sobolev_norm(f, z, 3, 2)


def test_roundness_of_coordinate_sphere():
    f = fundamental_forms(S1, GraphSurface.sphere(20.0))
    radii = measures_and_radii(f)
    rep = roundness_classify(f, radii, RoundnessParams(radii.sigma_area))
    assert rep.round and rep.well_centered
    assert all(v > 0 for k, v in rep.margins.items() if k not in ("area_upper", "R_upper"))


def test_strongly_deformed_surface_is_not_round():
    s = GraphSurface.sphere(20.0, perturb=[[2, 0, 6.0]])
    f = fundamental_forms(S1, s)
    radii = measures_and_radii(f)
    rep = roundness_classify(f, radii, RoundnessParams(radii.sigma_area))
    assert not rep.round
    assert rep.margins["R_upper"] < 0 or rep.margins["A_sup"] < 0


def test_euclidean_comparison_rows():
    f = fundamental_forms(S1, GraphSurface.sphere(30.0))
    rep = euclidean_comparison(f)
    assert rep.curvature_rows
    assert set(rep.rows) == {"metric", "normal", "area_element", "mean_curvature", "traceless"}
    # Euclidean model: everything vanishes
    rep0 = euclidean_comparison(fundamental_forms(E, GraphSurface.sphere(30.0)))
    assert max(rep0.rows.values()) < 1e-12


def test_euclidean_comparison_strict_curvature_guard():
    s = GraphSurface.sphere(3.0, L_max=24, perturb=[[16, 0, 0.6]])
    f = fundamental_forms(S1, s)
    with pytest.raises(CurvatureHypothesisViolated):
        euclidean_comparison(f)
    assert not euclidean_comparison(f, strict=False).curvature_rows


def test_sphere_shorthand_amplitude_is_peak_displacement():
    s = GraphSurface.sphere(10.0, perturb=[[2, 0, 0.5]])
    # Y_20 peaks at the poles
    assert s.radius_in([[0.0, 0.0, 1.0]])[0] == pytest.approx(10.5, rel=1e-13)
    assert s.radius_in(fibonacci_directions(4000)).max() < 10.5
    assert harmonic_peak(1, 0) == pytest.approx(math.sqrt(3 / (4 * math.pi)), rel=1e-12)


def test_surface_validation_and_round_trip():
    s = GraphSurface.sphere(5.0, center=(1, 2, 3), L_max=6, perturb=[[3, 1, 0.2]])
    t = GraphSurface.from_dict(s.to_dict())
    assert np.array_equal(s.coeffs, t.coeffs) and s.center == t.center
    with pytest.raises(ConfigError):
        GraphSurface((0, 0, 0), np.zeros(100), 4)
    with pytest.raises(ConfigError):
        GraphSurface.sphere(-1.0)
    with pytest.raises(NonPositiveRadius):
        fundamental_forms(E, GraphSurface.sphere(5.0, perturb=[[0, 0, -6.0]]))


def test_radii_about_points_lie_on_surface():
    s = GraphSurface.sphere(10.0, center=(0.5, 0, 0), perturb=[[2, 0, 0.3]])
    u = fibonacci_directions(200)
    c = np.array([0.0, 0.0, 0.3])
    rr = radii_about(s, c, u)
    q = c + rr[:, None] * u - np.asarray(s.center)
    n = np.linalg.norm(q, axis=1)
    assert np.abs(n - s.radius_in(q / n[:, None])).max() < 1e-11


def test_radii_about_far_center_fails():
    with pytest.raises(CommonGraphFailure):
        radii_about(GraphSurface.sphere(10.0), (8.0, 0, 0), fibonacci_directions(10))


def test_fields_csv(tmp_path):
    f = fundamental_forms(E, GraphSurface.sphere(3.0, L_max=4))
    p = tmp_path / "f.csv"
    write_fields_csv(f, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("theta,phi,x") and len(lines) == f.grid.size + 1
