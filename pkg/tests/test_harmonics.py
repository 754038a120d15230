import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmcflow.harmonics import (fibonacci_directions, get_grid, n_coeffs, product_derivs,
                               real_sh, sh_index, solid_harmonic, to_angles,
                               unit_vector_derivs)


@pytest.mark.parametrize("L", [2, 8, 16])
def test_quadrature_orthonormality(L):
    grid = get_grid(L)
    Y = grid.basis(0)[()]
    G = Y.T @ (grid.weights[:, None] * Y)
    assert np.allclose(G, np.eye(n_coeffs(L)), atol=1e-12)


def test_low_degree_closed_forms():
    theta = np.array([0.3, 1.1, 2.0])
    phi = np.array([0.2, -1.4, 2.9])
    Y = real_sh(2, theta, phi)[()]
    c1 = math.sqrt(3.0 / (4.0 * math.pi))
    assert np.allclose(Y[:, 0], 1.0 / math.sqrt(4.0 * math.pi))
    assert np.allclose(Y[:, sh_index(1, 0)], c1 * np.cos(theta))
    assert np.allclose(Y[:, sh_index(1, 1)], c1 * np.sin(theta) * np.cos(phi))
    assert np.allclose(Y[:, sh_index(1, -1)], c1 * np.sin(theta) * np.sin(phi))
    c20 = math.sqrt(5.0 / (16.0 * math.pi))
    assert np.allclose(Y[:, sh_index(2, 0)], c20 * (3 * np.cos(theta) ** 2 - 1))


@pytest.mark.parametrize("l", [0, 1, 3, 6])
def test_addition_theorem(l):
    u = fibonacci_directions(50)
    th, ph = to_angles(u)
    Y = real_sh(l, th, ph)[()][:, l * l:(l + 1) ** 2]
    assert np.allclose(np.sum(Y**2, axis=1), (2 * l + 1) / (4 * math.pi))


@pytest.mark.parametrize("key", [(0,), (1,), (0, 0), (0, 1), (1, 1), (0, 0, 1), (1, 1, 1)])
def test_angular_derivatives_match_finite_differences(key):
    rng = np.random.default_rng(3)
    th = rng.uniform(0.4, 2.6, 7)
    ph = rng.uniform(-3, 3, 7)
    h = 1e-5
    lower = key[:-1]
    axis = key[-1]
    dth, dph = (h, 0.0) if axis == 0 else (0.0, h)
    up = real_sh(5, th + dth, ph + dph, 3)[lower]
    dn = real_sh(5, th - dth, ph - dph, 3)[lower]
    exact = real_sh(5, th, ph, 3)[key]
    assert np.allclose((up - dn) / (2 * h), exact, atol=1e-7)


def test_unit_vector_derivatives():
    th, ph = np.array([0.7]), np.array([1.9])
    d = unit_vector_derivs(th, ph, 2)
    assert np.allclose(np.linalg.norm(d[()], axis=1), 1.0)
    # tangent to the sphere
    assert np.allclose(np.sum(d[()] * d[(0,)], axis=1), 0.0)
    assert np.allclose(d[(0, 0)], -d[()])


def test_product_rule():
    th, ph = np.array([0.9, 1.3]), np.array([0.1, 2.2])
    f = real_sh(3, th, ph, 2)
    a = {k: v[:, 5] for k, v in f.items()}
    b = {k: v[:, 9][:, None] * np.ones(3) for k, v in f.items()}
    p = product_derivs(a, b, 2)
    assert np.allclose(p[(0, 1)][:, 0],
                       a[(0, 1)] * b[()][:, 0] + a[(0,)] * b[(1,)][:, 0]
                       + a[(1,)] * b[(0,)][:, 0] + a[()] * b[(0, 1)][:, 0])


@given(st.lists(st.floats(-1, 1), min_size=n_coeffs(6), max_size=n_coeffs(6)))
@settings(max_examples=25, deadline=None)
def test_analysis_inverts_synthesis(coeffs):
    grid = get_grid(6)
    c = np.array(coeffs)
    assert np.allclose(grid.analysis(grid.synthesis(c)), c, atol=1e-12)


@pytest.mark.parametrize("l,m", [(0, 0), (1, -1), (2, 1), (3, -2), (4, 4), (5, 0)])
def test_solid_harmonic_restricts_to_surface_harmonic(l, m):
    u = fibonacci_directions(30)
    th, ph = to_angles(u)
    Y = real_sh(l, th, ph)[()][:, sh_index(l, m)]
    S = solid_harmonic(l, m)
    assert np.allclose(S.value(u), Y, atol=1e-13)
    # homogeneous of degree l
    assert np.allclose(S.value(2.5 * u), 2.5**l * Y, atol=1e-10)
    # harmonic: trace of the Hessian vanishes
    assert np.allclose(np.trace(S.hessian(3.0 * u), axis1=1, axis2=2), 0.0, atol=1e-9)


def test_fibonacci_directions_are_unit_and_balanced():
    u = fibonacci_directions(2000)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)
    assert np.linalg.norm(u.mean(axis=0)) < 1e-3
