import math

import numpy as np
import pytest

from cmcflow.ambient import (MetricModel, PerturbationSpec, adm_mass, christoffel, curvature,
                             curvature_from_jet, decay_check, metric_jet, model_from_dict,
                             model_to_dict, regge_teitelboim_check)
from cmcflow.errors import ChartViolation, ConfigError
from cmcflow.harmonics import fibonacci_directions

S1 = MetricModel.schwarzschild(1.0)
EVEN = MetricModel("PerturbedSchwarzschild", m=1.0, delta=0.5,
                   perturbation=PerturbationSpec(0.1, 1.5, ((2, 1, 3), (0, 0, 0), (4, -3, 5))))
ODD = MetricModel("PerturbedSchwarzschild", m=1.0, delta=0.5,
                  perturbation=PerturbationSpec(0.1, 1.0, ((1, 0, 0), (3, 2, 4)), "odd"))


def test_conformal_metric_value():
    g = metric_jet(S1, [10.0, 0.0, 0.0]).g
    assert np.allclose(g, 1.05**4 * np.eye(3), rtol=0, atol=1e-15)


def test_euclidean_jet_is_flat():
    jet = metric_jet(MetricModel.euclidean(), fibonacci_directions(5) * 3)
    assert np.all(jet.g == np.eye(3))
    assert not np.any(jet.dg) and not np.any(jet.ddg)


@pytest.mark.parametrize("model", [S1, EVEN, ODD], ids=["schwarzschild", "even", "odd"])
def test_jet_matches_finite_differences(model):
    p = np.array([[3.0, -2.0, 5.0], [-7.0, 1.5, 0.5]])
    jet = metric_jet(model, p)
    h = 1e-5
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        up, dn = metric_jet(model, p + e), metric_jet(model, p - e)
        assert np.allclose((up.g - dn.g) / (2 * h), jet.dg[:, k], atol=1e-9)
        assert np.allclose((up.dg - dn.dg) / (2 * h), jet.ddg[:, :, k], atol=1e-9)


def test_chart_boundary_rejected():
    with pytest.raises(ChartViolation):
        metric_jet(S1, [0.5, 0.5, 0.0])


def _riemann_from_christoffel_fd(model, x, h=1e-4):
    """Independent route: R^a_bcd from finite differences of Gamma^a_bc."""
    def gam(p):
        jet = metric_jet(model, p[None, :])
        return christoffel(jet.g, jet.dg)[1][0]

    dG = np.empty((3, 3, 3, 3))  # dG[c, a, b, d] = d_c Gamma^a_bd
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        dG[c] = (gam(x + e) - gam(x - e)) / (2 * h)
    G = gam(x)
    # R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb
    R = (np.einsum("cadb->abcd", dG) - np.einsum("dacb->abcd", dG)
         + np.einsum("ace,edb->abcd", G, G) - np.einsum("ade,ecb->abcd", G, G))
    g = metric_jet(model, x[None, :]).g[0]
    return np.einsum("af,fbcd->abcd", g, R)


@pytest.mark.parametrize("model", [S1, EVEN], ids=["schwarzschild", "even"])
def test_riemann_against_independent_route(model):
    x = np.array([2.5, -1.0, 3.0])
    R = curvature(model, x[None, :]).riemann[0]
    R_fd = _riemann_from_christoffel_fd(model, x)
    assert np.allclose(R, R_fd, atol=1e-7 * np.abs(R).max())


def test_riemann_symmetries():
    R = curvature(EVEN, np.array([[3.0, -2.0, 5.0]])).riemann[0]
    assert np.abs(R + R.transpose(1, 0, 2, 3)).max() < 1e-15
    assert np.abs(R - R.transpose(2, 3, 0, 1)).max() < 1e-15
    bianchi = R + np.einsum("abcd->acdb", R) + np.einsum("abcd->adbc", R)
    assert np.abs(bianchi).max() < 1e-15


def test_round_sphere_curvature_in_two_dimensions():
    # g = r^2 (dtheta^2 + sin^2 theta dphi^2) at theta = 0.8
    r, th = 3.0, 0.8
    g = np.diag([r * r, r * r * math.sin(th) ** 2])[None]
    dg = np.zeros((1, 2, 2, 2))
    dg[0, 0, 1, 1] = r * r * math.sin(2 * th)
    ddg = np.zeros((1, 2, 2, 2, 2))
    ddg[0, 0, 0, 1, 1] = 2 * r * r * math.cos(2 * th)
    cur = curvature_from_jet(g, dg, ddg)
    assert cur.scalar[0] == pytest.approx(2.0 / r**2, rel=1e-13)


def test_schwarzschild_is_scalar_flat_with_known_riemann_norm():
    R0 = 12.0
    x = R0 * fibonacci_directions(20)
    cur = curvature(S1, x)
    assert np.abs(cur.scalar).max() < 1e-15
    g = metric_jet(S1, x).g
    gi = np.linalg.inv(g)
    n2 = np.einsum("nai,nbj,nck,ndl,nabcd,nijkl->n", gi, gi, gi, gi, cur.riemann, cur.riemann)
    # |Rm|^2 = 24 m^2 / R_areal^6 with R_areal = R (1 + m/2R)^2
    r_areal = R0 * (1 + 0.5 / R0) ** 2
    assert np.allclose(np.sqrt(n2), math.sqrt(24.0) / r_areal**3, rtol=1e-10)


def test_adm_mass_euclidean_is_zero():
    est = adm_mass(MetricModel.euclidean(), [100, 200, 400])
    assert abs(est.value) < 1e-12


def test_adm_mass_needs_three_radii():
    with pytest.raises(ValueError):
        adm_mass(S1, [100, 200])


def test_decay_check_euclidean_passes_with_zero_constant():
    rep = decay_check(MetricModel.euclidean(), [10, 20, 40])
    assert rep.passed and rep.cbar == 0.0


def test_decay_check_flags_slow_perturbation():
    slow = MetricModel("PerturbedSchwarzschild", m=1.0, delta=0.5,
                       perturbation=PerturbationSpec(0.1, 0.7, ((0, 0, 0),)))
    rep = decay_check(slow, [10, 100, 1000])
    assert rep.scalar_violation and not rep.passed


@pytest.mark.parametrize("model", [S1, EVEN], ids=["schwarzschild", "even"])
def test_decay_check_passes_admissible_models(model):
    assert decay_check(model, [10, 20, 40, 80]).passed


def test_decay_check_is_seeded(monkeypatch):
    monkeypatch.setenv("CMCFLOW_SEED", "7")
    a = decay_check(EVEN, [10, 20]).to_dict()
    b = decay_check(EVEN, [10, 20]).to_dict()
    assert a == b


def test_rt_check_discriminates_parity():
    assert regge_teitelboim_check(S1, [10, 20, 40, 80]).passed
    even = MetricModel("PerturbedSchwarzschild", m=1.0, delta=0.5,
                       perturbation=PerturbationSpec(0.1, 1.0, ((2, 0, 0), (4, 2, 4))))
    assert regge_teitelboim_check(even, [10, 100, 1000]).passed
    assert not regge_teitelboim_check(ODD, [10, 100, 1000]).passed


@pytest.mark.parametrize("bad", [
    {"kind": "Kerr"},
    {"kind": "Euclidean", "m": 1.0},
    {"kind": "Schwarzschild", "m": -1.0},
    {"kind": "Schwarzschild", "m": 1.0, "delta": 0.7},
    {"kind": "PerturbedSchwarzschild", "m": 1.0},
    {"kind": "PerturbedSchwarzschild", "m": 1.0,
     "perturbation": {"amplitude": 0.1, "decay": 1.0, "modes": [[1, 0, 0]], "parity": "even"}},
    {"kind": "PerturbedSchwarzschild", "m": 1.0,
     "perturbation": {"amplitude": 5.0, "decay": 1.0, "modes": [[2, 0, 0]]}},
])
def test_invalid_models_rejected(bad):
    with pytest.raises(ConfigError):
        model_from_dict(bad)


def test_negative_mass_needs_opt_in():
    m = MetricModel.schwarzschild(-0.5, allow_negative_mass=True)
    assert m.m == -0.5


def test_model_round_trip():
    assert model_from_dict(model_to_dict(EVEN)) == EVEN
