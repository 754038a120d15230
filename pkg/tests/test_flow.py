import math

import numpy as np
import pytest

from cmcflow.ambient import MetricModel
from cmcflow.errors import ConfigError, DegenerateFit, InsufficientHistory
from cmcflow.flow import (COLUMNS, FlowConfig, FlowHistory, class_invariance_check,
                          class_params_for, decay_fit, fit_mode_rate, identity_monitor,
                          initial_state, radial_velocity, read_history_csv, run, step)
from cmcflow.surface import GraphSurface, RoundnessParams, fundamental_forms

E = MetricModel.euclidean()
S1 = MetricModel.schwarzschild(1.0)


@pytest.fixture(scope="module")
def bump_run():
    s = GraphSurface.sphere(10.0, L_max=8, perturb=[[2, 0, 0.3], [3, 1, 0.2]])
    return run(s, E, FlowConfig(t_max=20.0, diag_every=5, track_modes=((2, 0),)))


def test_round_sphere_is_stationary():
    s = GraphSurface.sphere(10.0, L_max=8)
    r = run(s, E, FlowConfig(tol_linf=1e-30, max_steps=50, diag_every=25))
    assert r.status == "horizon_reached" and r.steps == 50
    assert np.abs(r.surface.coeffs - s.coeffs).max() < 1e-12


def test_converged_when_already_cmc():
    r = run(GraphSurface.sphere(20.0), S1, FlowConfig())
    assert r.status == "converged" and r.steps == 0


def test_normal_speed_is_mean_curvature_deficit():
    # one small Euler step moves the surface along -(H-h) nu to first order
    s = GraphSurface.sphere(8.0, L_max=8, perturb=[[2, 1, 0.4]])
    cfg = FlowConfig(integrator="euler", volume_correction=False, recenter=False)
    st = initial_state(s, S1, cfg)
    dt = 1e-4
    new = step(st, cfg, S1, dt=dt)
    f = st.fields
    dX = (new.fields.X - f.X) / dt
    normal_speed = np.einsum("na,na->n", dX, f.phys.nu_cov)
    assert np.allclose(normal_speed, -(f.H - f.h), atol=1e-2 * np.abs(f.H - f.h).max())
    assert np.allclose(radial_velocity(f) * f.phys.graph_factor, -(f.H - f.h))


def test_volume_and_area(bump_run):
    v = bump_run.history.column("volume")
    assert np.abs(v - v[0]).max() <= 1e-9 * v[0]
    assert np.all(np.diff(bump_run.history.column("area")) <= 0)


def test_volume_drifts_without_correction():
    s = GraphSurface.sphere(10.0, L_max=8, perturb=[[2, 0, 0.5]])
    r = run(s, E, FlowConfig(dt=1.0, t_max=10.0, volume_correction=False, diag_every=100))
    v = r.history.column("volume")
    drift = np.abs(v - v[0]).max() / v[0]
    assert 1e-9 < drift < 1e-3


def _terminal(dt, integrator):
    s = GraphSurface.sphere(10.0, L_max=8, perturb=[[2, 0, 0.5]])
    cfg = FlowConfig(dt=dt, t_max=8.0, tol_linf=1e-14, integrator=integrator, diag_every=1000)
    return run(s, E, cfg).surface.coeffs


@pytest.mark.parametrize("integrator,order", [("rk2", 2), ("euler", 1)])
def test_integrator_order(integrator, order):
    ref = _terminal(1.0 / 32, integrator)
    e1 = np.abs(_terminal(1.0, integrator) - ref).max()
    e2 = np.abs(_terminal(0.5, integrator) - ref).max()
    assert e1 / e2 == pytest.approx(2**order, rel=0.15)


def test_l2_bump_linear_rate(bump_run):
    fit = fit_mode_rate(bump_run.history, 2, 0)
    assert fit["rate"] == pytest.approx(4 / 10.0**2, rel=0.05)


def test_horizon_reached_stops_at_t_max():
    s = GraphSurface.sphere(20.0, L_max=8, perturb=[[2, 0, 0.05]])
    r = run(s, S1, FlowConfig(t_max=0.7))
    assert r.status == "horizon_reached"
    assert r.history[-1]["t"] == pytest.approx(0.7, rel=1e-14)


def test_class_exit_on_non_round_start():
    s = GraphSurface.sphere(20.0, perturb=[[2, 0, 6.0]])
    r = run(s, S1, FlowConfig(t_max=1.0))
    assert r.status == "class_exit"
    assert r.class_flags["class_exit_step"] == 0


def test_graph_failure_is_reported():
    s = GraphSurface.sphere(5.0, perturb=[[0, 0, -6.0]])
    r = run(s, E, FlowConfig())
    assert r.status == "graph_failure" and "NonPositiveRadius" in r.message


def test_recentering_follows_the_barycenter():
    s = GraphSurface.sphere(10.0, L_max=8, perturb=[[1, 0, 2.0], [2, 0, 0.3]])
    r = run(s, E, FlowConfig(t_max=5.0, diag_every=50))
    assert any(row["regraphed"] for row in r.history)
    assert r.status != "graph_failure"
    # the graph center moved onto the barycenter
    assert r.surface.center[2] > 1.0


def test_history_csv_round_trip(bump_run, tmp_path):
    p = tmp_path / "h.csv"
    bump_run.history.to_csv(p)
    header = p.read_text().splitlines()[0].split(",")
    assert header[:len(COLUMNS)] == list(COLUMNS) and header[-1] == "a_2_0"
    back = read_history_csv(p)
    for a, b in zip(bump_run.history, back):
        for k, v in a.items():
            if isinstance(v, float) and math.isnan(v):
                assert math.isnan(b[k])
            else:
                assert b[k] == v
    q = tmp_path / "h2.csv"
    back.to_csv(q)
    assert p.read_bytes() == q.read_bytes()


def test_spectral_columns_carried_forward(bump_run):
    h = bump_run.history
    age = h.column("spectral_age")
    assert age[0] == 0 and age.max() == 4
    assert h[-1]["spectral_age"] == 0 or bump_run.status != "converged"


def test_identity_monitor_on_bump_run(bump_run):
    rep = identity_monitor(bump_run.history, E)
    assert rep.area_identity["passed"] and rep.hh_identity["passed"]


def test_identity_monitor_needs_history():
    with pytest.raises(InsufficientHistory):
        identity_monitor(FlowHistory(), E)


def test_decay_fit_degenerate(bump_run):
    with pytest.raises(DegenerateFit):
        decay_fit(bump_run.history, (0.0, 1e-9))


def test_class_invariance_on_round_sphere():
    s = GraphSurface.sphere(20.0, perturb=[[2, 0, 0.05]])
    r = run(s, S1, FlowConfig(t_max=50.0, diag_every=20))
    params = class_params_for(fundamental_forms(S1, s), FlowConfig())
    rep = class_invariance_check(r.history, params)
    assert rep["all_round"] and rep["Ao_L4_preserved"] and rep["area_radius_drop_bounded"]


@pytest.mark.parametrize("bad", [
    {"cfl": 0.0}, {"cfl": 1.5}, {"integrator": "rk4"}, {"tol_linf": 0.0}, {"t_max": -1.0},
    {"diag_every": 0}, {"dt": -0.1}, {"track_modes": [[1, 2]]}, {"bogus": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        FlowConfig.from_dict(bad)


def test_config_round_trip():
    cfg = FlowConfig(cfl=0.3, track_modes=((2, 0),), class_params=RoundnessParams(20.0))
    assert FlowConfig.from_dict(cfg.to_dict()) == cfg
