"""Volume-preserving mean curvature flow of radial graphs.

The surface is ``X = z0 + r(u) u`` with ``r`` expanded in real spherical
harmonics.  The geometric flow moves points with normal speed ``-(H - h)``;
in graph form this is the radial speed

    dr/dt = -(H - h) / g(nu, u)

which differs from the normal motion only by a tangential
reparametrisation.  Each step is explicit (Euler or Heun), optionally
followed by a uniform radial offset restoring the initial enclosed volume
and by a re-expansion about the barycenter when it has drifted.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .ambient import MetricModel
from .errors import (GEOMETRY_ERRORS, CommonGraphFailure, ConfigError, DegenerateFit,
                     InsufficientHistory, VolumeSolveFailure)
from .harmonics import sh_index
from .surface import (GraphSurface, RoundnessParams, SurfaceFields, barycenter,
                      enclosed_volume, fundamental_forms, gradient_norm, hawking_mass,
                      lp_norm, measures_and_radii, regraph, roundness_classify,
                      volume_derivative)

log = logging.getLogger(__name__)

INTEGRATORS = ("euler", "rk2")
STATUSES = ("converged", "horizon_reached", "class_exit", "graph_failure")

# Column order of the history CSV.
COLUMNS = (
    "t", "area", "sigma_area", "volume", "h", "hh_l2", "hh_linf", "Ao_l4", "gradH_l4",
    "a_eta", "pi", "hh_t_l2", "hh_d_l2", "bary_x", "bary_y", "bary_z", "m_H",
    "lambda_1", "lambda_2", "lambda_3", "lambda_4", "stab_min_zero_mean",
    "round", "well_centered",
    # bookkeeping and monitor inputs
    "step", "dt", "volume_offset", "regraphed", "spectral_age", "hh_l4",
    "weak_L_hh", "cubic_H_hh", "hdot_rhs", "flag_a", "flag_b", "flag_c",
)
SPECTRAL_COLUMNS = ("hh_t_l2", "hh_d_l2", "lambda_1", "lambda_2", "lambda_3", "lambda_4",
                    "stab_min_zero_mean", "weak_L_hh", "cubic_H_hh", "hdot_rhs")


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters.

    ``class_params=None`` classifies against ``sigma`` = initial area radius
    with default constants and ``eta``.  ``dt`` overrides the CFL rule.
    ``track_modes`` adds a column ``a_l_m`` per (l, m) with the raw
    harmonic coefficient of r.
    """

    cfl: float = 0.5
    integrator: str = "rk2"
    volume_correction: bool = True
    t_max: float = 1e5
    tol_linf: float = 1e-8
    recenter: bool = True
    class_params: RoundnessParams | None = None
    diag_every: int = 10
    dt: float | None = None
    eta: float = 1.0
    inner_radius: float | None = None
    volume_tol: float = 1e-10
    max_steps: int = 1_000_000
    L_basis: int | None = None
    recenter_fraction: float = 0.1
    track_modes: tuple = ()
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}")
        if not self.tol_linf > 0:
            raise ConfigError("tol_linf must be positive")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if self.diag_every < 1:
            raise ConfigError("diag_every must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.volume_tol > 0:
            raise ConfigError("volume_tol must be positive")
        if self.max_steps < 0 or self.checkpoint_every < 0:
            raise ConfigError("max_steps and checkpoint_every must be non-negative")
        for lm in self.track_modes:
            if len(lm) != 2 or abs(int(lm[1])) > int(lm[0]):
                raise ConfigError(f"bad tracked mode {lm!r}")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "cfl", "integrator", "volume_correction", "t_max", "tol_linf", "recenter",
            "diag_every", "dt", "eta", "inner_radius", "volume_tol", "max_steps", "L_basis",
            "recenter_fraction", "checkpoint_every")}
        out["class_params"] = None if self.class_params is None else self.class_params.to_dict()
        out["track_modes"] = [list(lm) for lm in self.track_modes]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FlowConfig":
        if not isinstance(d, dict):
            raise ConfigError("flow must be a JSON object")
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"flow: unknown keys {sorted(unknown)}")
        try:
            if d.get("class_params") is not None:
                d["class_params"] = RoundnessParams(**d["class_params"])
            if "track_modes" in d:
                d["track_modes"] = tuple(tuple(int(v) for v in lm) for lm in d["track_modes"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"flow: {exc}") from exc


@dataclass
class FlowState:
    """Surface at time ``t`` with the geometry evaluated on it."""

    t: float
    surface: GraphSurface
    fields: SurfaceFields
    volume: float
    volume_target: float
    inner_radius: float
    step: int = 0
    dt: float = 0.0
    volume_offset: float = 0.0
    regraphed: bool = False

    @property
    def sigma_area(self) -> float:
        return math.sqrt(self.fields.area / (4.0 * math.pi))


def _evaluate(model, surface, full: bool) -> SurfaceFields:
    return fundamental_forms(model, surface, with_curvature=full, with_euclidean=False)


def h_average(fields: SurfaceFields) -> float:
    """Area-weighted mean of H with the surface quadrature."""
    return fields.h


def radial_velocity(fields: SurfaceFields, h: float | None = None) -> np.ndarray:
    """Node samples of dr/dt = -(H - h)/g(nu, u)."""
    if h is None:
        h = fields.h
    # graph_factor > 0 is enforced when the fields are built
    return -(fields.H - h) / fields.phys.graph_factor


def _coeff_velocity(fields: SurfaceFields) -> np.ndarray:
    s = fields.surface
    return s.grid.analysis(radial_velocity(fields), s.L_max)


def time_step(state: FlowState, config: FlowConfig) -> float:
    if config.dt is not None:
        return float(config.dt)
    L = state.surface.L_max
    return config.cfl * state.sigma_area**2 / (L * (L + 1))


def initial_state(surface: GraphSurface, model: MetricModel, config: FlowConfig,
                  full: bool = True) -> FlowState:
    fields = _evaluate(model, surface, full)
    rho0 = config.inner_radius
    if rho0 is None:
        rho0 = 0.5 * float(np.linalg.norm(fields.X, axis=1).min())
    if rho0 <= 1.0:
        raise ConfigError("inner volume radius must exceed 1; surface too close to the chart boundary")
    V = enclosed_volume(model, surface, rho0)
    return FlowState(0.0, surface, fields, V, V, rho0)


def _restore_volume(model, surface: GraphSurface, target: float, rho0: float,
                    tol: float, max_iter: int = 20) -> tuple[GraphSurface, float, float]:
    """Uniform radial offset c with V(r + c) = target (scalar Newton)."""
    y00 = 1.0 / math.sqrt(4.0 * math.pi)
    base = surface.coeffs
    c = 0.0
    V = enclosed_volume(model, surface, rho0)
    for _ in range(max_iter):
        if abs(V - target) <= tol * abs(target):
            return surface, c, V
        dV = volume_derivative(model, surface)
        if not dV > 0:
            raise VolumeSolveFailure("non-positive volume derivative")
        c -= (V - target) / dV
        coeffs = base.copy()
        coeffs[0] += c / y00
        surface = surface.with_coeffs(coeffs)
        V = enclosed_volume(model, surface, rho0)
    raise VolumeSolveFailure(f"volume not restored: relative error {abs(V - target) / target:.3e}")


def step(state: FlowState, config: FlowConfig, model: MetricModel,
         full: bool = False, dt: float | None = None) -> FlowState:
    """Advance one explicit step; the returned state has fresh fields.

    ``full`` requests ambient curvature in the new fields (needed by the
    spectral diagnostics).
    """
    if dt is None:
        dt = time_step(state, config)
    surf = state.surface
    k1 = _coeff_velocity(state.fields)
    if config.integrator == "euler":
        coeffs = surf.coeffs + dt * k1
    else:
        mid = surf.with_coeffs(surf.coeffs + dt * k1)
        k2 = _coeff_velocity(_evaluate(model, mid, False))
        coeffs = surf.coeffs + 0.5 * dt * (k1 + k2)
    new = surf.with_coeffs(coeffs)
    offset = 0.0
    if config.volume_correction:
        new, offset, V = _restore_volume(model, new, state.volume_target, state.inner_radius,
                                         config.volume_tol)
    else:
        V = enclosed_volume(model, new, state.inner_radius)
    fields = _evaluate(model, new, full)
    regraphed = False
    if config.recenter:
        z = barycenter(fields)
        sigma = math.sqrt(fields.area / (4.0 * math.pi))
        if np.linalg.norm(z - np.asarray(new.center)) > config.recenter_fraction * sigma:
            new = regraph(new, tuple(float(v) for v in z))
            fields = _evaluate(model, new, full)
            V = enclosed_volume(model, new, state.inner_radius)
            regraphed = True
            log.info("re-expanded graph about %s at t=%.6g", z, state.t + dt)
    return FlowState(state.t + dt, new, fields, V, state.volume_target, state.inner_radius,
                     state.step + 1, dt, offset, regraphed)


# ---------------------------------------------------------------------------
# Diagnostics


def class_params_for(surface_fields: SurfaceFields, config: FlowConfig) -> RoundnessParams:
    if config.class_params is not None:
        return config.class_params
    sigma = math.sqrt(surface_fields.area / (4.0 * math.pi))
    return RoundnessParams(sigma=sigma, eta=config.eta)


def diagnostics(state: FlowState, model: MetricModel, config: FlowConfig,
                params: RoundnessParams | None = None, spectral_row: bool | None = None,
                previous: dict | None = None, c_in: float | None = None) -> dict:
    """One history row for ``state``.

    Spectral columns are computed when ``spectral_row`` (default: the fields
    carry ambient curvature); otherwise they are copied from ``previous``
    and ``spectral_age`` counts the steps since they were computed.
    """
    f = state.fields
    if params is None:
        params = class_params_for(f, config)
    if spectral_row is None:
        spectral_row = f.ric_nn is not None
    radii = measures_and_radii(f)
    h = f.h
    hh = f.H - h
    grad_l4 = lp_norm(f, gradient_norm(f, f.H), 4)
    hh_l4 = lp_norm(f, hh, 4)
    z = barycenter(f)
    rep = roundness_classify(f, radii, params, grad_l4, z)
    sigma = params.sigma
    delta = model.delta
    row = {
        "t": state.t,
        "area": radii.area,
        "sigma_area": radii.sigma_area,
        "volume": state.volume,
        "h": h,
        "hh_l2": math.sqrt(f.integrate(hh * hh)),
        "hh_linf": float(np.abs(hh).max()),
        "Ao_l4": lp_norm(f, np.sqrt(f.Ao2), 4),
        "gradH_l4": grad_l4,
        "a_eta": params.eta * sigma**-4 * hh_l4**4 + grad_l4**4,
        "pi": spectral.pi_functional(f, sigma),
        "bary_x": float(z[0]),
        "bary_y": float(z[1]),
        "bary_z": float(z[2]),
        "m_H": hawking_mass(f),
        "round": rep.round,
        "well_centered": rep.well_centered,
        "step": state.step,
        "dt": state.dt,
        "volume_offset": state.volume_offset,
        "regraphed": state.regraphed,
        "hh_l4": hh_l4,
    }
    if spectral_row:
        mats = spectral.assemble_operators(f, config.L_basis)
        eig = spectral.laplace_eigensystem(mats, 5)
        nt, nd = spectral.translational_split(hh, eig).norms(eig.weights)
        row.update({
            "hh_t_l2": nt,
            "hh_d_l2": nd,
            "lambda_1": float(eig.eigenvalues[1]),
            "lambda_2": float(eig.eigenvalues[2]),
            "lambda_3": float(eig.eigenvalues[3]),
            "lambda_4": float(eig.eigenvalues[4]),
            "stab_min_zero_mean": spectral.stability_spectrum_zero_mean(mats),
            "weak_L_hh": spectral.stability_form(hh, f),
            "cubic_H_hh": f.integrate(f.H * hh**3),
            # |Sigma| dh/dt = int (H-h)(|Ao|^2 + Ric(nu,nu)) - 1/2 int (H-h)^3
            "hdot_rhs": (f.integrate(hh * (f.Ao2 + f.ric_nn)) - 0.5 * f.integrate(hh**3))
            / radii.area,
            "spectral_age": 0,
        })
    elif previous is not None:
        row.update({k: previous[k] for k in SPECTRAL_COLUMNS})
        row["spectral_age"] = previous["spectral_age"] + 1
    else:
        row.update({k: math.nan for k in SPECTRAL_COLUMNS})
        row["spectral_age"] = -1
    if c_in is None:
        c_in = row["hh_t_l2"] * sigma ** (1.0 + delta)
    zn = float(np.linalg.norm(z))
    row["flag_a"] = bool(row["pi"] > (3.0 * c_in + 1.0) * sigma ** (-1.0 - delta))
    row["flag_b"] = bool(row["hh_d_l2"] <= row["hh_t_l2"])
    row["flag_c"] = bool(zn >= 2.0 * params.Bcen * sigma ** (1.0 - delta))
    for lm in config.track_modes:
        row[f"a_{lm[0]}_{lm[1]}"] = float(state.surface.coeffs[sh_index(lm[0], lm[1])])
    return row


class FlowHistory(list):
    """List of diagnostics rows with column access."""

    def column(self, name: str) -> np.ndarray:
        return np.array([float(r[name]) for r in self])

    @property
    def columns(self) -> list:
        if not self:
            return list(COLUMNS)
        extra = [k for k in self[0] if k not in COLUMNS]
        return list(COLUMNS) + extra

    def spectral_mask(self) -> np.ndarray:
        return np.array([r["spectral_age"] == 0 for r in self])

    def to_csv(self, path) -> None:
        cols = self.columns
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self:
                w.writerow([_fmt(r[c]) for c in cols])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def read_history_csv(path) -> FlowHistory:
    hist = FlowHistory()
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if k in ("round", "well_centered", "regraphed", "flag_a", "flag_b", "flag_c"):
                    row[k] = v == "1"
                elif k in ("step", "spectral_age"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            hist.append(row)
    return hist


@dataclass
class FlowResult:
    status: str
    surface: GraphSurface
    history: FlowHistory
    fitted_rates: dict
    class_flags: dict
    message: str = ""
    state: FlowState | None = field(default=None, repr=False)

    @property
    def steps(self) -> int:
        return int(self.history[-1]["step"]) if self.history else 0

    def summary(self) -> dict:
        last = self.history[-1] if self.history else {}
        return {
            "status": self.status,
            "steps": self.steps,
            "final_t": last.get("t"),
            "final_sigma": last.get("sigma_area"),
            "final_h": last.get("h"),
            "final_hh_linf": last.get("hh_linf"),
            "fitted_rates": self.fitted_rates,
            "class_flags": self.class_flags,
            "message": self.message,
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self.summary()), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def run(initial: GraphSurface, model: MetricModel, config: FlowConfig,
        checkpoint=None) -> FlowResult:
    """Flow ``initial`` until convergence, the horizon, or a geometric failure.

    ``checkpoint(step, surface)`` is called every ``config.checkpoint_every``
    steps when given.
    """
    history = FlowHistory()
    try:
        state = initial_state(initial, model, config, full=True)
    except GEOMETRY_ERRORS + (CommonGraphFailure,) as exc:
        return FlowResult("graph_failure", initial, history, {}, {}, f"{type(exc).__name__}: {exc}")
    params = class_params_for(state.fields, config)
    row = diagnostics(state, model, config, params, spectral_row=True)
    c_in = row["hh_t_l2"] * params.sigma ** (1.0 + model.delta)
    history.append(row)
    status, message = None, ""
    while True:
        if row["hh_linf"] <= config.tol_linf:
            status = "converged"
            break
        if state.t >= config.t_max * (1.0 - 1e-14) or state.step >= config.max_steps:
            status = "horizon_reached"
            break
        dt = min(time_step(state, config), config.t_max - state.t)
        full = (state.step + 1) % config.diag_every == 0
        try:
            new = step(state, config, model, full=full, dt=dt)
            if not full:
                # converged rows get full spectral columns
                hh = new.fields.H - new.fields.h
                if float(np.abs(hh).max()) <= config.tol_linf:
                    new.fields = _evaluate(model, new.surface, True)
                    full = True
            row = diagnostics(new, model, config, params, spectral_row=full,
                              previous=row, c_in=c_in)
        except GEOMETRY_ERRORS + (CommonGraphFailure,) as exc:
            status, message = "graph_failure", f"{type(exc).__name__}: {exc}"
            break
        state = new
        history.append(row)
        if checkpoint is not None and config.checkpoint_every and \
                state.step % config.checkpoint_every == 0:
            checkpoint(state.step, state.surface)
    class_flags = {
        "all_round": all(r["round"] for r in history),
        "all_well_centered": all(r["well_centered"] for r in history),
        "class_exit_step": next((r["step"] for r in history if not r["round"]), None),
        "c_in": c_in,
    }
    if status == "horizon_reached" and not class_flags["all_round"]:
        status = "class_exit"
    rates = {}
    if len(history) >= 5:
        t = history.column("t")
        window = (t[0] + 0.1 * (t[-1] - t[0]), t[-1])
        for key in ("hh", "t", "d"):
            try:
                rates[key] = decay_fit(history, window, series=(key,))[key]
            except DegenerateFit:
                rates[key] = None
    return FlowResult(status, state.surface, history, rates, class_flags, message, state)


# ---------------------------------------------------------------------------
# Post-processing


_SERIES = {"hh": "hh_l2", "t": "hh_t_l2", "d": "hh_d_l2"}


def _fit_rate(t, y) -> dict:
    ok = np.isfinite(y) & (y > 0)
    t, y = t[ok], y[ok]
    if t.size < 5:
        raise DegenerateFit(f"need at least 5 positive samples, got {t.size}")
    if np.ptp(t) == 0 or np.ptp(y) == 0:
        raise DegenerateFit("zero variance in the fit window")
    slope, icpt = np.polyfit(t, np.log(y), 1)
    return {"rate": float(-slope), "log_intercept": float(icpt), "points": int(t.size),
            "window": [float(t[0]), float(t[-1])]}


def decay_fit(history: FlowHistory, window, series=("hh", "t", "d")) -> dict:
    """Exponential rates of the squared norms ``|H-h|^2``, ``|(H-h)^t|^2``, ``|(H-h)^d|^2``.

    ``rate`` is minus the least-squares slope of the log against t.  The
    split norms use only rows where they were freshly computed.
    """
    t = history.column("t")
    sel = (t >= window[0]) & (t <= window[1])
    spec = history.spectral_mask()
    out = {}
    for key in series:
        y = history.column(_SERIES[key]) ** 2
        mask = sel if key == "hh" else sel & spec
        out[key] = _fit_rate(t[mask], y[mask])
    return out


def fit_mode_rate(history: FlowHistory, l: int, m: int, window=None) -> dict:
    """Exponential rate of |a_lm| from a tracked-mode column."""
    t = history.column("t")
    y = np.abs(history.column(f"a_{l}_{m}"))
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    return _fit_rate(t, y)


@dataclass
class MonitorReport:
    area_identity: dict
    hh_identity: dict
    hdot_identity: dict
    hdot_scale: dict
    decay_inequality: dict
    barycenter_speed: dict
    ao_trend: dict

    def to_dict(self) -> dict:
        return _jsonable(self.__dict__)


def _summary(rel: np.ndarray, tol: float, n_skipped: int) -> dict:
    rel = np.asarray(rel, dtype=float)
    return {
        "checked": int(rel.size),
        "skipped_unresolved": int(n_skipped),
        "max_rel_error": float(rel.max()) if rel.size else 0.0,
        "tolerance": tol,
        "passed": bool(np.all(rel <= tol)),
    }


def identity_monitor(history: FlowHistory, model: MetricModel | None = None,
                     rtol_area: float = 0.02, rtol_hh: float = 0.05,
                     transient: float = 0.1, hdot_bound: float = 100.0,
                     area_floor: float = 1e-11, hh_floor: float = 1e-9) -> MonitorReport:
    """Finite-difference checks of the integral evolution identities.

    Derivatives are second-order differences over the recorded rows.  A row
    enters the area check only when the area change across its stencil
    exceeds ``area_floor`` times the area (smaller changes are dominated by
    summation rounding); likewise the ``|H-h|^2`` check requires a change
    above ``hh_floor`` times the value.  Stencils touching a re-expanded row
    are skipped.
    """
    n = len(history)
    if n < 3:
        raise InsufficientHistory(f"need at least 3 rows, got {n}")
    spec = history.spectral_mask()
    interior = np.zeros(n, bool)
    interior[1:-1] = True
    regr = np.array([bool(r["regraphed"]) for r in history])
    bad = regr.copy()
    bad[:-1] |= regr[1:]
    bad[1:] |= regr[:-1]
    interior &= ~bad
    if not np.any(interior & spec):
        raise InsufficientHistory("need at least one interior fully-diagnosed row")
    t = history.column("t")
    area = history.column("area")
    hh2 = history.column("hh_l2") ** 2
    h = history.column("h")
    sig = history.column("sigma_area")
    dA = np.gradient(area, t)
    dhh2 = np.gradient(hh2, t)
    dh = np.gradient(h, t)
    span = np.zeros(n)
    span[1:-1] = t[2:] - t[:-2]

    # area: dA/dt = -|H-h|^2
    change = np.zeros(n)
    change[1:-1] = np.abs(area[2:] - area[:-2])
    res_a = interior & (change > area_floor * area)
    rel_a = np.abs(dA[res_a] + hh2[res_a]) / hh2[res_a]
    area_rep = _summary(rel_a, rtol_area, int(np.sum(interior & ~res_a)))

    # |H-h|^2: d/dt = -2 <L(H-h), H-h> - int H (H-h)^3
    sel = interior & spec
    wl = history.column("weak_L_hh")
    cub = history.column("cubic_H_hh")
    rhs = -2.0 * wl - cub
    change[1:-1] = np.abs(hh2[2:] - hh2[:-2])
    res_h = sel & (change > hh_floor * hh2)
    rel_h = np.abs(dhh2[res_h] - rhs[res_h]) / np.maximum(np.abs(rhs[res_h]), 1e-300)
    hh_rep = _summary(rel_h, rtol_hh, int(np.sum(sel & ~res_h)))

    # dh/dt against its exact integral expression
    hdr = history.column("hdot_rhs")
    scale = np.maximum(np.abs(hdr[sel]), 1e-300)
    rel_hd = np.abs(dh[sel] - hdr[sel]) / scale
    hdot_id = {"checked": int(sel.sum()),
               "median_rel_error": float(np.median(rel_hd)) if rel_hd.size else 0.0}

    delta = model.delta if model is not None else 0.5
    c_h = np.abs(dh[interior]) * sig[interior] ** (4.0 + 2.0 * delta)
    c_h_max = float(c_h.max()) if c_h.size else 0.0
    hdot_scale = {"constant": c_h_max, "bound": hdot_bound,
                  "margin": (hdot_bound - c_h_max) / hdot_bound,
                  "passed": bool(c_h_max <= hdot_bound)}

    # -(4 m/sigma^3)|t|^2 - (2/sigma^2)|d|^2 after the transient
    mbar = model.nominal_adm_mass if model is not None else 0.0
    late = sel & (t >= t[0] + transient * (t[-1] - t[0]))
    nt2 = history.column("hh_t_l2") ** 2
    nd2 = history.column("hh_d_l2") ** 2
    bound = -(4.0 * mbar / sig**3) * nt2 - (2.0 / sig**2) * nd2
    holds = dhh2[late] <= bound[late]
    margins = (bound[late] - dhh2[late]) / np.maximum(np.abs(bound[late]), 1e-300)
    decay_rep = {
        "checked": int(late.sum()),
        "fraction_holding": float(holds.mean()) if holds.size else 1.0,
        "min_margin": float(margins.min()) if margins.size else 0.0,
        "mbar": mbar,
    }

    # |dz/dt| <= C sigma^-1 |H-h|_2
    z = np.stack([history.column(k) for k in ("bary_x", "bary_y", "bary_z")], axis=1)
    zdot = np.linalg.norm(np.gradient(z, t, axis=0), axis=1)
    hl2 = history.column("hh_l2")
    ok = interior & (hl2 > 0)
    C = zdot[ok] * sig[ok] / hl2[ok]
    bary_rep = {"constant": float(C.max()) if C.size else 0.0, "checked": int(ok.sum())}

    ao4 = history.column("Ao_l4") ** 4
    dao = np.gradient(ao4, t)
    ao_rep = {"fraction_nonincreasing": float(np.mean(dao[interior] <= 0.0)),
              "checked": int(interior.sum())}
    return MonitorReport(area_rep, hh_rep, hdot_id, hdot_scale, decay_rep, bary_rep, ao_rep)


def class_invariance_check(history: FlowHistory, params: RoundnessParams, delta: float = 0.5,
                           drop_bound: float = 10.0) -> dict:
    """Whether the class bounds persist along the recorded run.

    The Å and a_eta bounds are those of the round class; the barycenter is
    allowed the enlarged radius 3 Bcen sigma^(1-delta).  The area-radius drop
    ``(sigma_0 - sigma_t) sigma^(delta - 1/2)`` must stay in ``[0, drop_bound]``.
    """
    s = params.sigma
    ao = history.column("Ao_l4")
    aeta = params.eta * s**-4 * history.column("hh_l4") ** 4 + history.column("gradH_l4") ** 4
    z = np.linalg.norm(np.stack([history.column(k) for k in ("bary_x", "bary_y", "bary_z")],
                                axis=1), axis=1)
    sig = history.column("sigma_area")
    ao_b = params.B1 * s ** (-1.0 - delta)
    ae_b = params.B2 * s ** (-8.0 - 4.0 * delta)
    z_b = 3.0 * params.Bcen * s ** (1.0 - delta)
    drop = (sig[0] - sig) * s ** (delta - 0.5)
    tiny = 1e-12 * sig[0] * s ** (delta - 0.5)
    return {
        "Ao_L4_preserved": bool(np.all(ao < ao_b)),
        "Ao_L4_min_margin": float(np.min((ao_b - ao) / ao_b)),
        "a_eta_preserved": bool(np.all(aeta < ae_b)),
        "a_eta_min_margin": float(np.min((ae_b - aeta) / ae_b)),
        "barycenter_preserved": bool(np.all(z < z_b)),
        "barycenter_min_margin": float(np.min((z_b - z) / z_b)),
        "area_radius_drop": float(drop.max()),
        "area_radius_drop_bounded": bool(drop.min() >= -tiny and drop.max() <= drop_bound),
        "all_round": all(bool(r["round"]) for r in history),
        "all_well_centered": all(bool(r["well_centered"]) for r in history),
        "params": params.to_dict(),
    }
