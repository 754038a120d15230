"""Analytic asymptotically flat 3-metrics on the chart R^3 minus the unit ball.

Three models are provided: flat space, the Schwarzschild slice
``(1 + m/2|x|)^4 delta`` and Schwarzschild plus a tensor perturbation

    p_ab(x) = eps * |x|^(-p) * q_ab(x/|x|)

whose angular profile ``q`` is a sum of real spherical harmonics of degree
<= 4.  Every jet is closed form: first and second partial derivatives are
written out by hand, never finite differenced.

All evaluation functions are vectorised over points of shape ``(N, 3)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ChartViolation, ConfigError, QuadratureUnderResolved
from .harmonics import get_grid, solid_harmonic

KINDS = ("Euclidean", "Schwarzschild", "PerturbedSchwarzschild")

# symmetric component index -> (alpha, beta)
COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class PerturbationSpec:
    amplitude: float
    decay: float
    modes: tuple[tuple[int, int, int], ...]
    parity: str = "even"

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(tuple(int(v) for v in md) for md in self.modes))
        if self.parity not in ("even", "odd"):
            raise ConfigError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise ConfigError("perturbation amplitude must be finite and >= 0")
        if self.decay <= 0:
            raise ConfigError("perturbation decay exponent must be positive")
        want = 0 if self.parity == "even" else 1
        for l, m, comp in self.modes:
            if not 0 <= l <= 4 or abs(m) > l:
                raise ConfigError(f"mode (l={l}, m={m}) outside 0 <= |m| <= l <= 4")
            if not 0 <= comp < 6:
                raise ConfigError(f"tensor component index {comp} not in 0..5")
            if l % 2 != want:
                raise ConfigError(f"mode l={l} has the wrong parity for a {self.parity} perturbation")

    def sup_bound(self) -> float:
        """Upper bound of max_u |q_ab(u)| summed over modes."""
        return sum(math.sqrt((2 * l + 1) / (4 * math.pi)) for l, _, _ in self.modes)


@dataclass(frozen=True)
class MetricModel:
    kind: str = "Euclidean"
    m: float = 0.0
    delta: float = 0.5
    perturbation: PerturbationSpec | None = None
    cbar: float | None = None
    allow_negative_mass: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown metric kind {self.kind!r}")
        if not 0.0 < self.delta <= 0.5:
            raise ConfigError("delta must lie in (0, 1/2]")
        if self.kind == "Euclidean" and self.m != 0.0:
            raise ConfigError("Euclidean model must have m = 0")
        if self.m < 0 and not self.allow_negative_mass:
            raise ConfigError("negative mass requires allow_negative_mass")
        if self.m <= -2.0:
            raise ConfigError("conformal factor must stay positive on |x| > 1")
        if self.kind == "PerturbedSchwarzschild":
            if self.perturbation is None:
                raise ConfigError("PerturbedSchwarzschild needs a perturbation")
            # keep p_ab well below the smallest conformal factor on the chart
            phi4_min = (1.0 + min(self.m, 0.0) / 2.0) ** 4
            if self.perturbation.amplitude * self.perturbation.sup_bound() >= 0.5 * phi4_min:
                raise ConfigError("perturbation amplitude too large: metric may degenerate")
        elif self.perturbation is not None:
            raise ConfigError(f"{self.kind} model takes no perturbation")

    @classmethod
    def euclidean(cls):
        return cls("Euclidean")

    @classmethod
    def schwarzschild(cls, m: float, **kw):
        return cls("Schwarzschild", m=m, **kw)

    @property
    def nominal_adm_mass(self) -> float:
        """ADM mass when the perturbation flux vanishes (decay > 1)."""
        return self.m


@dataclass
class MetricJet:
    """g[..., a, b], dg[..., c, a, b] = d_c g_ab, ddg[..., c, d, a, b] = d_c d_d g_ab."""

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray


@dataclass
class CurvatureData:
    gamma: np.ndarray  # gamma[..., a, b, c] = Gamma^a_bc
    riemann: np.ndarray  # riemann[..., a, b, c, d] = R_abcd, Ric_bd = g^ac R_abcd
    ricci: np.ndarray
    scalar: np.ndarray


@dataclass
class MassEstimate:
    value: float
    samples: list[tuple[float, float]]
    residual: float
    exponent: float | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "samples": [[r, v] for r, v in self.samples],
            "residual": self.residual,
            "exponent": self.exponent,
        }


def _as_points(points) -> tuple[np.ndarray, bool]:
    x = np.asarray(points, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    rho = np.linalg.norm(x, axis=-1)
    if np.any(rho <= 1.0):
        raise ChartViolation(f"point with |x| = {rho.min():.6g} <= 1 is outside the chart")
    return x, single


def _conformal_jet(m: float, x: np.ndarray):
    """Phi = (1 + m/2rho)^4 with gradient and Hessian."""
    rho = np.linalg.norm(x, axis=-1)
    phi = 1.0 + m / (2.0 * rho)
    dphi = -0.5 * m * x / rho[:, None] ** 3
    eye = np.eye(3)
    ddphi = -0.5 * m * (eye[None] / rho[:, None, None] ** 3
                        - 3.0 * x[:, :, None] * x[:, None, :] / rho[:, None, None] ** 5)
    Phi = phi**4
    dPhi = 4.0 * phi[:, None] ** 3 * dphi
    ddPhi = (12.0 * phi[:, None, None] ** 2 * dphi[:, :, None] * dphi[:, None, :]
             + 4.0 * phi[:, None, None] ** 3 * ddphi)
    return Phi, dPhi, ddPhi


def _perturbation_jet(spec: PerturbationSpec, x: np.ndarray):
    n = x.shape[0]
    p = np.zeros((n, 3, 3))
    dp = np.zeros((n, 3, 3, 3))
    ddp = np.zeros((n, 3, 3, 3, 3))
    rho = np.linalg.norm(x, axis=-1)
    eye = np.eye(3)
    eps = spec.amplitude
    for l, mm, comp in spec.modes:
        S = solid_harmonic(l, mm)
        s = spec.decay + l
        val, grad, hess = S.value(x), S.gradient(x), S.hessian(x)
        f = rho**-s
        df = -s * rho[:, None] ** (-s - 2) * x
        ddf = (-s * rho[:, None, None] ** (-s - 2) * eye[None]
               + s * (s + 2) * rho[:, None, None] ** (-s - 4) * x[:, :, None] * x[:, None, :])
        t = eps * f * val
        dt = eps * (f[:, None] * grad + df * val[:, None])
        ddt = eps * (f[:, None, None] * hess
                     + df[:, :, None] * grad[:, None, :] + grad[:, :, None] * df[:, None, :]
                     + ddf * val[:, None, None])
        a, b = COMPONENTS[comp]
        pairs = {(a, b), (b, a)}
        for (i, j) in pairs:
            p[:, i, j] += t
            dp[:, :, i, j] += dt
            ddp[:, :, :, i, j] += ddt
    return p, dp, ddp


def metric_jet(model: MetricModel, points) -> MetricJet:
    """Exact metric, first and second partial derivatives at ``points``.

    Raises
    ------
    ChartViolation
        If any point has ``|x| <= 1``.
    """
    x, single = _as_points(points)
    n = x.shape[0]
    eye = np.eye(3)
    if model.kind == "Euclidean":
        g = np.broadcast_to(eye, (n, 3, 3)).copy()
        dg = np.zeros((n, 3, 3, 3))
        ddg = np.zeros((n, 3, 3, 3, 3))
    else:
        Phi, dPhi, ddPhi = _conformal_jet(model.m, x)
        g = Phi[:, None, None] * eye[None]
        dg = dPhi[:, :, None, None] * eye[None, None]
        ddg = ddPhi[:, :, :, None, None] * eye[None, None, None]
        if model.perturbation is not None:
            p, dp, ddp = _perturbation_jet(model.perturbation, x)
            g, dg, ddg = g + p, dg + dp, ddg + ddp
    jet = MetricJet(g, dg, ddg)
    if single:
        jet = MetricJet(g[0], dg[0], ddg[0])
    return jet


def metric_only(model: MetricModel, points) -> np.ndarray:
    """Metric tensor without derivatives, shape (N, 3, 3)."""
    x, _ = _as_points(points)
    n = x.shape[0]
    if model.kind == "Euclidean":
        return np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    rho = np.linalg.norm(x, axis=-1)
    g = ((1.0 + model.m / (2.0 * rho)) ** 4)[:, None, None] * np.eye(3)[None]
    if model.perturbation is not None:
        spec = model.perturbation
        for l, mm, comp in spec.modes:
            t = spec.amplitude * rho ** -(spec.decay + l) * solid_harmonic(l, mm).value(x)
            a, b = COMPONENTS[comp]
            g[:, a, b] += t
            if a != b:
                g[:, b, a] += t
    return g


def christoffel(g: np.ndarray, dg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Christoffel symbols of the first and second kind in any dimension.

    Returns ``(first, second)`` with ``first[..., a, b, c] = Gamma_{a,bc}``
    and ``second[..., a, b, c] = Gamma^a_{bc}``.
    """
    # Gamma_{a,bc} = 1/2 (d_b g_ac + d_c g_ab - d_a g_bc)
    first = 0.5 * (np.einsum("...bac->...abc", dg) + np.einsum("...cab->...abc", dg)
                   - dg)
    ginv = np.linalg.inv(g)
    second = np.einsum("...ad,...dbc->...abc", ginv, first)
    return first, second


def curvature_from_jet(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> CurvatureData:
    """Riemann, Ricci and scalar curvature from a metric jet (any dimension).

    Convention: R_abcd = g(R(e_c, e_d) e_b, e_a), so a round sphere of
    radius r has R_abab = g_aa g_bb / r^2 and positive Ricci curvature.
    """
    first, gam = christoffel(g, dg)
    # 1/2 (d_b d_c g_ad + d_a d_d g_bc - d_a d_c g_bd - d_b d_d g_ac)
    second = 0.5 * (np.einsum("...bcad->...abcd", ddg) + np.einsum("...adbc->...abcd", ddg)
                    - np.einsum("...acbd->...abcd", ddg) - np.einsum("...bdac->...abcd", ddg))
    # Gamma_{f,bc} Gamma^f_ad - Gamma_{f,bd} Gamma^f_ac
    t = np.einsum("...fbc,...fad->...abcd", first, gam)
    quad = t - np.swapaxes(t, -1, -2)
    riem = second + quad
    ginv = np.linalg.inv(g)
    ric = np.einsum("...ac,...abcd->...bd", ginv, riem)
    scal = np.einsum("...bd,...bd->...", ginv, ric)
    return CurvatureData(gam, riem, ric, scal)


def curvature(model: MetricModel, points) -> CurvatureData:
    jet = metric_jet(model, points)
    return curvature_from_jet(jet.g, jet.dg, jet.ddg)


# ---------------------------------------------------------------------------
# ADM mass


def _flux_integral(model: MetricModel, R: float, L: int) -> float:
    grid = get_grid(L)
    u = grid.directions[()]
    jet = metric_jet(model, R * u)
    ginv = np.linalg.inv(jet.g)
    nn = np.einsum("na,nab,nb->n", u, ginv, u)
    nu = np.einsum("nab,nb->na", ginv, u) / np.sqrt(nn)[:, None]
    dmu = np.sqrt(np.linalg.det(jet.g)) * np.sqrt(nn) * R * R
    # d_a g_ab - d_b g_aa
    div = np.einsum("naab->nb", jet.dg) - np.einsum("nbaa->nb", jet.dg)
    integrand = np.einsum("nb,nb->n", div, nu) * dmu
    return float(np.sum(grid.weights * integrand) / (16.0 * math.pi))


def flux_integral(model: MetricModel, R: float, tol: float = 1e-8, L_start: int = 8,
                  L_max: int = 128) -> float:
    """ADM flux over the coordinate sphere of radius R, refined until stable."""
    L = L_start
    prev = _flux_integral(model, R, L)
    while True:
        L2 = 2 * L
        cur = _flux_integral(model, R, L2)
        if abs(cur - prev) < tol * max(1.0, abs(cur)):
            return cur
        if L2 >= L_max:
            if abs(cur - prev) > 1e-6 * max(1.0, abs(cur)):
                raise QuadratureUnderResolved(
                    f"flux integral at R={R} changed by {abs(cur - prev):.3g} at L={L2}")
            return cur
        L, prev = L2, cur


def adm_mass(model: MetricModel, radii) -> MassEstimate:
    """Extrapolate the ADM flux integral to infinite radius.

    Fits ``I(R) = m + a R^(-s)``: the exponent comes from the three largest
    radii, then (m, a) from a least-squares fit over all samples.
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("adm_mass needs at least 3 radii")
    if radii[0] <= 2.0:
        raise ValueError("adm_mass radii must exceed 2")
    vals = [flux_integral(model, R) for R in radii]
    samples = list(zip(radii, vals))
    R1, R2, R3 = radii[-3:]
    I1, I2, I3 = vals[-3:]
    d1, d2 = I1 - I2, I2 - I3
    scale = max(1.0, abs(I3))
    if abs(d1) < 1e-15 * scale and abs(d2) < 1e-15 * scale:
        return MassEstimate(I3, samples, 0.0, None)
    if d1 == 0.0 or d2 == 0.0 or d1 / d2 <= 0:
        return MassEstimate(I3, samples, abs(d2), None)
    target = d1 / d2

    def ratio(s):
        return (R1**-s - R2**-s) / (R2**-s - R3**-s) - target

    lo, hi = 1e-3, 20.0
    if ratio(lo) * ratio(hi) > 0:
        # samples do not settle: report the last one with its spread
        return MassEstimate(I3, samples, abs(d2), None)
    s = brentq(ratio, lo, hi, xtol=1e-14)
    A = np.stack([np.ones(len(radii)), np.asarray(radii) ** -s], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.asarray(vals)) ** 2)))
    return MassEstimate(float(coef[0]), samples, resid, float(s))


# ---------------------------------------------------------------------------
# Decay and symmetry verification


def env_seed(default: int = 0) -> int:
    raw = os.environ.get("CMCFLOW_SEED")
    return int(raw) if raw not in (None, "") else default


def _random_directions(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass
class DecayReport:
    radii: list[float]
    metric_ratio: list[float]
    scalar_ratio: list[float]
    cbar: float
    metric_violation: bool
    scalar_violation: bool
    slope_tol: float = 0.1

    @property
    def passed(self) -> bool:
        return not (self.metric_violation or self.scalar_violation)

    def to_dict(self) -> dict:
        return {
            "check": "decay",
            "radii": self.radii,
            "metric_ratio": self.metric_ratio,
            "scalar_ratio": self.scalar_ratio,
            "cbar": self.cbar,
            "metric_violation": self.metric_violation,
            "scalar_violation": self.scalar_violation,
            "passed": self.passed,
        }


def _grows(radii, values, slope_tol):
    """True when log(value) rises faster than ``slope_tol`` in log(radius) at the far end."""
    r, v = radii[-2:], values[-2:]
    if v[1] <= 0.0:
        return False
    if v[0] <= 0.0:
        return True
    return math.log(v[1] / v[0]) / math.log(r[1] / r[0]) > slope_tol


def decay_check(model: MetricModel, sample_radii, samples_per_radius: int = 64,
                seed: int | None = None, slope_tol: float = 0.1) -> DecayReport:
    """Empirical constant of the asymptotic-flatness decay bounds.

    For each radius reports the sup over random directions of
    ``(|g - delta| + |x||dg| + |x|^2|ddg|) * |x|^(1/2 + delta)`` and of
    ``|S| * |x|^(3 + delta)``.  The same directions are used at every radius
    so that the ratios are comparable.  A ratio whose log-log slope between
    the two outermost radii exceeds ``slope_tol`` is flagged as a violation.
    Scalar curvature below ``1e-10 |Rm|`` is rounding noise and counted as 0.
    """
    radii = [float(r) for r in sample_radii]
    if len(radii) < 2 or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 1:
        raise ValueError("sample_radii must be at least two increasing radii > 1")
    rng = np.random.default_rng(env_seed() if seed is None else seed)
    dirs = _random_directions(rng, samples_per_radius)
    d = model.delta
    mratio, sratio = [], []
    for R in radii:
        jet = metric_jet(model, R * dirs)
        cur = curvature_from_jet(jet.g, jet.dg, jet.ddg)
        dev = (np.linalg.norm(jet.g - np.eye(3), axis=(-2, -1))
               + R * np.sqrt(np.sum(jet.dg**2, axis=(1, 2, 3)))
               + R * R * np.sqrt(np.sum(jet.ddg**2, axis=(1, 2, 3, 4))))
        rm = np.sqrt(np.sum(cur.riemann**2, axis=(1, 2, 3, 4)))
        scal = np.where(np.abs(cur.scalar) <= 1e-10 * rm, 0.0, np.abs(cur.scalar))
        mratio.append(float(np.max(dev) * R ** (0.5 + d)))
        sratio.append(float(np.max(scal) * R ** (3.0 + d)))
    cbar = max(max(mratio), max(sratio))
    return DecayReport(radii, mratio, sratio, cbar, _grows(radii, mratio, slope_tol),
                       _grows(radii, sratio, slope_tol), slope_tol)


@dataclass
class RTReport:
    radii: list[float]
    constants: list[float]
    constant: float
    slope: float
    passed: bool
    threshold: float
    slope_tol: float

    def to_dict(self) -> dict:
        return {
            "check": "rt",
            "radii": self.radii,
            "constants": self.constants,
            "constant": self.constant,
            "slope": self.slope,
            "threshold": self.threshold,
            "slope_tol": self.slope_tol,
            "passed": self.passed,
        }


def regge_teitelboim_check(model: MetricModel, sample_radii, samples_per_radius: int = 64,
                           seed: int | None = None, threshold: float = 1e3,
                           slope_tol: float = 0.1) -> RTReport:
    """Antipodal symmetry constants of the metric and Christoffel symbols.

    Per radius: sup of ``|g(x) - g(-x)| |x|^(1+delta) + |G(x) + G(-x)| |x|^(2+delta)``
    over sampled antipodal pairs.  Passes when the largest constant is below
    ``threshold`` and its log-log slope from the innermost to the outermost
    radius is at most ``slope_tol`` (a bounded constant has slope <= 0).
    """
    radii = [float(r) for r in sample_radii]
    if len(radii) < 2 or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 1:
        raise ValueError("sample_radii must be at least two increasing radii > 1")
    rng = np.random.default_rng(env_seed() if seed is None else seed)
    dirs = _random_directions(rng, samples_per_radius)
    d = model.delta
    consts = []
    for R in radii:
        x = R * dirs
        jp, jm = metric_jet(model, x), metric_jet(model, -x)
        _, gp = christoffel(jp.g, jp.dg)
        _, gm = christoffel(jm.g, jm.dg)
        a = np.linalg.norm(jp.g - jm.g, axis=(-2, -1)) * R ** (1.0 + d)
        b = np.sqrt(np.sum((gp + gm) ** 2, axis=(1, 2, 3))) * R ** (2.0 + d)
        consts.append(float(np.max(a + b)))
    const = max(consts)
    # symmetric metrics give exact zeros; tiny values are rounding
    lo, hi = consts[0], consts[-1]
    if hi <= 1e-12:
        slope = 0.0
    elif lo <= 1e-12:
        slope = math.inf
    else:
        slope = math.log(hi / lo) / math.log(radii[-1] / radii[0])
    passed = const <= threshold and slope <= slope_tol
    return RTReport(radii, consts, const, slope, passed, threshold, slope_tol)


# ---------------------------------------------------------------------------
# JSON


def model_from_dict(d: dict) -> MetricModel:
    if not isinstance(d, dict):
        raise ConfigError("model must be a JSON object")
    pert = d.get("perturbation")
    spec = None
    if pert is not None:
        try:
            spec = PerturbationSpec(
                amplitude=float(pert["amplitude"]),
                decay=float(pert["decay"]),
                modes=tuple(tuple(mo) for mo in pert.get("modes", [])),
                parity=pert.get("parity", "even"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"model.perturbation: {exc}") from exc
    try:
        return MetricModel(
            kind=d.get("kind", "Euclidean"),
            m=float(d.get("m", 0.0)),
            delta=float(d.get("delta", 0.5)),
            perturbation=spec,
            cbar=None if d.get("cbar") is None else float(d["cbar"]),
            allow_negative_mass=bool(d.get("allow_negative_mass", False)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model: {exc}") from exc


def model_to_dict(model: MetricModel) -> dict:
    out = {"kind": model.kind, "m": model.m, "delta": model.delta}
    if model.perturbation is not None:
        p = model.perturbation
        out["perturbation"] = {
            "amplitude": p.amplitude,
            "decay": p.decay,
            "modes": [list(mo) for mo in p.modes],
            "parity": p.parity,
        }
    if model.cbar is not None:
        out["cbar"] = model.cbar
    if model.allow_negative_mass:
        out["allow_negative_mass"] = True
    return out
