"""Closed surfaces written as radial graphs over the unit sphere.

A surface is ``X(u) = z0 + r(u) u`` with ``r`` a truncated real spherical
harmonic series.  Everything geometric (metric, normal, second fundamental
form, curvatures, area element) is computed at the nodes of the
tensor-product grid from analytic angular derivatives of ``r``, in both the
physical metric of a :class:`MetricModel` and the flat metric.

Integrals over the surface are ``sum(fields.weights * f)``: the grid weights
integrate over the round sphere and ``fields.density`` converts them to the
induced area measure.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.optimize import minimize

from . import ambient
from .ambient import MetricModel
from .errors import (ChartViolation, ConfigError, CurvatureHypothesisViolated,
                     GraphConditionViolated, InnerSphereNotEnclosed, NonPositiveRadius,
                     UnsupportedOrder)
from .harmonics import (DERIV_KEYS, QuadratureGrid, get_grid, n_coeffs, product_derivs,
                        real_sh, sh_index, to_angles)

EUCLIDEAN = MetricModel.euclidean()


@dataclass(frozen=True, eq=False)
class GraphSurface:
    """Radial graph ``z0 + r(u) u`` with ``r = sum a_k Y_k``, ``k = l*l + l + m``."""

    center: tuple[float, float, float]
    coeffs: np.ndarray
    L_max: int = 16

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).copy()
        if c.ndim != 1:
            raise ConfigError("coeffs must be a flat list")
        nc = n_coeffs(self.L_max)
        if c.size > nc:
            raise ConfigError(f"{c.size} coefficients exceed (L_max+1)^2 = {nc}")
        if c.size < nc:
            c = np.concatenate([c, np.zeros(nc - c.size)])
        if not np.all(np.isfinite(c)):
            raise ConfigError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if len(self.center) != 3:
            raise ConfigError("center must have three components")

    @property
    def grid(self) -> QuadratureGrid:
        return get_grid(self.L_max)

    @classmethod
    def sphere(cls, radius: float, center=(0.0, 0.0, 0.0), L_max: int = 16, perturb=()):
        """Coordinate sphere, optionally with bumps ``[(l, m, amp), ...]``.

        ``amp`` is the peak radial displacement of the bump, so ``(1, m, a)``
        moves the sphere by ``a`` along the corresponding axis at first order.
        """
        if radius <= 0:
            raise ConfigError("sphere radius must be positive")
        c = np.zeros(n_coeffs(L_max))
        c[0] = radius * math.sqrt(4.0 * math.pi)
        for item in perturb:
            l, m, amp = int(item[0]), int(item[1]), float(item[2])
            if l > L_max or abs(m) > l or l < 0:
                raise ConfigError(f"perturbation mode ({l}, {m}) invalid for L_max={L_max}")
            c[sh_index(l, m)] += amp / harmonic_peak(l, m)
        return cls(tuple(center), c, L_max)

    def with_coeffs(self, coeffs) -> "GraphSurface":
        return GraphSurface(self.center, coeffs, self.L_max)

    def radius_in(self, directions) -> np.ndarray:
        """r(u) for arbitrary unit vectors ``u`` of shape (N, 3)."""
        theta, phi = to_angles(np.atleast_2d(directions))
        return real_sh(self.L_max, theta, phi, 0)[()] @ self.coeffs

    def resample(self, L_max: int) -> "GraphSurface":
        """Same radial function on a different truncation (zero-pad or cut)."""
        c = np.zeros(n_coeffs(L_max))
        k = min(c.size, self.coeffs.size)
        c[:k] = self.coeffs[:k]
        return GraphSurface(self.center, c, L_max)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "L_max": self.L_max,
                "coeffs": [float(v) for v in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSurface":
        try:
            return cls(tuple(d["center"]), np.asarray(d["coeffs"], dtype=float), int(d["L_max"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"surface: {exc}") from exc


@functools.lru_cache(maxsize=None)
def harmonic_peak(l: int, m: int) -> float:
    """max over the sphere of |Y_lm|."""
    x, _ = npleg.leggauss(4 * l + 8)
    theta = np.arccos(x)
    phi = np.linspace(0.0, 2.0 * np.pi, 8 * l + 9)[:-1]
    T, P = np.meshgrid(theta, phi, indexing="ij")
    k = sh_index(l, m)
    vals = np.abs(real_sh(l, T.ravel(), P.ravel(), 0)[()][:, k])
    i = int(np.argmax(vals))

    def neg(p):
        return -abs(real_sh(l, np.array([p[0]]), np.array([p[1]]), 0)[()][0, k])

    res = minimize(neg, [T.ravel()[i], P.ravel()[i]], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15})
    return float(max(-res.fun, vals[i]))


# ---------------------------------------------------------------------------
# Node geometry


@dataclass
class NodeGeometry:
    """Radial function, unit directions and embedding derivatives at the nodes.

    Dicts are keyed by sorted angular derivative tuples (0 = theta, 1 = phi).
    """

    r: dict
    u: dict
    X: dict
    order: int


def synthesize(surface: GraphSurface, order: int = 2) -> NodeGeometry:
    grid = surface.grid
    B = grid.basis(max(order, 2), surface.L_max)
    keys = [k for o in range(order + 1) for k in DERIV_KEYS[o]]
    r = {k: B[k] @ surface.coeffs for k in keys}
    if np.any(r[()] <= 0):
        raise NonPositiveRadius(f"radial function reaches {r[()].min():.6g} <= 0")
    u = grid.directions
    X = product_derivs(r, u, order)
    X[()] = X[()] + np.asarray(surface.center)[None, :]
    return NodeGeometry(r, u, X, order)


def _stack_first(X):
    return np.stack([X[(0,)], X[(1,)]], axis=1)


def _stack_second(X):
    return np.stack([np.stack([X[(0, 0)], X[(0, 1)]], axis=1),
                     np.stack([X[(0, 1)], X[(1, 1)]], axis=1)], axis=1)


def _stack_third(X):
    out = np.empty(X[(0, 0, 0)].shape[:1] + (2, 2, 2) + X[(0, 0, 0)].shape[1:])
    for i in range(2):
        for j in range(2):
            for k in range(2):
                out[:, i, j, k] = X[tuple(sorted((i, j, k)))]
    return out


def _inv2(g):
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    inv = np.empty_like(g)
    inv[:, 0, 0] = g[:, 1, 1] / det
    inv[:, 1, 1] = g[:, 0, 0] / det
    inv[:, 0, 1] = -g[:, 0, 1] / det
    inv[:, 1, 0] = -g[:, 1, 0] / det
    return inv, det


@dataclass
class Extrinsic:
    g: np.ndarray  # (N, 2, 2) induced metric
    ginv: np.ndarray
    det: np.ndarray
    dg: np.ndarray  # (N, 2, 2, 2) dg[k, i, j] = d_k g_ij
    nu: np.ndarray  # (N, 3) unit normal vector
    nu_cov: np.ndarray  # (N, 3) metric dual of nu
    h: np.ndarray  # (N, 2, 2)
    H: np.ndarray
    A2: np.ndarray  # |A|^2
    Ao: np.ndarray  # traceless part
    Ao2: np.ndarray
    kappa: np.ndarray  # (N, 2), ascending
    graph_factor: np.ndarray  # g(nu, u)
    density: np.ndarray  # area element relative to the round measure


def _extrinsic(G, dG, Xi, Xij, u, sin_theta) -> Extrinsic:
    """Second fundamental form of the immersion ``X`` in the metric ``G``."""
    N = Xi.shape[0]
    XiT = np.swapaxes(Xi, 1, 2)
    g = Xi @ G @ XiT
    ginv, det = _inv2(g)
    dgi = ((Xij.reshape(N, 4, 3) @ G) @ XiT).reshape(N, 2, 2, 2)
    dgi = dgi + np.swapaxes(dgi, 2, 3)
    if dG is not None:
        # d_k g_ij gains (d_c G_ab) X_k^c X_i^a X_j^b
        D = (Xi @ dG.reshape(N, 3, 9)).reshape(N, 2, 3, 3)
        dgi = dgi + Xi[:, None] @ D @ XiT[:, None]
    # conormal: annihilates both tangents
    n = np.cross(Xi[:, 0], Xi[:, 1])
    Ginv = np.linalg.inv(G)
    Gn = (Ginv @ n[:, :, None])[:, :, 0]
    nn = np.sqrt(np.sum(n * Gn, axis=1))
    nu_cov = n / nn[:, None]
    nu = Gn / nn[:, None]
    graph_factor = np.sum(nu_cov * u, axis=1)
    if np.any(graph_factor <= 0):
        raise GraphConditionViolated(
            f"normal is not transversal to the radial direction (min g(nu,u) = {graph_factor.min():.3g})")
    if dG is None:
        acc = Xij
    else:
        _, gam = ambient.christoffel(G, dG)
        quad = Xi[:, None] @ gam @ XiT[:, None]  # (N, b, i, j)
        acc = Xij + np.moveaxis(quad, 1, 3)
    h = -(acc.reshape(N, 4, 3) @ nu_cov[:, :, None]).reshape(N, 2, 2)
    H = np.einsum("nij,nij->n", ginv, h)
    S = ginv @ h  # shape operator
    A2 = np.einsum("nij,nji->n", S, S)
    Ao = h - 0.5 * H[:, None, None] * g
    # eigenvalues of the shape operator, discriminant without cancellation
    disc = 0.25 * (S[:, 0, 0] - S[:, 1, 1]) ** 2 + S[:, 0, 1] * S[:, 1, 0]
    disc = np.maximum(disc, 0.0)
    s = np.sqrt(disc)
    Ao2 = 2.0 * disc  # |Ao|^2 = (k1 - k2)^2 / 2
    kappa = np.stack([0.5 * H - s, 0.5 * H + s], axis=1)
    density = np.sqrt(det) / sin_theta
    return Extrinsic(g, ginv, det, dgi, nu, nu_cov, h, H, A2, Ao, Ao2, kappa, graph_factor,
                     density)


@dataclass
class SurfaceFields:
    """Per-node geometry of a :class:`GraphSurface` in a metric model.

    Attributes without suffix are physical; ``*_e`` are Euclidean.  Surface
    integrals are ``np.sum(weights * f)`` (physical) or
    ``np.sum(weights_e * f)`` (Euclidean).
    """

    surface: GraphSurface
    model: MetricModel
    geom: NodeGeometry
    X: np.ndarray
    Xi: np.ndarray
    Xij: np.ndarray
    u: np.ndarray
    r: np.ndarray
    phys: Extrinsic
    eucl: Extrinsic | None
    weights: np.ndarray
    weights_e: np.ndarray | None
    ambient_g: np.ndarray
    ric_nn: np.ndarray | None = None
    scalar_ambient: np.ndarray | None = None
    riemann: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # convenient aliases
    @property
    def grid(self) -> QuadratureGrid:
        return self.surface.grid

    @property
    def H(self):
        return self.phys.H

    @property
    def H_e(self):
        return self.eucl.H

    @property
    def g(self):
        return self.phys.g

    @property
    def ginv(self):
        return self.phys.ginv

    @property
    def nu(self):
        return self.phys.nu

    @property
    def A2(self):
        return self.phys.A2

    @property
    def Ao2(self):
        return self.phys.Ao2

    @property
    def kappa(self):
        return self.phys.kappa

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f))

    @property
    def h(self) -> float:
        """Area-weighted mean of H."""
        return float(np.sum(self.weights * self.phys.H) / np.sum(self.weights))

    @property
    def potential(self) -> np.ndarray:
        """|A|^2 + Ric(nu, nu), the zeroth-order term of the stability operator."""
        if self.ric_nn is None:
            raise ValueError("fields were computed without ambient curvature")
        return self.phys.A2 + self.ric_nn


def fundamental_forms(model: MetricModel, surface: GraphSurface,
                      with_curvature: bool = True, with_euclidean: bool = True) -> SurfaceFields:
    """Induced metric, normal, second fundamental form and curvatures.

    ``with_curvature=False`` skips the ambient Riemann tensor (only H and
    first-order data are then needed, e.g. inside a flow step);
    ``with_euclidean=False`` leaves ``eucl`` and ``weights_e`` as None.

    Raises
    ------
    NonPositiveRadius, ChartViolation, GraphConditionViolated
    """
    geom = synthesize(surface, 2)
    X = geom.X[()]
    Xi = _stack_first(geom.X)
    Xij = _stack_second(geom.X)
    u = geom.u[()]
    sin_t = np.sin(surface.grid.theta)
    jet = ambient.metric_jet(model, X)
    G, dG = jet.g, (None if model.kind == "Euclidean" else jet.dg)
    phys = _extrinsic(G, dG, Xi, Xij, u, sin_t)
    w = surface.grid.weights
    eucl = w_e = None
    if with_euclidean:
        eucl = _extrinsic(np.broadcast_to(np.eye(3), (X.shape[0], 3, 3)), None, Xi, Xij, u, sin_t)
        w_e = w * eucl.density
    fields = SurfaceFields(surface, model, geom, X, Xi, Xij, u, geom.r[()], phys, eucl,
                           w * phys.density, w_e, np.asarray(G))
    if with_curvature:
        cur = ambient.curvature_from_jet(jet.g, jet.dg, jet.ddg)
        fields.ric_nn = np.einsum("na,nab,nb->n", phys.nu, cur.ricci, phys.nu)
        fields.scalar_ambient = cur.scalar
        fields.riemann = cur.riemann
    return fields


# ---------------------------------------------------------------------------
# Calculus on the surface


def angular_derivatives(fields: SurfaceFields, f: np.ndarray, order: int = 1,
                        L: int | None = None) -> dict:
    """Partial derivatives of a node field, via projection onto harmonics <= L."""
    grid = fields.grid
    L = fields.surface.L_max if L is None else L
    c = grid.analysis(np.asarray(f, dtype=float), L)
    B = grid.basis(max(order, 2), L)
    return {k: B[k] @ c for o in range(order + 1) for k in DERIV_KEYS[o]}


def gradient(fields: SurfaceFields, f: np.ndarray) -> np.ndarray:
    """Coordinate partials (d_theta f, d_phi f), shape (N, 2)."""
    d = angular_derivatives(fields, f, 1)
    return np.stack([d[(0,)], d[(1,)]], axis=1)


def gradient_norm(fields: SurfaceFields, f: np.ndarray) -> np.ndarray:
    df = gradient(fields, f)
    return np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", df, fields.ginv, df), 0.0))


def intrinsic_christoffel(fields: SurfaceFields) -> np.ndarray:
    if "gamma_int" not in fields._cache:
        _, gam = ambient.christoffel(fields.phys.g, fields.phys.dg)
        fields._cache["gamma_int"] = gam
    return fields._cache["gamma_int"]


def hessian(fields: SurfaceFields, f: np.ndarray) -> np.ndarray:
    """Covariant Hessian of a scalar node field, shape (N, 2, 2)."""
    d = angular_derivatives(fields, f, 2)
    df = np.stack([d[(0,)], d[(1,)]], axis=1)
    dd = np.stack([np.stack([d[(0, 0)], d[(0, 1)]], axis=1),
                   np.stack([d[(0, 1)], d[(1, 1)]], axis=1)], axis=1)
    gam = intrinsic_christoffel(fields)
    return dd - np.einsum("nkij,nk->nij", gam, df)


def hessian_norm(fields: SurfaceFields, f: np.ndarray) -> np.ndarray:
    hs = hessian(fields, f)
    gi = fields.ginv
    return np.sqrt(np.maximum(np.einsum("nik,njl,nij,nkl->n", gi, gi, hs, hs), 0.0))


def lp_norm(fields: SurfaceFields, values: np.ndarray, p: float) -> float:
    """L^p norm of pointwise magnitudes ``values`` in the physical measure."""
    a = np.abs(np.asarray(values, dtype=float))
    if math.isinf(p):
        return float(a.max())
    if p < 1:
        raise ValueError("p must lie in [1, inf]")
    return float(np.sum(fields.weights * a**p) ** (1.0 / p))


def tensor_norm(fields: SurfaceFields, T: np.ndarray) -> np.ndarray:
    """Pointwise g-norm of a covariant 2-tensor field (N, 2, 2)."""
    gi = fields.ginv
    return np.sqrt(np.maximum(np.einsum("nik,njl,nij,nkl->n", gi, gi, T, T), 0.0))


def sobolev_norm(fields: SurfaceFields, f: np.ndarray, k: int, p: float,
                 sigma: float | None = None) -> float:
    """Radius-weighted Sobolev norm of a scalar node field.

    ``W^{0,p} = L^p`` and ``W^{k+1,p}(f) = |f|_p + sigma |grad f|_{W^{k,p}}``,
    so ``k = 2`` is ``|f|_p + sigma |grad f|_p + sigma^2 |Hess f|_p``.
    """
    if k not in (0, 1, 2):
        raise UnsupportedOrder(f"Sobolev order {k} not supported (use 0, 1 or 2)")
    if sigma is None:
        sigma = math.sqrt(fields.area / (4.0 * math.pi))
    out = lp_norm(fields, f, p)
    if k >= 1:
        out += sigma * lp_norm(fields, gradient_norm(fields, f), p)
    if k >= 2:
        out += sigma**2 * lp_norm(fields, hessian_norm(fields, f), p)
    return out


def intrinsic_scalar_curvature(model: MetricModel, surface: GraphSurface) -> np.ndarray:
    """Scalar curvature of the induced metric, from exact derivatives of g_ij.

    Independent of the second fundamental form; used to check the Gauss
    equation ``S = S_amb - 2 Ric(nu,nu) + H^2 - |A|^2``.
    """
    geom = synthesize(surface, 3)
    X = geom.X[()]
    Xi = _stack_first(geom.X)
    Xij = _stack_second(geom.X)
    Xijk = _stack_third(geom.X)
    jet = ambient.metric_jet(model, X)
    G, dG, ddG = jet.g, jet.dg, jet.ddg
    g = np.einsum("nia,nab,njb->nij", Xi, G, Xi)
    dg = (np.einsum("ncab,nkc,nia,njb->nkij", dG, Xi, Xi, Xi)
          + np.einsum("nkia,nab,njb->nkij", Xij, G, Xi)
          + np.einsum("nia,nab,nkjb->nkij", Xi, G, Xij))
    ddg = (np.einsum("ndcab,nld,nkc,nia,njb->nlkij", ddG, Xi, Xi, Xi, Xi)
           + np.einsum("ncab,nlkc,nia,njb->nlkij", dG, Xij, Xi, Xi)
           + np.einsum("ncab,nkc,nlia,njb->nlkij", dG, Xi, Xij, Xi)
           + np.einsum("ncab,nkc,nia,nljb->nlkij", dG, Xi, Xi, Xij)
           + np.einsum("ndab,nld,nkia,njb->nlkij", dG, Xi, Xij, Xi)
           + np.einsum("nlkia,nab,njb->nlkij", Xijk, G, Xi)
           + np.einsum("nkia,nab,nljb->nlkij", Xij, G, Xij)
           + np.einsum("ndab,nld,nia,nkjb->nlkij", dG, Xi, Xi, Xij)
           + np.einsum("nlia,nab,nkjb->nlkij", Xij, G, Xij)
           + np.einsum("nia,nab,nlkjb->nlkij", Xi, G, Xijk))
    return ambient.curvature_from_jet(g, dg, ddg).scalar


# ---------------------------------------------------------------------------
# Global quantities


@dataclass
class Radii:
    r_min: float
    r_max: float
    sigma_area: float
    area: float


def measures_and_radii(fields: SurfaceFields) -> Radii:
    area = fields.area
    norms = np.linalg.norm(fields.X, axis=1)
    return Radii(float(norms.min()), float(norms.max()), math.sqrt(area / (4.0 * math.pi)), area)


def barycenter(fields: SurfaceFields) -> np.ndarray:
    return np.einsum("n,na->a", fields.weights, fields.X) / fields.area


def hawking_mass(fields: SurfaceFields) -> float:
    area = fields.area
    return math.sqrt(area / (16.0 * math.pi)) * (1.0 - fields.integrate(fields.H**2) / (16.0 * math.pi))


@functools.lru_cache(maxsize=None)
def _radial_rule(order: int):
    return npleg.leggauss(order)


def _inner_radius(surface: GraphSurface, u: np.ndarray, rho0: float, inner_center) -> np.ndarray:
    d = np.asarray(surface.center) - np.asarray(inner_center, dtype=float)
    if np.linalg.norm(d) >= rho0:
        raise InnerSphereNotEnclosed("graph center lies outside the inner sphere")
    du = u @ d
    return -du + np.sqrt(du * du - d @ d + rho0 * rho0)


def enclosed_volume(model: MetricModel, surface: GraphSurface, inner_radius: float,
                    order: int = 24, inner_center=(0.0, 0.0, 0.0)) -> float:
    """Physical volume between the sphere ``|x - inner_center| = inner_radius`` and the surface.

    Radial Gauss-Legendre of the given order along each grid ray from the
    graph center, times the sphere quadrature.
    """
    if inner_radius <= 1.0:
        raise InnerSphereNotEnclosed("inner radius must exceed 1 (chart boundary)")
    grid = surface.grid
    u = grid.directions[()]
    r = grid.basis(2)[()] @ surface.coeffs
    rin = _inner_radius(surface, u, inner_radius, inner_center)
    if np.any(r <= rin):
        raise InnerSphereNotEnclosed("surface does not enclose the inner sphere")
    xi, wi = _radial_rule(order)
    half = 0.5 * (r - rin)
    s = rin[:, None] + half[:, None] * (1.0 + xi[None, :])
    z0 = np.asarray(surface.center)
    pts = z0[None, None, :] + s[:, :, None] * u[:, None, :]
    if model.kind == "Euclidean":
        vol_el = np.ones(s.shape)
    elif model.perturbation is None:
        rho = np.linalg.norm(pts, axis=-1)
        if np.any(rho <= 1.0):
            raise ChartViolation("volume quadrature point inside the unit ball")
        vol_el = (1.0 + model.m / (2.0 * rho)) ** 6
    else:
        G = ambient.metric_only(model, pts.reshape(-1, 3))
        vol_el = np.sqrt(np.linalg.det(G)).reshape(s.shape)
    radial = half * np.sum(wi[None, :] * vol_el * s * s, axis=1)
    return float(np.sum(grid.weights * radial))


def volume_derivative(model: MetricModel, surface: GraphSurface) -> float:
    """d/dc of the enclosed volume under the uniform radial offset ``r -> r + c``."""
    grid = surface.grid
    u = grid.directions[()]
    r = grid.basis(2)[()] @ surface.coeffs
    X = np.asarray(surface.center)[None, :] + r[:, None] * u
    G = ambient.metric_only(model, X)
    return float(np.sum(grid.weights * np.sqrt(np.linalg.det(G)) * r * r))


# ---------------------------------------------------------------------------
# Roundness


@dataclass(frozen=True)
class RoundnessParams:
    sigma: float
    eta: float = 1.0
    B1: float = 10.0
    B2: float = 10.0
    Bcen: float = 10.0

    def __post_init__(self):
        if not self.sigma > 1:
            raise ConfigError("roundness sigma must exceed 1")
        if min(self.eta, self.B1, self.B2, self.Bcen) <= 0:
            raise ConfigError("roundness constants must be positive")

    def to_dict(self):
        return {"sigma": self.sigma, "eta": self.eta, "B1": self.B1, "B2": self.B2,
                "Bcen": self.Bcen}


ROUND_KEYS = ("A_sup", "kappa_min", "area_lower", "area_upper", "r_lower", "r_order",
              "R_upper", "Ao_L4", "a_eta")


@dataclass
class RoundnessReport:
    margins: dict
    attained: dict
    round: bool
    well_centered: bool

    def to_dict(self):
        return {"margins": self.margins, "attained": self.attained, "round": self.round,
                "well_centered": self.well_centered}


def a_eta(fields: SurfaceFields, sigma: float, eta: float, grad_H_l4: float | None = None) -> float:
    """eta sigma^-4 |H-h|_4^4 + |grad H|_4^4."""
    hh = fields.H - fields.h
    if grad_H_l4 is None:
        grad_H_l4 = lp_norm(fields, gradient_norm(fields, fields.H), 4)
    return eta * sigma**-4 * lp_norm(fields, hh, 4) ** 4 + grad_H_l4**4


def roundness_classify(fields: SurfaceFields, radii: Radii, params: RoundnessParams,
                       grad_H_l4: float | None = None, z=None) -> RoundnessReport:
    """Evaluate every inequality of the round / well-centered class.

    Margins are ``(bound - attained) / bound`` for upper bounds and
    ``(attained - bound) / bound`` for lower bounds; positive means satisfied.
    The ordering ``r <= R`` is trivially true and reported as a zero margin.
    """
    s = params.sigma
    delta = fields.model.delta
    if z is None:
        z = barycenter(fields)
    if grad_H_l4 is None:
        grad_H_l4 = lp_norm(fields, gradient_norm(fields, fields.H), 4)
    A_sup = float(np.sqrt(fields.A2.max()))
    k_min = float(fields.kappa.min())
    Ao4 = lp_norm(fields, np.sqrt(fields.Ao2), 4)
    aeta = a_eta(fields, s, params.eta, grad_H_l4)
    zn = float(np.linalg.norm(z))
    bounds = {
        "A_sup": (math.sqrt(2.5) / s, A_sup, "upper"),
        "kappa_min": (0.5 / s, k_min, "lower"),
        "area_lower": (3.5 * math.pi * s * s, radii.area, "lower"),
        "area_upper": (5.0 * math.pi * s * s, radii.area, "upper_eq"),
        "r_lower": (0.75, radii.r_min / s, "lower"),
        "R_upper": (1.25, radii.r_max / s, "upper_eq"),
        "Ao_L4": (params.B1 * s ** (-1.0 - delta), Ao4, "upper"),
        "a_eta": (params.B2 * s ** (-8.0 - 4.0 * delta), aeta, "upper"),
        "barycenter": (params.Bcen * s ** (1.0 - delta), zn, "upper"),
    }
    margins, attained = {}, {}
    ok = True
    for key, (bound, val, kind) in bounds.items():
        attained[key] = float(val)
        if kind == "lower":
            mg = (val - bound) / bound
            good = mg > 0
        else:
            mg = (bound - val) / bound
            good = mg > 0 if kind == "upper" else mg >= 0
        margins[key] = float(mg)
        if key != "barycenter":
            ok = ok and good
    margins["r_order"] = (radii.r_max - radii.r_min) / s
    attained["r_order"] = radii.r_max - radii.r_min
    wc = ok and margins["barycenter"] > 0
    return RoundnessReport(margins, attained, bool(ok), bool(wc))


# ---------------------------------------------------------------------------
# Comparison with Euclidean geometry


@dataclass
class ComparisonReport:
    rows: dict
    curvature_rows: bool

    def to_dict(self):
        return {"rows": self.rows, "curvature_rows": self.curvature_rows}


def euclidean_comparison(fields: SurfaceFields, strict: bool = True) -> ComparisonReport:
    """Weighted sup-differences between physical and Euclidean geometry.

    Raises :class:`CurvatureHypothesisViolated` when ``|A| > 10 / r_min``
    and ``strict``; otherwise the H and traceless rows are omitted.
    """
    p, e = fields.phys, fields.eucl
    x = np.linalg.norm(fields.X, axis=1)
    d = fields.model.delta
    w1 = x ** (0.5 + d)
    w3 = x ** (1.5 + d)
    dg = tensor_norm(fields, p.g - e.g)
    dnu_vec = p.nu - e.nu
    dnu = np.sqrt(np.einsum("na,nab,nb->n", dnu_vec, fields.ambient_g, dnu_vec))
    rows = {
        "metric": float(np.max(dg * w1)),
        "normal": float(np.max(dnu * w1)),
        "area_element": float(np.max(np.abs(p.density / e.density - 1.0) * w1)),
    }
    r_min = float(x.min())
    curv_ok = bool(np.sqrt(p.A2.max()) <= 10.0 / r_min)
    if curv_ok:
        rows["mean_curvature"] = float(np.max(np.abs(p.H - e.H) * w3))
        rows["traceless"] = float(np.max(tensor_norm(fields, p.Ao - e.Ao) * w3))
    elif strict:
        raise CurvatureHypothesisViolated("|A| exceeds 10 / r_min")
    return ComparisonReport(rows, curv_ok)


def write_fields_csv(fields: SurfaceFields, path) -> None:
    """One row per node: angles, position, normal, curvatures, area weight."""
    cols = ["theta", "phi", "x", "y", "z", "nu_x", "nu_y", "nu_z", "H", "H_e",
            "kappa1", "kappa2", "Ao2", "density", "weight"]
    data = np.column_stack([fields.grid.theta, fields.grid.phi, fields.X, fields.nu, fields.H,
                            fields.H_e, fields.kappa, fields.Ao2, fields.phys.density,
                            fields.weights])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in data:
            w.writerow(["%.17g" % v for v in row])


# ---------------------------------------------------------------------------
# Re-graphing about another center


def radii_about(surface: GraphSurface, center, directions, iters: int = 60) -> np.ndarray:
    """Distance from ``center`` to the surface along each unit direction.

    Solves ``|p - z0| = r((p - z0)/|p - z0|)`` for ``p = center + s u`` by
    vectorised bisection on ``s``.

    Raises
    ------
    CommonGraphFailure
        If some ray does not cross the surface exactly once in the bracket
        (the surface is not a graph about ``center``).
    """
    from .errors import CommonGraphFailure

    u = np.atleast_2d(np.asarray(directions, dtype=float))
    c = np.asarray(center, dtype=float)
    z0 = np.asarray(surface.center)
    d = c - z0
    dense = surface.radius_in(u)  # sample of r for bracketing
    r_lo = float(min(dense.min(), surface.coeffs[0] / math.sqrt(4.0 * math.pi)))
    r_hi = float(max(dense.max(), surface.coeffs[0] / math.sqrt(4.0 * math.pi)))
    dist = float(np.linalg.norm(d))
    if dist >= 0.5 * r_lo:
        raise CommonGraphFailure("new center is too far from the graph center")

    def F(s):
        p = d[None, :] + s[:, None] * u
        rho = np.linalg.norm(p, axis=1)
        return rho - surface.radius_in(p / rho[:, None])

    lo = np.full(u.shape[0], max(r_lo - dist, 1e-9) * 0.5)
    hi = np.full(u.shape[0], (r_hi + dist) * 1.5)
    flo, fhi = F(lo), F(hi)
    if np.any(flo >= 0) or np.any(fhi <= 0):
        raise CommonGraphFailure("a ray from the new center does not cross the surface")
    # monotonicity check on a coarse sample of each ray
    ss = np.linspace(0.0, 1.0, 9)
    prev = flo
    for a in ss[1:]:
        cur = F(lo + a * (hi - lo))
        if np.any(cur < prev - 1e-12 * r_hi):
            raise CommonGraphFailure("surface is not star-shaped about the new center")
        prev = cur
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        neg = fm < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def regraph(surface: GraphSurface, center) -> GraphSurface:
    """Re-expand the surface as a radial graph about ``center``."""
    grid = surface.grid
    s = radii_about(surface, center, grid.directions[()])
    return GraphSurface(tuple(center), grid.analysis(s, surface.L_max), surface.L_max)
