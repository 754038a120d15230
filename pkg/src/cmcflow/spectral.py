"""Laplace-Beltrami and stability-operator spectra on graph surfaces.

Operators are assembled in weak form over the real spherical harmonics of
degree <= L_basis pulled back to the surface parametrisation:

    K_pq = int <grad b_p, grad b_q>_g dmu      (stiffness)
    M_pq = int b_p b_q dmu                     (mass)
    P_pq = int (|A|^2 + Ric(nu,nu)) b_p b_q dmu  (potential)

so that ``-Delta`` is the pencil (K, M) and the stability operator
``L = -Delta - |A|^2 - Ric(nu,nu)`` is (K - P, M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .errors import BasisTooLarge, EigensolverFailure
from .harmonics import fibonacci_directions, n_coeffs
from .surface import SurfaceFields, angular_derivatives, measures_and_radii


@dataclass
class OperatorMatrices:
    stiffness: np.ndarray
    mass: np.ndarray
    potential: np.ndarray | None
    L_basis: int
    basis: np.ndarray  # (N, nb) node samples of the basis functions
    weights: np.ndarray  # surface quadrature weights

    @property
    def size(self) -> int:
        return self.mass.shape[0]


def assemble_operators(fields: SurfaceFields, L_basis: int | None = None) -> OperatorMatrices:
    """Galerkin stiffness, mass and potential matrices on the surface grid."""
    L_max = fields.surface.L_max
    L_basis = L_max if L_basis is None else int(L_basis)
    if L_basis > L_max:
        raise BasisTooLarge(f"L_basis={L_basis} exceeds the surface L_max={L_max}")
    B = fields.grid.basis(2, L_max)
    nb = n_coeffs(L_basis)
    Y = B[()][:, :nb]
    Yt = B[(0,)][:, :nb]
    Yp = B[(1,)][:, :nb]
    w = fields.weights
    gi = fields.ginv
    K = (Yt.T @ ((w * gi[:, 0, 0])[:, None] * Yt)
         + Yt.T @ ((w * gi[:, 0, 1])[:, None] * Yp)
         + Yp.T @ ((w * gi[:, 1, 0])[:, None] * Yt)
         + Yp.T @ ((w * gi[:, 1, 1])[:, None] * Yp))
    M = Y.T @ (w[:, None] * Y)
    P = None
    if fields.ric_nn is not None:
        P = Y.T @ ((w * fields.potential)[:, None] * Y)
        P = 0.5 * (P + P.T)
    return OperatorMatrices(0.5 * (K + K.T), 0.5 * (M + M.T), P, L_basis, Y, w)


@dataclass
class EigenSystem:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # basis coefficients, M-orthonormal columns
    values: np.ndarray  # (N, k) node samples, L2(dmu)-orthonormal
    weights: np.ndarray
    translational: tuple = (1, 2, 3)

    def inner(self, a, b) -> float:
        return float(np.sum(self.weights * a * b))

    @property
    def translational_values(self) -> np.ndarray:
        return self.values[:, list(self.translational)]

    def translational_projector(self) -> np.ndarray:
        """Rank-3 L2(dmu) projector acting on node samples, shape (N, N)."""
        F = self.translational_values
        return F @ (F * self.weights[:, None]).T


def _check_residuals(K, M, lam, V, tol=1e-8):
    R = K @ V - (M @ V) * lam[None, :]
    MV = np.linalg.norm(M @ V, axis=0)
    bad = np.linalg.norm(R, axis=0) > tol * np.maximum(MV, 1e-300)
    if np.any(bad):
        raise EigensolverFailure(f"{int(bad.sum())} eigenpairs fail the residual check")


def laplace_eigensystem(matrices: OperatorMatrices, k: int = 9) -> EigenSystem:
    """Lowest ``k`` eigenpairs of ``K v = lambda M v``."""
    nb = matrices.size
    if k > nb:
        raise EigensolverFailure(f"requested {k} eigenpairs from a basis of size {nb}")
    try:
        lam, V = scipy.linalg.eigh(matrices.stiffness, matrices.mass, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    _check_residuals(matrices.stiffness, matrices.mass, lam, V)
    vals = matrices.basis @ V
    # fix signs for reproducibility: largest-magnitude node sample positive
    idx = np.argmax(np.abs(vals), axis=0)
    sgn = np.sign(vals[idx, np.arange(vals.shape[1])])
    sgn[sgn == 0] = 1.0
    return EigenSystem(lam, V * sgn, vals * sgn, matrices.weights)


@dataclass
class SpectralSplit:
    w_t: np.ndarray
    w_d: np.ndarray
    coefficients: np.ndarray

    def norms(self, weights) -> tuple[float, float]:
        return (float(np.sqrt(np.sum(weights * self.w_t**2))),
                float(np.sqrt(np.sum(weights * self.w_d**2))))


def translational_split(w: np.ndarray, eig: EigenSystem) -> SpectralSplit:
    F = eig.translational_values
    c = F.T @ (eig.weights * w)
    w_t = F @ c
    return SpectralSplit(w_t, w - w_t, c)


def stability_form(u: np.ndarray, fields: SurfaceFields, v: np.ndarray | None = None) -> float:
    """Weak form ``<L u, v>`` (``v = u`` by default) with spectral gradients."""
    v = u if v is None else v
    du = angular_derivatives(fields, u, 1)
    dv = du if v is u else angular_derivatives(fields, v, 1)
    gu = np.stack([du[(0,)], du[(1,)]], axis=1)
    gv = np.stack([dv[(0,)], dv[(1,)]], axis=1)
    grad = np.einsum("ni,nij,nj->n", gu, fields.ginv, gv)
    return float(np.sum(fields.weights * (grad - fields.potential * u * v)))


def stability_spectrum_zero_mean(matrices: OperatorMatrices) -> float:
    """Smallest eigenvalue of ``L`` on functions of zero mean.

    The constraint ``int v dmu = 0`` is ``c . v = 0`` with ``c = M e_0``;
    the pencil (K - P, M) is restricted to an orthonormal basis of that
    hyperplane.
    """
    if matrices.potential is None:
        raise EigensolverFailure("stability spectrum needs the potential matrix")
    c = matrices.mass[:, 0]
    Q = scipy.linalg.null_space(c[None, :])
    A = Q.T @ (matrices.stiffness - matrices.potential) @ Q
    B = Q.T @ matrices.mass @ Q
    try:
        lam = scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T), eigvals_only=True,
                                subset_by_index=[0, 0])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    return float(lam[0])


def normal_components(fields: SurfaceFields) -> np.ndarray:
    """nu_alpha = g(nu, e_alpha), shape (N, 3)."""
    return fields.phys.nu_cov


def pi_functional(fields: SurfaceFields, sigma: float) -> float:
    """sqrt(sum_alpha (int (H-h) nu_alpha / sigma dmu)^2)."""
    hh = fields.H - fields.h
    v = np.einsum("n,n,na->a", fields.weights, hh, normal_components(fields)) / sigma
    return float(np.linalg.norm(v))


def normal_pairings(fields: SurfaceFields, sigma: float) -> np.ndarray:
    """Weak-form ``<L(H-h), nu_alpha/sigma>`` for alpha = 1..3."""
    hh = fields.H - fields.h
    nu = normal_components(fields)
    return np.array([stability_form(hh, fields, nu[:, a] / sigma) for a in range(3)])


def eigen_estimate_report(eig: EigenSystem, fields: SurfaceFields, m_H: float) -> dict:
    """Residuals of the eigenvalue-mass relation on the translational triple.

    Diagonal: ``lambda_a - h^2/2 - 6 m_H/sigma^3 - int (Ric(nu,nu) - (H^2-h^2)/4) f_a^2``;
    off-diagonal: ``int (Ric(nu,nu) - (H^2-h^2)/4) f_a f_b``.  Both scaled by sigma^3.
    """
    if eig.values.shape[1] < 4:
        raise EigensolverFailure("eigen_estimate_report needs at least 4 eigenpairs")
    sigma = measures_and_radii(fields).sigma_area
    h = fields.h
    q = fields.ric_nn - 0.25 * (fields.H**2 - h * h)
    F = eig.translational_values
    Q = F.T @ ((eig.weights * q)[:, None] * F)
    lam = eig.eigenvalues[list(eig.translational)]
    diag = lam - 0.5 * h * h - 6.0 * m_H / sigma**3 - np.diag(Q)
    cross = [Q[a, b] for a in range(3) for b in range(a + 1, 3)]
    s3 = sigma**3
    return {
        "sigma": sigma,
        "h": h,
        "m_H": m_H,
        "eigenvalues": [float(v) for v in eig.eigenvalues],
        "diagonal_residual_scaled": [float(v * s3) for v in diag],
        "cross_residual_scaled": [float(v * s3) for v in cross],
        "max_abs_scaled": float(max(np.max(np.abs(diag)), max(abs(c) for c in cross)) * s3),
    }


def odd_power_check(u_t: np.ndarray, fields: SurfaceFields) -> dict:
    """``int u^3 dmu`` and its normalisation by ``|u|_2^3``."""
    val = fields.integrate(u_t**3)
    nrm = math.sqrt(fields.integrate(u_t**2))
    return {"integral": val, "l2": nrm, "normalized": val / nrm**3 if nrm > 0 else 0.0}


def odd_power_extreme(eig: EigenSystem, n_dirs: int = 2000) -> float:
    """max over unit ``a`` of ``|int (sum a_i f_i)^3 dmu|`` in the translational subspace.

    The cubic form is odd, so the max of the absolute value is its max over
    the unit sphere: dense direction sample, then a local polish.
    """
    F = eig.translational_values
    T = np.einsum("n,na,nb,nc->abc", eig.weights, F, F, F)

    def cubic(a):
        a = a / np.linalg.norm(a)
        return float(np.einsum("abc,a,b,c->", T, a, a, a))

    dirs = fibonacci_directions(n_dirs)
    vals = np.einsum("abc,na,nb,nc->n", T, dirs, dirs, dirs)
    start = dirs[int(np.argmax(vals))]
    res = minimize(lambda a: -cubic(a), start, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-18 + 1e-12 * abs(vals.max())})
    return max(float(vals.max()), -float(res.fun))


def translational_alignment(eig: EigenSystem, fields: SurfaceFields) -> dict:
    """Distance of f_1..f_3 from normalised coordinate functions after the best rotation."""
    sigma = measures_and_radii(fields).sigma_area
    Fe = math.sqrt(3.0 / (4.0 * math.pi * sigma**4)) * fields.X
    F = eig.translational_values
    w = eig.weights
    C = F.T @ (w[:, None] * Fe)
    U, _, Vt = np.linalg.svd(C)
    R = U @ Vt  # F @ R is closest to Fe
    D = F @ R - Fe
    errs = np.sqrt(np.sum(w[:, None] * D**2, axis=0))
    return {"sigma": sigma, "l2_errors": [float(e) for e in errs], "rotation": R.tolist()}


def pi_bridge(fields: SurfaceFields, eig: EigenSystem, sigma: float) -> dict:
    """Compare (4pi/3)|(H-h)^t|^2 with (sigma/sigma_area)^2 Pi^2.

    Returns the effective constant ``C`` for which the bound
    ``|diff| <= C sigma^(-1-2 delta) (1 + 1/eps) |H-h|^2 + eps |(H-h)^t|^2``
    holds at ``eps = 1`` (0 when the eps-term alone already covers it).
    """
    sa = measures_and_radii(fields).sigma_area
    delta = fields.model.delta
    hh = fields.H - fields.h
    split = translational_split(hh, eig)
    nt, _ = split.norms(eig.weights)
    n2 = fields.integrate(hh**2)
    lhs = 4.0 * math.pi / 3.0 * nt * nt
    pi = pi_functional(fields, sigma)
    rhs = (sigma / sa) ** 2 * pi * pi
    diff = abs(lhs - rhs)
    excess = max(diff - nt * nt, 0.0)
    denom = 2.0 * sa ** (-1.0 - 2.0 * delta) * n2
    C = excess / denom if denom > 0 else (0.0 if excess == 0 else math.inf)
    return {"translational_term": lhs, "pi_term": rhs, "difference": diff,
            "effective_constant": C}


def spectral_summary(fields: SurfaceFields, k: int = 9, L_basis: int | None = None,
                     m_H: float | None = None) -> dict:
    """Everything the CLI spectrum command prints."""
    from .surface import hawking_mass

    mats = assemble_operators(fields, L_basis)
    eig = laplace_eigensystem(mats, k)
    if m_H is None:
        m_H = hawking_mass(fields)
    radii = measures_and_radii(fields)
    hh = fields.H - fields.h
    split = translational_split(hh, eig)
    nt, nd = split.norms(eig.weights)
    return {
        "sigma_area": radii.sigma_area,
        "h": fields.h,
        "hawking_mass": m_H,
        "eigenvalues": [float(v) for v in eig.eigenvalues],
        "stability_min_zero_mean": stability_spectrum_zero_mean(mats),
        "pi": pi_functional(fields, radii.sigma_area),
        "translational_norm": nt,
        "difference_norm": nd,
        "odd_power_max": odd_power_extreme(eig),
        "estimate_report": eigen_estimate_report(eig, fields, m_H),
        "alignment": translational_alignment(eig, fields),
    }
