"""Real spherical harmonics, the tensor-product sphere grid and solid harmonics.

Real harmonics are indexed by ``k = l*l + l + m`` with ``-l <= m <= l``.
They are L2-orthonormal on the unit sphere, carry no Condon-Shortley phase
(so ``Y_{1,1} ~ x``, ``Y_{1,-1} ~ y``, ``Y_{1,0} ~ z``), and are built as

    Y_lm = sqrt(2) * P_l^m(theta) * cos(m phi)     m > 0
    Y_l0 = P_l^0(theta)
    Y_lm = sqrt(2) * P_l^|m|(theta) * sin(|m| phi)  m < 0

with ``P`` the normalised spherical Legendre functions from scipy.

Angular derivatives are keyed by sorted tuples of coordinate indices,
0 for theta and 1 for phi: ``()`` is the value, ``(0,)`` is d/dtheta,
``(0, 1)`` is d2/dtheta dphi, and so on up to third order.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import sph_legendre_p

DERIV_KEYS = {
    0: [()],
    1: [(0,), (1,)],
    2: [(0, 0), (0, 1), (1, 1)],
    3: [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)],
}


def n_coeffs(L: int) -> int:
    return (L + 1) ** 2


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def degrees(L: int) -> np.ndarray:
    """Degree ``l`` of each coefficient slot up to ``L``."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])


def orders(L: int) -> np.ndarray:
    return np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])


def _legendre_theta(L: int, m: int, theta: np.ndarray, order: int) -> list[np.ndarray]:
    """Normalised P_l^m(theta) for l = m..L and theta-derivatives up to ``order``."""
    ls = np.arange(m, L + 1)[:, None]
    p = sph_legendre_p(ls, m, theta[None, :], diff_n=min(order, 2))
    # drop the Condon-Shortley phase
    sign = -1.0 if m % 2 else 1.0
    out = [sign * p[i] for i in range(min(order, 2) + 1)]
    if order >= 3:
        s = np.sin(theta)[None, :]
        c = np.cos(theta)[None, :]
        lam = ls * (ls + 1.0)
        P, dP, ddP = out
        # derivative of the Legendre ODE  P'' = -cot P' - (l(l+1) - m^2/sin^2) P
        dddP = (dP / s**2 - (c / s) * ddP - (lam - m * m / s**2) * dP
                - (2.0 * m * m * c / s**3) * P)
        out.append(dddP)
    return out


def real_sh(L: int, theta, phi, order: int = 0) -> dict[tuple, np.ndarray]:
    """Real harmonics and their angular derivatives at points (theta, phi).

    Returns a dict mapping derivative keys (see module docstring) to arrays of
    shape ``(npts, (L+1)**2)``.  Points must avoid the poles when
    ``order >= 3``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    npts = theta.size
    nb = n_coeffs(L)
    keys = [k for o in range(order + 1) for k in DERIV_KEYS[o]]
    out = {k: np.zeros((npts, nb)) for k in keys}
    for m in range(L + 1):
        P = _legendre_theta(L, m, theta, order)
        ls = np.arange(m, L + 1)
        if m == 0:
            trig = {"c": [np.ones_like(phi)] + [np.zeros_like(phi)] * 3}
        else:
            c = math.sqrt(2.0) * np.cos(m * phi)
            s = math.sqrt(2.0) * np.sin(m * phi)
            trig = {
                "c": [c, -m * s, -(m**2) * c, m**3 * s],
                "s": [s, m * c, -(m**2) * s, -(m**3) * c],
            }
        for kind, tr in trig.items():
            mm = m if kind == "c" else -m
            cols = ls * ls + ls + mm
            for key in keys:
                nt = key.count(0)
                nphi = key.count(1)
                out[key][:, cols] = (P[nt] * tr[nphi][None, :]).T
    return out


def unit_vector_derivs(theta: np.ndarray, phi: np.ndarray, order: int = 2) -> dict[tuple, np.ndarray]:
    """u(theta, phi) on the unit sphere and its angular derivatives, shape (N, 3)."""
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    z = np.zeros_like(theta)
    d = {
        (): np.stack([st * cp, st * sp, ct], axis=-1),
        (0,): np.stack([ct * cp, ct * sp, -st], axis=-1),
        (1,): np.stack([-st * sp, st * cp, z], axis=-1),
    }
    if order >= 2:
        d[(0, 0)] = -d[()]
        d[(0, 1)] = np.stack([-ct * sp, ct * cp, z], axis=-1)
        d[(1, 1)] = np.stack([-st * cp, -st * sp, z], axis=-1)
    if order >= 3:
        d[(0, 0, 0)] = -d[(0,)]
        d[(0, 0, 1)] = -d[(1,)]
        d[(0, 1, 1)] = np.stack([-ct * cp, -ct * sp, z], axis=-1)
        d[(1, 1, 1)] = -d[(1,)]
    return d


def product_derivs(a: dict, b: dict, order: int) -> dict:
    """Leibniz rule for a(theta, phi) * b(theta, phi) using derivative dicts.

    ``a`` holds arrays of shape (N,) and ``b`` arrays of shape (N, 3); the
    result has the shape of ``b``.
    """
    out = {}
    for o in range(order + 1):
        for key in DERIV_KEYS[o]:
            total = 0.0
            for r in range(o + 1):
                for pos in itertools.combinations(range(o), r):
                    ka = tuple(sorted(key[i] for i in pos))
                    kb = tuple(sorted(key[i] for i in range(o) if i not in pos))
                    total = total + a[ka][:, None] * b[kb]
            out[key] = total
    return out


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre in cos(theta) times uniform in phi.

    With the defaults (``n_theta = L+2``, ``n_phi = 2L+2``) the rule integrates
    any product of two harmonics of degree <= L exactly.
    """

    L_max: int
    n_theta: int = 0
    n_phi: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.n_theta <= 0:
            object.__setattr__(self, "n_theta", self.L_max + 2)
        if self.n_phi <= 0:
            object.__setattr__(self, "n_phi", 2 * self.L_max + 2)

    @functools.cached_property
    def _nodes(self):
        x, wx = npleg.leggauss(self.n_theta)
        theta1 = np.arccos(x)
        phi1 = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        theta, phi = np.meshgrid(theta1, phi1, indexing="ij")
        w = np.outer(wx, np.full(self.n_phi, 2.0 * np.pi / self.n_phi))
        return theta.ravel(), phi.ravel(), w.ravel()

    @property
    def theta(self) -> np.ndarray:
        return self._nodes[0]

    @property
    def phi(self) -> np.ndarray:
        return self._nodes[1]

    @property
    def weights(self) -> np.ndarray:
        return self._nodes[2]

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    @functools.cached_property
    def directions(self) -> dict:
        return unit_vector_derivs(self.theta, self.phi, order=3)

    def basis(self, order: int = 2, L: int | None = None) -> dict:
        """Harmonic basis up to degree ``L`` (default ``L_max``) at the nodes."""
        L = self.L_max if L is None else L
        key = ("basis", L, order)
        if key not in self._cache:
            have = [k for k in self._cache if k[0] == "basis" and k[1] == L and k[2] >= order]
            if have:
                return self._cache[have[0]]
            self._cache[key] = real_sh(L, self.theta, self.phi, order=order)
        return self._cache[key]

    def analysis(self, values: np.ndarray, L: int | None = None) -> np.ndarray:
        """Project node samples onto harmonics of degree <= L by quadrature."""
        Y = self.basis(0, L)[()]
        return Y.T @ (self.weights[..., None] * values) if values.ndim > 1 else Y.T @ (self.weights * values)

    def synthesis(self, coeffs: np.ndarray, key: tuple = ()) -> np.ndarray:
        L = int(round(math.sqrt(coeffs.shape[0]))) - 1
        order = len(key)
        return self.basis(max(order, 2), L)[key] @ coeffs


@functools.lru_cache(maxsize=None)
def get_grid(L_max: int, n_theta: int = 0, n_phi: int = 0) -> QuadratureGrid:
    return QuadratureGrid(L_max, n_theta, n_phi)


def fibonacci_directions(n: int) -> np.ndarray:
    """Near-uniform unit vectors on the sphere (deterministic)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z * z)
    ang = np.pi * (1.0 + 5**0.5) * i
    return np.stack([rho * np.cos(ang), rho * np.sin(ang), z], axis=-1)


def to_angles(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
    phi = np.arctan2(u[..., 1], u[..., 0])
    return theta, phi


# ---------------------------------------------------------------------------
# Solid harmonics: homogeneous polynomials S_lm(x) = |x|^l Y_lm(x/|x|)


class Poly3:
    """Polynomial in (x, y, z) stored as exponent rows and coefficients."""

    def __init__(self, terms: dict[tuple[int, int, int], float]):
        terms = {k: v for k, v in terms.items() if v != 0.0}
        self.exps = np.array(sorted(terms), dtype=int).reshape(-1, 3)
        self.coefs = np.array([terms[tuple(e)] for e in self.exps], dtype=float)

    @classmethod
    def from_terms(cls, terms):
        return cls(dict(terms))

    def _monomials(self, x, exps):
        return np.prod(x[:, None, :] ** exps[None, :, :], axis=-1)

    def value(self, x: np.ndarray) -> np.ndarray:
        if self.coefs.size == 0:
            return np.zeros(x.shape[0])
        return self._monomials(x, self.exps) @ self.coefs

    def _deriv_terms(self, axes):
        exps = self.exps.copy()
        coefs = self.coefs.copy()
        for a in axes:
            coefs = coefs * exps[:, a]
            exps[:, a] = np.maximum(exps[:, a] - 1, 0)
        return exps, coefs

    def derivative(self, x: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
        exps, coefs = self._deriv_terms(axes)
        if coefs.size == 0:
            return np.zeros(x.shape[0])
        return self._monomials(x, exps) @ coefs

    def gradient(self, x):
        return np.stack([self.derivative(x, (a,)) for a in range(3)], axis=-1)

    def hessian(self, x):
        H = np.empty(x.shape[:1] + (3, 3))
        for a in range(3):
            for b in range(a, 3):
                H[:, a, b] = H[:, b, a] = self.derivative(x, (a, b))
        return H


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = (e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2])
            out[e] = out.get(e, 0.0) + c1 * c2
    return out


def _poly_pow(p: dict, n: int) -> dict:
    out = {(0, 0, 0): 1.0}
    for _ in range(n):
        out = _poly_mul(out, p)
    return out


@functools.lru_cache(maxsize=None)
def solid_harmonic(l: int, m: int) -> Poly3:
    """Real solid harmonic matching :func:`real_sh` on the unit sphere."""
    am = abs(m)
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
    if m != 0:
        norm *= math.sqrt(2.0)
    # d^|m| P_l / dt^|m| as power series in t
    pl = npleg.leg2poly([0] * l + [1])
    dpl = np.polynomial.polynomial.polyder(pl, am) if am else pl
    rho2 = {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}
    zpart: dict = {}
    for k, ck in enumerate(dpl):
        if ck == 0.0 or (l - am - k) % 2:
            continue
        term = _poly_mul({(0, 0, k): ck}, _poly_pow(rho2, (l - am - k) // 2))
        for e, c in term.items():
            zpart[e] = zpart.get(e, 0.0) + c
    # Re / Im of (x + i y)^|m|
    xy: dict = {}
    for j in range(am + 1):
        ij = (1j) ** j
        part = ij.real if m >= 0 else ij.imag
        if part == 0:
            continue
        e = (am - j, j, 0)
        xy[e] = xy.get(e, 0.0) + math.comb(am, j) * part
    poly = _poly_mul(xy, zpart)
    return Poly3({e: norm * c for e, c in poly.items()})
