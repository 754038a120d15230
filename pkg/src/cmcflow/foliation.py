"""CMC leaves obtained by flowing coordinate spheres, and their nesting."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ambient, spectral
from .ambient import MetricModel
from .errors import (CommonGraphFailure, ConfigError, CurvatureHypothesisViolated,
                     DegenerateFit)
from .flow import FlowConfig, run
from .harmonics import fibonacci_directions
from .surface import (GraphSurface, barycenter, fundamental_forms, hawking_mass,
                      measures_and_radii, radii_about)


@dataclass(frozen=True)
class FoliationSpec:
    radii: tuple
    model: MetricModel
    flow: FlowConfig = field(default_factory=FlowConfig)
    center: tuple = (0.0, 0.0, 0.0)
    L_max: int = 16
    perturb: tuple = ()

    def __post_init__(self):
        r = [float(v) for v in self.radii]
        if not r:
            raise ConfigError("foliation needs at least one radius")
        if min(r) <= 4.0:
            raise ConfigError("initial radii must exceed 4")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ConfigError("initial radii must be strictly increasing")
        object.__setattr__(self, "radii", tuple(r))


@dataclass
class Leaf:
    radius: float
    status: str
    surface: GraphSurface
    h_value: float
    sigma: float
    m_H: float
    stability_eig: float
    barycenter: tuple
    hh_linf: float
    steps: int
    round: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {"radius": self.radius, "status": self.status, "h": self.h_value,
                "sigma": self.sigma, "m_H": self.m_H, "stability_eig": self.stability_eig,
                "barycenter": list(self.barycenter), "hh_linf": self.hh_linf,
                "steps": self.steps, "round": self.round, "message": self.message}


def _build_leaf(args) -> Leaf:
    radius, spec = args
    start = GraphSurface.sphere(radius, spec.center, spec.L_max, spec.perturb)
    res = run(start, spec.model, spec.flow)
    surf = res.surface
    try:
        f = fundamental_forms(spec.model, surf)
        mats = spectral.assemble_operators(f, spec.flow.L_basis)
        stab = spectral.stability_spectrum_zero_mean(mats)
        hh = f.H - f.h
        return Leaf(radius, res.status, surf, f.h, measures_and_radii(f).sigma_area,
                    hawking_mass(f), stab, tuple(float(v) for v in barycenter(f)),
                    float(np.abs(hh).max()), res.steps, bool(res.history[-1]["round"]),
                    res.message)
    except Exception as exc:  # geometry of a failed run may be unusable
        return Leaf(radius, res.status, surf, math.nan, math.nan, math.nan, math.nan,
                    (math.nan,) * 3, math.nan, res.steps, False,
                    res.message or f"{type(exc).__name__}: {exc}")


def construct_foliation(spec: FoliationSpec, jobs: int = 1, check_hypotheses: bool = False,
                        check_rt: bool = False) -> list:
    """One leaf per initial radius, each from an independent flow run.

    With ``check_hypotheses`` the model must pass the decay check (and the
    RT check when ``check_rt``) before any run starts.
    """
    if check_hypotheses:
        outer = 4.0 * max(spec.radii)
        rr = [min(spec.radii), 2 * min(spec.radii), outer]
        if not ambient.decay_check(spec.model, rr).passed:
            raise CurvatureHypothesisViolated("model fails the decay check")
        if check_rt and not ambient.regge_teitelboim_check(spec.model, rr).passed:
            raise CurvatureHypothesisViolated("model fails the RT check")
    tasks = [(r, spec) for r in spec.radii]
    if jobs <= 1 or len(tasks) == 1:
        return [_build_leaf(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        return list(ex.map(_build_leaf, tasks))


def nesting_check(leaves: list, n_dirs: int = 4000) -> dict:
    """Pairwise minimum radial gaps after co-graphing about a common center.

    For leaves i < j the center is the midpoint of their barycenters and the
    gap is ``min_u r_j(u) - r_i(u)`` over ``n_dirs`` quasi-uniform
    directions.  Consecutive gaps decide ``nested``.
    """
    if len(leaves) < 2:
        raise ConfigError("nesting check needs at least 2 leaves")
    dirs = fibonacci_directions(n_dirs)
    n = len(leaves)
    gaps = [[None] * n for _ in range(n)]
    failures = []
    for i in range(n):
        for j in range(i + 1, n):
            c = 0.5 * (np.asarray(leaves[i].barycenter) + np.asarray(leaves[j].barycenter))
            try:
                if not np.all(np.isfinite(c)):
                    raise CommonGraphFailure("leaf barycenter unavailable")
                ri = radii_about(leaves[i].surface, c, dirs)
                rj = radii_about(leaves[j].surface, c, dirs)
                g = float(np.min(rj - ri))
            except CommonGraphFailure as exc:
                failures.append({"pair": [i, j], "error": str(exc)})
                g = None
            gaps[i][j] = g
            gaps[j][i] = None if g is None else -g
    consecutive = [gaps[i][i + 1] for i in range(n - 1)]
    nested = all(g is not None and g > 0 for g in consecutive)
    return {"gap_matrix": gaps, "consecutive_gaps": consecutive, "nested": nested,
            "failures": failures}


def leaf_asymptotics(leaves: list, mbar: float, delta: float = 0.5, floor: float = 1e-8,
                     slope_slack: float = 0.2) -> dict:
    """Mass and mean-curvature asymptotics across leaves.

    Fits ``log |m_H - mbar|`` against ``log sigma``; the slope should not
    exceed ``-delta + slope_slack``.  The fit is skipped when every error is
    below ``floor``.  Also tabulates ``|h - 2/sigma| sigma^(3/2 + delta)``.
    """
    if len(leaves) < 3:
        raise DegenerateFit("leaf asymptotics need at least 3 leaves")
    sig = np.array([lf.sigma for lf in leaves])
    mH = np.array([lf.m_H for lf in leaves])
    h = np.array([lf.h_value for lf in leaves])
    if not np.all(np.isfinite(sig)):
        raise DegenerateFit("some leaves have no geometry")
    merr = np.abs(mH - mbar)
    hdev = np.abs(h - 2.0 / sig) * sig ** (1.5 + delta)
    table = [{"sigma": float(s), "h": float(a), "m_H": float(m), "mass_error": float(e),
              "h_deviation_scaled": float(d)}
             for s, a, m, e, d in zip(sig, h, mH, merr, hdev)]
    out = {"table": table, "mbar": mbar, "delta": delta}
    if np.all(merr < floor):
        out.update(mass_slope=None, mass_slope_ok=True, mass_fit="skipped below floor")
    else:
        if np.ptp(np.log(sig)) == 0 or np.any(merr <= 0):
            raise DegenerateFit("cannot fit the mass error")
        slope = float(np.polyfit(np.log(sig), np.log(merr), 1)[0])
        out.update(mass_slope=slope, mass_slope_ok=bool(slope <= -delta + slope_slack),
                   mass_fit="fitted")
    out["h_deviation_max"] = float(hdev.max())
    return out


def save_leaves(leaves: list, directory) -> list:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for k, lf in enumerate(leaves):
        p = os.path.join(directory, f"leaf_{k:02d}.json")
        with open(p, "w") as fh:
            json.dump(lf.surface.to_dict(), fh, indent=1)
            fh.write("\n")
        paths.append(p)
    return paths
