"""Command-line front end: ``cmcflow flow|ambient|spectrum|foliate <config>``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import ambient, spectral
from .errors import (GEOMETRY_ERRORS, CMCFlowError, CommonGraphFailure, ConfigError,
                     EigensolverFailure, QuadratureUnderResolved)
from .flow import FlowConfig, _jsonable, run
from .foliation import (FoliationSpec, construct_foliation, leaf_asymptotics, nesting_check,
                        save_leaves)
from .io import RunConfig, load_json, model_section, surface_from_dict
from .surface import fundamental_forms

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAIL = 2
EXIT_CLASS = 3
EXIT_GEOMETRY = 4

STATUS_CODES = {"converged": EXIT_OK, "horizon_reached": EXIT_FAIL, "class_exit": EXIT_CLASS,
                "graph_failure": EXIT_GEOMETRY}

log = logging.getLogger("cmcflow")


def _dump(obj, path=None) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _ensure_dir(path) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def cmd_flow(args) -> int:
    cfg = RunConfig.from_dict(load_json(args.config))
    out = cfg.outputs
    checkpoint = None
    if out.get("checkpoint_dir"):
        cdir = out["checkpoint_dir"]
        os.makedirs(cdir, exist_ok=True)

        def checkpoint(step, surface):
            _dump(surface.to_dict(), os.path.join(cdir, f"step_{step:08d}.json"))

    result = run(cfg.surface, cfg.model, cfg.flow, checkpoint=checkpoint)
    if out.get("history_csv"):
        _ensure_dir(out["history_csv"])
        result.history.to_csv(out["history_csv"])
    summary = result.summary()
    if out.get("summary_json"):
        _ensure_dir(out["summary_json"])
        result.write_summary(out["summary_json"])
    else:
        _dump(summary)
    return STATUS_CODES[result.status]


def cmd_ambient(args) -> int:
    data = load_json(args.config)
    model = model_section(data)
    opts = data.get("ambient", {})
    if not isinstance(opts, dict):
        raise ConfigError("ambient must be an object")
    if args.check == "adm":
        radii = opts.get("radii", [100.0, 200.0, 400.0])
        try:
            est = ambient.adm_mass(model, [float(r) for r in radii])
        except QuadratureUnderResolved as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"ambient.radii: {exc}") from exc
        _dump(est.to_dict())
        return EXIT_OK
    radii = [float(r) for r in opts.get("radii", [10.0, 20.0, 40.0, 80.0])]
    n = int(opts.get("samples_per_radius", 64))
    if args.check == "decay":
        rep = ambient.decay_check(model, radii, n)
    else:
        rep = ambient.regge_teitelboim_check(model, radii, n)
    _dump(rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_spectrum(args) -> int:
    data = load_json(args.config)
    model = model_section(data)
    if "surface" not in data:
        raise ConfigError("missing section 'surface'")
    surface = surface_from_dict(data["surface"])
    opts = data.get("spectrum", {})
    try:
        fields = fundamental_forms(model, surface)
        summary = spectral.spectral_summary(fields, int(opts.get("k", 9)), opts.get("L_basis"))
    except GEOMETRY_ERRORS + (EigensolverFailure,) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    _dump(summary)
    return EXIT_OK


def cmd_foliate(args) -> int:
    data = load_json(args.config)
    model = model_section(data)
    fol = data.get("foliation")
    if not isinstance(fol, dict) or "radii" not in fol:
        raise ConfigError("foliation section needs radii")
    flow = FlowConfig.from_dict(data.get("flow", {}))
    try:
        spec = FoliationSpec(tuple(fol["radii"]), model, flow,
                             tuple(fol.get("center", (0.0, 0.0, 0.0))), int(fol.get("L_max", 16)),
                             tuple(tuple(p) for p in fol.get("perturb", [])))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"foliation: {exc}") from exc
    leaves = construct_foliation(spec, jobs=args.jobs,
                                 check_hypotheses=bool(fol.get("check_hypotheses", False)),
                                 check_rt=bool(fol.get("check_rt", False)))
    report = {"leaves": [lf.to_dict() for lf in leaves]}
    nested = False
    if len(leaves) >= 2:
        report["nesting"] = nesting_check(leaves)
        nested = report["nesting"]["nested"]
    if len(leaves) >= 3:
        try:
            report["asymptotics"] = leaf_asymptotics(leaves, model.nominal_adm_mass, model.delta)
        except CMCFlowError as exc:
            report["asymptotics"] = {"error": str(exc)}
    out = data.get("outputs", {})
    if out.get("leaf_dir"):
        report["leaf_files"] = save_leaves(leaves, out["leaf_dir"])
    if out.get("report_json"):
        _ensure_dir(out["report_json"])
        _dump(report, out["report_json"])
    else:
        _dump(report)
    worst = max(STATUS_CODES[lf.status] for lf in leaves)
    if worst != EXIT_OK:
        return worst
    if len(leaves) >= 2 and not nested:
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmcflow",
                                description="Volume-preserving mean curvature flow toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("flow", help="run the flow from a JSON config")
    f.add_argument("config")
    f.set_defaults(func=cmd_flow)
    a = sub.add_parser("ambient", help="checks on the ambient metric")
    a.add_argument("config")
    a.add_argument("--check", choices=("decay", "rt", "adm"), required=True)
    a.set_defaults(func=cmd_ambient)
    s = sub.add_parser("spectrum", help="Laplace and stability spectra of a surface")
    s.add_argument("config")
    s.set_defaults(func=cmd_spectrum)
    fo = sub.add_parser("foliate", help="flow a family of coordinate spheres to CMC leaves")
    fo.add_argument("config")
    fo.add_argument("--jobs", type=int, default=1, help="parallel leaf runs (default 1)")
    fo.set_defaults(func=cmd_foliate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommonGraphFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
