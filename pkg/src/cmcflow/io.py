"""JSON configuration parsing shared by the command-line tools."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .ambient import MetricModel, model_from_dict
from .errors import ConfigError
from .flow import FlowConfig
from .surface import GraphSurface


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _section(d: dict, key: str, required: bool = True):
    if key not in d:
        if required:
            raise ConfigError(f"missing section {key!r}")
        return None
    return d[key]


def surface_from_dict(d) -> GraphSurface:
    """GraphSurface JSON or the shorthand ``{"sphere": {...}}``."""
    if not isinstance(d, dict):
        raise ConfigError("surface must be a JSON object")
    if "sphere" in d:
        sp = d["sphere"]
        if not isinstance(sp, dict) or "radius" not in sp:
            raise ConfigError("surface.sphere needs a radius")
        try:
            return GraphSurface.sphere(float(sp["radius"]), tuple(sp.get("center", (0.0, 0.0, 0.0))),
                                       int(sp.get("L_max", 16)),
                                       [tuple(p) for p in sp.get("perturb", [])])
        except (TypeError, ValueError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"surface.sphere: {exc}") from exc
    return GraphSurface.from_dict(d)


def model_section(d: dict) -> MetricModel:
    """``d["model"]`` if present, otherwise ``d`` itself is the model."""
    return model_from_dict(d["model"] if "model" in d else d)


@dataclass
class RunConfig:
    model: MetricModel
    surface: GraphSurface
    flow: FlowConfig
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        model = model_from_dict(_section(d, "model"))
        surface = surface_from_dict(_section(d, "surface"))
        flow = FlowConfig.from_dict(d.get("flow", {}))
        outputs = d.get("outputs", {})
        if not isinstance(outputs, dict):
            raise ConfigError("outputs must be an object")
        unknown = set(outputs) - {"history_csv", "summary_json", "checkpoint_dir"}
        if unknown:
            raise ConfigError(f"outputs: unknown keys {sorted(unknown)}")
        return cls(model, surface, flow, dict(outputs))
