"""Volume-preserving mean curvature flow in asymptotically flat 3-manifolds.

Modules
-------
ambient    metric models, curvature, ADM mass, decay and symmetry checks
surface    radial graph surfaces, fundamental forms, roundness classification
spectral   Laplace-Beltrami and stability-operator spectra
flow       time integration with diagnostics and monitors
foliation  CMC leaves from flowed coordinate spheres
cli        the ``cmcflow`` command
"""

from .ambient import MetricModel, PerturbationSpec, adm_mass, decay_check, regge_teitelboim_check
from .flow import FlowConfig, FlowResult, run
from .foliation import FoliationSpec, construct_foliation, nesting_check
from .surface import GraphSurface, RoundnessParams, fundamental_forms, hawking_mass

__version__ = "0.1.0"

__all__ = [
    "MetricModel", "PerturbationSpec", "adm_mass", "decay_check", "regge_teitelboim_check",
    "GraphSurface", "RoundnessParams", "fundamental_forms", "hawking_mass",
    "FlowConfig", "FlowResult", "run",
    "FoliationSpec", "construct_foliation", "nesting_check",
]
