"""Exact analysis of interval translation maps with rational parameters.

Attractors, first-return maps, critical orbits, the stability criterion and
the perturbation pipeline that drives an eventually periodic map to a
stable one.
"""

from .attractor import AttractorResult, compute_attractor
from .core import ParamVector, SignedPoint, apply, iterate, parse_rat
from .critical import correspondence_report, ghost_graph, unstable_number
from .perturb import perturb_to_stable
from .returnmap import compute_return_map, return_maps
from .stability import StabilityReport, stability_report

__all__ = [
    "AttractorResult", "ParamVector", "SignedPoint", "StabilityReport", "apply",
    "compute_attractor", "compute_return_map", "correspondence_report", "ghost_graph",
    "iterate", "parse_rat", "perturb_to_stable", "return_maps", "stability_report",
    "unstable_number",
]
