"""Finite-difference alpha-flow of maps from the flat torus into the round sphere,
with energy, monotonicity, concentration and bubble-tree diagnostics."""
from .flow import FlowParams, FlowRun, FlowState, NumericalBlowUp, rhs, run, stable_dt, step
from .geometry import GeometryError, MapField, SphereTarget, TorusGrid

__all__ = ["FlowParams", "FlowRun", "FlowState", "GeometryError", "MapField", "NumericalBlowUp",
           "SphereTarget", "TorusGrid", "rhs", "run", "stable_dt", "step"]
