"""Bayes linear analysis of co-exchangeable multivariate group data."""
from .bayes_linear import SecondOrderBeliefs, adjust, canonical_structure
from .combined import CanonicalGrid, analyze_functional, build_grid, grid_adjustment, parse_functional
from .errors import CapExceeded, DesignError, ModelError, NumericalConsistencyError, ZeroPriorVariance
from .groups import group_structure, update_groups
from .model import Design, ModelSpec, ObservedSample
from .variables import canonical_variables, update_variable

__all__ = [
    "CanonicalGrid",
    "CapExceeded",
    "Design",
    "DesignError",
    "ModelError",
    "ModelSpec",
    "NumericalConsistencyError",
    "ObservedSample",
    "SecondOrderBeliefs",
    "ZeroPriorVariance",
    "adjust",
    "analyze_functional",
    "build_grid",
    "canonical_structure",
    "canonical_variables",
    "grid_adjustment",
    "group_structure",
    "parse_functional",
    "update_groups",
    "update_variable",
]
