"""Joint inference of several label types on a partially labeled graph.

Two estimators share one superstep engine: multi-type label propagation and
EdgeExplain, which picks labels so that each edge is explained by at least
one label type the endpoints share.
"""

from .beliefs import BeliefState
from .engine import SuperstepReport, gauss_seidel_pass, run_inference
from .explain import (
    ModelParams,
    NeighborSnapshot,
    edge_affinity,
    edge_logscore,
    node_gradient,
    node_objective,
    objective,
    solve_node,
)
from .graph import DataError, Graph, LabelSchema, ObservedLabels, expand_groups, ingest, sparsify_by_age
from .projection import project_simplex, project_simplex_ksparse
from .propagation import lp_energy, lp_update, run_label_propagation

__all__ = [
    "BeliefState",
    "DataError",
    "Graph",
    "LabelSchema",
    "ModelParams",
    "NeighborSnapshot",
    "ObservedLabels",
    "SuperstepReport",
    "edge_affinity",
    "edge_logscore",
    "expand_groups",
    "gauss_seidel_pass",
    "ingest",
    "lp_energy",
    "lp_update",
    "node_gradient",
    "node_objective",
    "objective",
    "project_simplex",
    "project_simplex_ksparse",
    "run_inference",
    "run_label_propagation",
    "solve_node",
    "sparsify_by_age",
]
