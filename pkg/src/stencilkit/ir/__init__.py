"""Stateful dataflow-graph IR: states, stencil nodes, memlets, expansion."""

from stencilkit.ir.graph import (
    AccessNode,
    ArrayInfo,
    Box,
    DataflowGraph,
    DataflowState,
    Edge,
    LoopInfo,
    Memlet,
    RankPlacement,
    StencilNode,
    Transition,
    validate_graph,
)
from stencilkit.ir.lower import LoweringError, assign_default_schedules, compute_node_memlets, lower
from stencilkit.ir.movement import MovementError, query_movement, trace_movement
from stencilkit.ir.expansion import ExpandedStencil, KernelUnit, expand, expand_all
from stencilkit.ir.serialize import graph_from_json, graph_to_json

__all__ = [
    "AccessNode",
    "ArrayInfo",
    "Box",
    "DataflowGraph",
    "DataflowState",
    "Edge",
    "ExpandedStencil",
    "KernelUnit",
    "LoopInfo",
    "LoweringError",
    "Memlet",
    "MovementError",
    "RankPlacement",
    "StencilNode",
    "Transition",
    "assign_default_schedules",
    "compute_node_memlets",
    "expand",
    "expand_all",
    "graph_from_json",
    "graph_to_json",
    "lower",
    "query_movement",
    "trace_movement",
    "validate_graph",
]
