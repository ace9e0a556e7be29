"""Exact data-movement queries over memlets.

Byte counts follow unique-element counting: within one memlet, every element
of the union subset is counted exactly once, regardless of how many point
accesses touch it; distinct memlets (distinct nodes) count separately.
"""

from __future__ import annotations

from stencilkit.ir.graph import DataflowGraph, StencilNode


class MovementError(Exception):
    pass


def node_movement(graph: DataflowGraph, node: StencilNode) -> dict[str, tuple[int, int]]:
    out: dict[str, tuple[int, int]] = {}
    for memlet in node.reads:
        info = graph.arrays.get(memlet.container)
        if info is None:
            raise MovementError(f"unknown container {memlet.container!r}")
        r, w = out.get(memlet.container, (0, 0))
        out[memlet.container] = (r + memlet.volume * info.itemsize, w)
    for memlet in node.writes:
        info = graph.arrays.get(memlet.container)
        if info is None:
            raise MovementError(f"unknown container {memlet.container!r}")
        r, w = out.get(memlet.container, (0, 0))
        out[memlet.container] = (r, w + memlet.volume * info.itemsize)
    return out


def query_movement(graph: DataflowGraph, scope: str) -> dict[str, tuple[int, int]]:
    """Per-container (read_bytes, write_bytes) for one execution of a scope.

    ``scope`` is a state name or a node uid.
    """
    for state in graph.states:
        if state.name == scope:
            totals: dict[str, tuple[int, int]] = {}
            for node in state.sequence:
                for name, (r, w) in node_movement(graph, node).items():
                    tr, tw = totals.get(name, (0, 0))
                    totals[name] = (tr + r, tw + w)
            return totals
    for state in graph.states:
        for node in state.sequence:
            if node.uid == scope:
                return node_movement(graph, node)
    raise MovementError(f"no state or node named {scope!r}")


def node_unique_bytes(graph: DataflowGraph, node: StencilNode) -> tuple[int, int]:
    """(read_bytes, write_bytes) of one node execution, summed over fields."""
    read = 0
    write = 0
    for _, (r, w) in node_movement(graph, node).items():
        read += r
        write += w
    return read, write


def trace_movement(graph: DataflowGraph) -> dict[str, tuple[int, int]]:
    """Movement totals over the unrolled trace (per-node movement scaled by
    invocation counts), keyed by container."""
    totals: dict[str, tuple[int, int]] = {}
    by_state = {s.name: s for s in graph.states}
    for sname in graph.unrolled_trace():
        for node in by_state[sname].sequence:
            for name, (r, w) in node_movement(graph, node).items():
                tr, tw = totals.get(name, (0, 0))
                totals[name] = (tr + r, tw + w)
    return totals
