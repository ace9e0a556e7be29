"""Graph data model: arrays, states, stencil nodes, memlets, transitions.

Within a state, dataflow runs through versioned access nodes: every write to
a container materializes a fresh access-node version, so sequenced writes
form a DAG by construction. The authoritative execution order of stencil
nodes in a state is ``DataflowState.sequence``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from stencilkit.frontend.ast import (
    ComputationBlock,
    Diagnostic,
    Expr,
    Extent,
    Statement,
    expr_reads,
)
from stencilkit.scheduling import Layout, Schedule, schedule_validity

# ---------------------------------------------------------------------------
# Subsets: unions of half-open boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Half-open per-axis index ranges, interior-relative (halo is negative)."""

    ranges: tuple[tuple[int, int], ...]

    @property
    def volume(self) -> int:
        v = 1
        for lo, hi in self.ranges:
            if hi <= lo:
                return 0
            v *= hi - lo
        return v

    def is_empty(self) -> bool:
        return any(hi <= lo for lo, hi in self.ranges)

    def shift(self, offsets: Iterable[int]) -> "Box":
        return Box(tuple((lo + o, hi + o) for (lo, hi), o in zip(self.ranges, offsets)))

    def contains_box(self, other: "Box") -> bool:
        return all(
            slo <= olo and ohi <= shi
            for (slo, shi), (olo, ohi) in zip(self.ranges, other.ranges)
        )


def union_volume(boxes: Iterable[Box]) -> int:
    """Exact cell count of a union of boxes, by coordinate compression."""
    boxes = [b for b in boxes if not b.is_empty()]
    if not boxes:
        return 0
    rank = len(boxes[0].ranges)
    cuts = [
        sorted({b.ranges[a][0] for b in boxes} | {b.ranges[a][1] for b in boxes})
        for a in range(rank)
    ]
    total = 0
    for cell in itertools.product(*[range(len(c) - 1) for c in cuts]):
        lows = tuple(cuts[a][cell[a]] for a in range(rank))
        highs = tuple(cuts[a][cell[a] + 1] for a in range(rank))
        covered = any(
            all(b.ranges[a][0] <= lows[a] and highs[a] <= b.ranges[a][1] for a in range(rank))
            for b in boxes
        )
        if covered:
            vol = 1
            for lo, hi in zip(lows, highs):
                vol *= hi - lo
            total += vol
    return total


@dataclass(frozen=True)
class Memlet:
    """Data movement descriptor: which cells of a container move, and how.

    ``boxes`` is a finite union; a single box is the common case, but
    region-restricted statements can pin extra disjoint cells (e.g. a halo
    corner), which must not be over-counted by a bounding hull.
    """

    container: str
    access: str  # "read" | "write"
    boxes: tuple[Box, ...]

    @property
    def volume(self) -> int:
        """Unique element count (overlap within the union never double-counts)."""
        return union_volume(self.boxes)


# ---------------------------------------------------------------------------
# Nodes
# ---------------------------------------------------------------------------


@dataclass
class AccessNode:
    container: str
    uid: str


@dataclass
class Tasklet:
    """Scalar compute node inside an expanded subgraph."""

    statement: Statement
    uid: str


@dataclass
class MapEntry:
    dim: str
    target: str  # "worker-parallel" | "sequential"
    uid: str


@dataclass
class MapExit:
    entry_uid: str
    uid: str


@dataclass
class StencilNode:
    """Schedulable library node standing for one computation block.

    ``name`` is the stable kernel-type identifier ``<stencil>_<blockIndex>``
    (joined with ``+`` after fusion); it survives all transformations and is
    the key used by tuning patterns and report grouping. ``uid`` is unique
    per graph.
    """

    name: str
    uid: str
    blocks: list[ComputationBlock]
    kwargs: dict[str, Expr]  # scalar parameter bindings (driver expressions)
    schedule: Schedule = field(default_factory=Schedule)
    participants: tuple[str, ...] = ()
    reads: list[Memlet] = field(default_factory=list)
    writes: list[Memlet] = field(default_factory=list)
    expansion: Optional[object] = None  # ExpandedStencil, set by expand()

    def read_fields(self) -> set[str]:
        return {r.field for b in self.blocks for s in b.statements for r in expr_reads(s.expr)}

    def written_fields(self) -> set[str]:
        return {s.target for b in self.blocks for s in b.statements}


@dataclass
class Edge:
    src: str  # node uid
    dst: str
    memlet: Memlet


@dataclass
class DataflowState:
    name: str
    sequence: list[StencilNode] = field(default_factory=list)
    access_nodes: list[AccessNode] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def rebuild_dataflow(self) -> None:
        """Recompute versioned access nodes and memlet edges from the node
        sequence (called after any structural change)."""
        self.access_nodes = []
        self.edges = []
        latest: dict[str, str] = {}
        counter: dict[str, int] = {}

        def access(container: str) -> str:
            if container not in latest:
                uid = f"{self.name}.{container}.v0"
                counter[container] = 0
                latest[container] = uid
                self.access_nodes.append(AccessNode(container, uid))
            return latest[container]

        def new_version(container: str) -> str:
            counter[container] = counter.get(container, -1) + 1
            uid = f"{self.name}.{container}.v{counter[container]}"
            latest[container] = uid
            self.access_nodes.append(AccessNode(container, uid))
            return uid

        for node in self.sequence:
            for memlet in node.reads:
                self.edges.append(Edge(access(memlet.container), node.uid, memlet))
            for memlet in node.writes:
                self.edges.append(Edge(node.uid, new_version(memlet.container), memlet))


@dataclass
class Transition:
    src: str
    dst: str
    condition: Optional[tuple[Expr, bool]] = None  # truthy(expr) must equal flag
    assignments: dict[str, Expr] = field(default_factory=dict)


@dataclass
class LoopInfo:
    """Structural record of a driver loop in the state machine."""

    var: str
    count: Expr
    guard: str
    body: list[str]  # state names inside the loop, in order
    exit: str
    unrollable: bool


@dataclass(frozen=True)
class RankPlacement:
    """Which domain edges this rank owns (controls region firing)."""

    own_i_start: bool = True
    own_i_end: bool = True
    own_j_start: bool = True
    own_j_end: bool = True

    def owns(self, axis: str, anchor: str) -> bool:
        return getattr(self, f"own_{axis.lower()}_{anchor}")


FULL_TILE = RankPlacement()


@dataclass
class ArrayInfo:
    name: str
    dims: tuple[str, ...]
    dtype: str
    transient: bool
    extent: Extent
    layout: Layout
    extension: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def itemsize(self) -> int:
        return 8 if self.dtype == "float64" else 4


@dataclass
class DataflowGraph:
    arrays: dict[str, ArrayInfo]
    states: list[DataflowState]
    transitions: list[Transition]
    start_state: str
    symbols: dict[str, float]
    domain: tuple[int, int, int]
    placement: RankPlacement = FULL_TILE
    alignment: int = 8
    loops: list[LoopInfo] = field(default_factory=list)
    version: int = 0

    def state(self, name: str) -> DataflowState:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    def find_node(self, uid: str) -> tuple[DataflowState, StencilNode]:
        for s in self.states:
            for n in s.sequence:
                if n.uid == uid:
                    return s, n
        raise KeyError(uid)

    def all_nodes(self) -> list[tuple[DataflowState, StencilNode]]:
        return [(s, n) for s in self.states for n in s.sequence]

    def bump_version(self) -> int:
        self.version += 1
        return self.version

    # -- control flow -------------------------------------------------------

    def out_transitions(self, state: str) -> list[Transition]:
        return [t for t in self.transitions if t.src == state]

    def unrolled_trace(self, max_steps: int = 1_000_000) -> list[str]:
        """Resolve the state machine into the executed state sequence."""
        return [name for name, _ in self.execution_trace(max_steps)]

    def execution_trace(self, max_steps: int = 1_000_000) -> list[tuple[str, dict[str, float]]]:
        """Unrolled trace with the symbol environment at each state entry
        (needed to resolve per-invocation scalar kwargs)."""
        from stencilkit.frontend.validate import _eval_driver_expr

        env = dict(self.symbols)
        out = [(self.start_state, dict(env))]
        current = self.start_state
        steps = 0
        while True:
            outs = self.out_transitions(current)
            if not outs:
                return out
            taken = None
            for t in outs:
                if t.condition is None:
                    taken = t
                    break
                expr, flag = t.condition
                if (_eval_driver_expr(expr, env) != 0.0) == flag:
                    taken = t
                    break
            if taken is None:
                raise RuntimeError(f"no enabled transition out of state {current!r}")
            for name, expr in taken.assignments.items():
                env[name] = _eval_driver_expr(expr, env)
            current = taken.dst
            out.append((current, dict(env)))
            steps += 1
            if steps > max_steps:
                raise RuntimeError("state machine does not terminate")

    def node_invocations(self) -> dict[str, int]:
        """Executions per node uid over the unrolled trace."""
        counts: dict[str, int] = {}
        by_state = {s.name: s for s in self.states}
        for sname in self.unrolled_trace():
            for node in by_state[sname].sequence:
                counts[node.uid] = counts.get(node.uid, 0) + 1
        return counts

    def statistics(self) -> dict[str, int]:
        stats = {
            "states": len(self.states),
            "transitions": len(self.transitions),
            "stencil_nodes": sum(len(s.sequence) for s in self.states),
            "access_nodes": sum(len(s.access_nodes) for s in self.states),
            "edges": sum(len(s.edges) for s in self.states),
            "arrays": len(self.arrays),
            "transient_arrays": sum(1 for a in self.arrays.values() if a.transient),
        }
        units = 0
        for _, node in self.all_nodes():
            if node.expansion is not None:
                units += len(node.expansion.units)
        stats["kernel_units"] = units
        return stats


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------


def _array_bounds_box(info: ArrayInfo, domain: tuple[int, int, int]) -> Box:
    sizes = dict(zip(("I", "J", "K"), domain))
    ranges = []
    for axis in info.dims:
        lo, hi = info.extent.component(axis)
        ranges.append((lo, sizes[axis] + hi))
    return Box(tuple(ranges))


def validate_graph(graph: DataflowGraph) -> list[Diagnostic]:
    """Check acyclicity per state, memlet bounds, container existence, and
    single-start-state reachability."""
    diags: list[Diagnostic] = []
    names = {s.name for s in graph.states}
    if graph.start_state not in names:
        diags.append(Diagnostic("graph-structure", "start state does not exist"))
    if len(names) != len(graph.states):
        diags.append(Diagnostic("graph-structure", "duplicate state names"))
    for t in graph.transitions:
        if t.src not in names or t.dst not in names:
            diags.append(
                Diagnostic("graph-structure", f"transition {t.src}->{t.dst} references unknown state")
            )
    # reachability
    reach = {graph.start_state}
    frontier = [graph.start_state]
    while frontier:
        cur = frontier.pop()
        for t in graph.out_transitions(cur):
            if t.dst not in reach:
                reach.add(t.dst)
                frontier.append(t.dst)
    for s in graph.states:
        if s.name not in reach:
            diags.append(Diagnostic("graph-structure", f"state {s.name!r} unreachable"))

    for state in graph.states:
        node_ids = {n.uid for n in state.sequence} | {a.uid for a in state.access_nodes}
        adjacency: dict[str, list[str]] = {uid: [] for uid in node_ids}
        indeg = {uid: 0 for uid in node_ids}
        for e in state.edges:
            if e.src not in node_ids or e.dst not in node_ids:
                diags.append(
                    Diagnostic("graph-structure", f"edge references unknown node in {state.name}")
                )
                continue
            adjacency[e.src].append(e.dst)
            indeg[e.dst] += 1
            if e.memlet.container not in graph.arrays:
                diags.append(
                    Diagnostic(
                        "unknown-container",
                        f"memlet references unknown container {e.memlet.container!r}",
                    )
                )
                continue
            info = graph.arrays[e.memlet.container]
            bounds = _array_bounds_box(info, graph.domain)
            for box in e.memlet.boxes:
                if not box.is_empty() and not bounds.contains_box(box):
                    diags.append(
                        Diagnostic(
                            "memlet-bounds",
                            f"memlet on {e.memlet.container!r} exceeds allocated shape: "
                            f"{box.ranges} outside {bounds.ranges}",
                        )
                    )
        # Kahn's algorithm for acyclicity
        queue = [uid for uid, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            cur = queue.pop()
            seen += 1
            for nxt in adjacency[cur]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    queue.append(nxt)
        if seen != len(node_ids):
            diags.append(
                Diagnostic("cyclic-dataflow", f"dataflow within state {state.name!r} has a cycle")
            )

    for state in graph.states:
        for node in state.sequence:
            ok, reason = schedule_validity(node, node.schedule, graph.arrays)
            if not ok:
                diags.append(
                    Diagnostic(
                        "invalid-schedule",
                        f"node {node.uid}: {reason}",
                    )
                )
    return diags
