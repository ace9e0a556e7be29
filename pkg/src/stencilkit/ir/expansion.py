"""Library-node expansion: schedules become explicit loop-nest structures.

Expansion turns a StencilNode into kernel units. With the (Interval,
Operation) pair leading the spatial dims, every block sweeps the domain as
its own unit; with the pair nested after two spatial dims, all blocks share
one per-column unit (this is what makes interval fusion a single kernel).
Under the ``split`` region strategy, region-restricted statements become
dedicated units iterating exactly their region cells instead of predicating
a full-domain sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from stencilkit.frontend.ast import ComputationBlock, Interval, Statement
from stencilkit.ir.graph import ArrayInfo, DataflowGraph, RankPlacement, StencilNode
from stencilkit.ir.lower import statement_write_domain
from stencilkit.scheduling import Schedule, schedule_validity


class ExpansionError(Exception):
    pass


@dataclass
class UnitBlock:
    policy: str
    interval: Interval
    statements: list[Statement]


@dataclass
class KernelUnit:
    """One schedulable loop nest of an expanded node."""

    index: int
    blocks: list[UnitBlock]
    region_only: bool = False  # unit iterates exactly its region cells

    def statements(self) -> list[Statement]:
        return [s for b in self.blocks for s in b.statements]


@dataclass
class ExpandedStencil:
    node_uid: str
    schedule: Schedule
    units: list[KernelUnit] = field(default_factory=list)

    @property
    def map_scope_count(self) -> int:
        maps = sum(1 for d in ("K", "J", "I") if self.schedule.is_map(d))
        return maps * len(self.units)

    @property
    def tasklet_count(self) -> int:
        return sum(len(u.statements()) for u in self.units)


def _split_groups(statements: list[Statement], split: bool) -> list[list[Statement]]:
    if not split:
        return [list(statements)]
    groups: list[list[Statement]] = []
    run: list[Statement] = []
    for stmt in statements:
        if stmt.region is not None:
            if run:
                groups.append(run)
                run = []
            groups.append([stmt])
        else:
            run.append(stmt)
    if run:
        groups.append(run)
    return groups


def expand(node: StencilNode, graph: DataflowGraph) -> ExpandedStencil:
    """Expand a node under its schedule; raises on invalid schedules."""
    ok, reason = schedule_validity(node, node.schedule, graph.arrays)
    if not ok:
        raise ExpansionError(f"invalid schedule for node {node.uid}: {reason}")
    sched = node.schedule
    split = sched.region_strategy == "split"
    ops_leading = sched.dim_order.index("Interval") == 0

    groups_per_block = [_split_groups(b.statements, split) for b in node.blocks]
    units: list[KernelUnit] = []
    single_column_unit = (
        not ops_leading
        and all(len(g) == 1 for g in groups_per_block)
        and len(node.blocks) >= 1
    )
    if single_column_unit:
        units.append(
            KernelUnit(
                index=0,
                blocks=[
                    UnitBlock(b.policy, b.interval, list(b.statements))
                    for b in node.blocks
                ],
            )
        )
    else:
        for block, groups in zip(node.blocks, groups_per_block):
            for group in groups:
                region_only = split and len(group) == 1 and group[0].region is not None
                units.append(
                    KernelUnit(
                        index=len(units),
                        blocks=[UnitBlock(block.policy, block.interval, list(group))],
                        region_only=region_only,
                    )
                )
    expansion = ExpandedStencil(node_uid=node.uid, schedule=sched, units=units)
    node.expansion = expansion
    return expansion


def expand_all(graph: DataflowGraph) -> None:
    for _, node in graph.all_nodes():
        expand(node, graph)


# ---------------------------------------------------------------------------
# Iteration accounting
# ---------------------------------------------------------------------------


def unit_iteration_domains(
    unit: KernelUnit,
    arrays: dict[str, ArrayInfo],
    domain: tuple[int, int, int],
    placement: RankPlacement,
) -> list[tuple[dict[str, tuple[int, int]], UnitBlock]]:
    """Per-block concrete iteration hulls of one unit.

    Predicated region statements iterate the full (extended) domain with the
    region as an index guard; region-only units iterate exactly their cells.
    Returns an empty hull list for blocks whose statements are all empty on
    this rank.
    """
    nk = domain[2]
    out = []
    for block in unit.blocks:
        k0, k1 = block.interval.resolve(nk)
        hull: dict[str, tuple[int, int]] | None = None
        for stmt in block.statements:
            info = arrays[stmt.target]
            if unit.region_only:
                dom = statement_write_domain(stmt, info, domain, placement, (k0, k1))
                if dom is None:
                    continue
            else:
                unconstrained = Statement(stmt.target, stmt.expr, None, stmt.loc)
                dom = statement_write_domain(
                    unconstrained, info, domain, placement, (k0, k1)
                )
            if hull is None:
                hull = dict(dom)
            else:
                for axis in ("I", "J", "K"):
                    lo, hi = hull[axis]
                    dlo, dhi = dom[axis]
                    hull[axis] = (min(lo, dlo), max(hi, dhi))
        if hull is not None:
            out.append((hull, block))
    return out


def node_worker_iterations(node: StencilNode, graph: DataflowGraph) -> int:
    """Total iteration points one execution of this node spawns."""
    if node.expansion is None:
        expand(node, graph)
    total = 0
    for unit in node.expansion.units:
        for hull, _ in unit_iteration_domains(
            unit, graph.arrays, graph.domain, graph.placement
        ):
            points = 1
            for axis in ("I", "J", "K"):
                lo, hi = hull[axis]
                points *= max(0, hi - lo)
            total += points
    return total
