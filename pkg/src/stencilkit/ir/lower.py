"""Lowering from a validated program to the dataflow graph.

Each driver step becomes one state: a stencil invocation yields a state
holding one StencilNode per computation block (named ``<stencil>_<block>``),
driver loops become guarded state-machine cycles with counter assignments,
and branches become conditional transitions. Scalar assignments ride on the
transition into the following state.

Memlets are exact for the concrete domain: statement iteration domains are
the interior, extended for temporaries by their consumption reach and/or
pinned by horizontal regions (resolved against the rank placement), shifted
per read offset, with vertical ranges from the block interval.
"""

from __future__ import annotations

from typing import Optional

from stencilkit.frontend.ast import (
    AxisConstraint,
    BinOp,
    Compare,
    ComputationBlock,
    Const,
    DriverAssign,
    DriverIf,
    DriverInvoke,
    DriverLoop,
    Expr,
    ScalarRef,
    Statement,
    StencilProgram,
    UnaryOp,
    expr_reads,
)
from stencilkit.frontend.extents import compute_requirements
from stencilkit.frontend.validate import validate
from stencilkit.ir.graph import (
    FULL_TILE,
    ArrayInfo,
    Box,
    DataflowGraph,
    DataflowState,
    LoopInfo,
    Memlet,
    RankPlacement,
    StencilNode,
    Transition,
)
from stencilkit.scheduling import allocate_layout, default_schedule


class LoweringError(Exception):
    pass


def clone_block(block: ComputationBlock) -> ComputationBlock:
    """Copy a block so node-local rewrites never alias the source AST.

    Expression trees are immutable and may be shared; statement and block
    containers are fresh.
    """
    return ComputationBlock(
        policy=block.policy,
        interval=block.interval,
        statements=[
            Statement(s.target, s.expr, s.region, s.loc) for s in block.statements
        ],
        loc=block.loc,
    )


def node_uid(name: str, state: str, position: int) -> str:
    return f"{name}@{state}#{position}"


# ---------------------------------------------------------------------------
# Region and domain resolution
# ---------------------------------------------------------------------------


def resolve_constraint(
    c: AxisConstraint,
    n: int,
    axis: str,
    placement: RankPlacement,
) -> Optional[tuple[int, int]]:
    """Concrete half-open range of a non-full region constraint, or None when
    empty. Anchors on edges this rank does not own never fire; open range
    ends clip to the interior."""
    for edge in c.anchors():
        if not placement.owns(axis, edge.anchor):
            return None
    if c.kind == "point":
        idx = c.lo.resolve(n)
        return (idx, idx + 1)
    lo = c.lo.resolve(n) if c.lo is not None else 0
    hi = c.hi.resolve(n) if c.hi is not None else n
    if hi <= lo:
        return None
    return (lo, hi)


def statement_write_domain(
    stmt: Statement,
    info: ArrayInfo,
    domain: tuple[int, int, int],
    placement: RankPlacement,
    interval_range: tuple[int, int],
) -> Optional[dict[str, tuple[int, int]]]:
    """Concrete per-axis iteration ranges of one statement, or None if its
    region is empty on this rank."""
    ni, nj, _ = domain
    sizes = {"I": ni, "J": nj}
    out: dict[str, tuple[int, int]] = {}
    for axis in ("I", "J"):
        ext = info.extension.get(axis, (0, 0)) if info.transient else (0, 0)
        base = (ext[0], sizes[axis] + ext[1])
        c = stmt.region.constraint(axis) if stmt.region is not None else None
        if c is None or c.kind == "full":
            rng = base
        else:
            rng = resolve_constraint(c, sizes[axis], axis, placement)
            if rng is None:
                return None
        out[axis] = rng
    out["K"] = interval_range
    return out


def compute_node_memlets(
    node: StencilNode,
    arrays: dict[str, ArrayInfo],
    domain: tuple[int, int, int],
    placement: RankPlacement,
) -> None:
    """Recompute a node's read/write memlets (one per field per direction)."""
    nk = domain[2]
    read_boxes: dict[str, list[Box]] = {}
    write_boxes: dict[str, list[Box]] = {}
    for block in node.blocks:
        k0, k1 = block.interval.resolve(nk)
        for stmt in block.statements:
            info = arrays[stmt.target]
            dom = statement_write_domain(stmt, info, domain, placement, (k0, k1))
            if dom is None:
                continue
            write_boxes.setdefault(stmt.target, []).append(
                _field_box(info, dom, (0, 0, 0))
            )
            for read in expr_reads(stmt.expr):
                rinfo = arrays[read.field]
                read_boxes.setdefault(read.field, []).append(
                    _field_box(rinfo, dom, (read.offset.di, read.offset.dj, read.offset.dk))
                )
    node.reads = [
        Memlet(name, "read", tuple(boxes)) for name, boxes in sorted(read_boxes.items())
    ]
    node.writes = [
        Memlet(name, "write", tuple(boxes)) for name, boxes in sorted(write_boxes.items())
    ]


def _field_box(
    info: ArrayInfo, dom: dict[str, tuple[int, int]], offset: tuple[int, int, int]
) -> Box:
    shifts = dict(zip(("I", "J", "K"), offset))
    ranges = []
    for axis in info.dims:
        lo, hi = dom[axis]
        ranges.append((lo + shifts[axis], hi + shifts[axis]))
    return Box(tuple(ranges))


# ---------------------------------------------------------------------------
# Lowering proper
# ---------------------------------------------------------------------------


def lower(
    program: StencilProgram,
    domain: tuple[int, int, int],
    placement: RankPlacement = FULL_TILE,
    alignment: int = 8,
) -> DataflowGraph:
    """Lower a validated program onto a concrete domain."""
    diags = validate(program)
    if diags:
        raise LoweringError(
            "cannot lower invalid program: " + "; ".join(d.message for d in diags)
        )
    if min(domain) < 1:
        raise LoweringError("domain extents must be positive")
    reqs = compute_requirements(program)
    ni, nj, nk = domain
    if nk < reqs.min_nk or ni < reqs.min_ni or nj < reqs.min_nj:
        raise LoweringError(
            f"domain {domain} is smaller than the program's stencil reach "
            f"(needs at least ({reqs.min_ni}, {reqs.min_nj}, {reqs.min_nk}))"
        )

    arrays: dict[str, ArrayInfo] = {}
    for f in program.fields:
        extent = reqs.extent[f.name]
        arrays[f.name] = ArrayInfo(
            name=f.name,
            dims=f.dims,
            dtype=f.dtype,
            transient=f.temporary,
            extent=extent,
            layout=allocate_layout(f, extent, domain, alignment),
            extension=dict(reqs.extension[f.name]) if f.temporary else {},
        )

    graph = DataflowGraph(
        arrays=arrays,
        states=[],
        transitions=[],
        start_state="entry",
        symbols=program.const_map(),
        domain=domain,
        placement=placement,
        alignment=alignment,
    )
    _Builder(graph, program).build()

    for state in graph.states:
        for node in state.sequence:
            compute_node_memlets(node, arrays, domain, placement)
        state.rebuild_dataflow()
    return graph


class _Builder:
    """Emits states and transitions while walking the driver AST."""

    def __init__(self, graph: DataflowGraph, program: StencilProgram):
        self.graph = graph
        self.program = program
        self.stencils = program.stencil_map()
        self.counter = 0
        self.pending: dict[str, Expr] = {}
        self.current: Optional[str] = None

    def new_state(self, prefix: str) -> DataflowState:
        state = DataflowState(name=f"{prefix}{self.counter}")
        self.counter += 1
        self.graph.states.append(state)
        return state

    def ensure_state(self) -> None:
        if self.current is None:
            entry = DataflowState(name="entry")
            self.graph.states.insert(0, entry)
            self.graph.start_state = entry.name
            self.current = entry.name

    def link(self, dst: str, condition=None) -> None:
        if self.current is None and condition is None and not self.pending:
            # the first driver step is itself the start state
            self.graph.start_state = dst
            self.current = dst
            return
        self.ensure_state()
        self.graph.transitions.append(
            Transition(self.current, dst, condition, dict(self.pending))
        )
        self.pending = {}
        self.current = dst

    def build(self) -> None:
        self.emit(self.program.driver)
        if not self.graph.states:
            self.graph.states.append(DataflowState(name="entry"))
            self.graph.start_state = "entry"

    def emit(self, stmts) -> None:
        for stmt in stmts:
            if isinstance(stmt, DriverAssign):
                self.pending[stmt.name] = _subst_pending(stmt.expr, self.pending)
            elif isinstance(stmt, DriverInvoke):
                state = self.new_state("s")
                self._fill_invoke_state(state, stmt)
                self.link(state.name)
            elif isinstance(stmt, DriverIf):
                self._emit_if(stmt)
            elif isinstance(stmt, DriverLoop):
                self._emit_loop(stmt)
            else:  # pragma: no cover
                raise TypeError(f"unknown driver statement {stmt!r}")

    def _fill_invoke_state(self, state: DataflowState, stmt: DriverInvoke) -> None:
        stencil = self.stencils[stmt.stencil]
        for idx, block in enumerate(stencil.blocks):
            name = f"{stmt.stencil}_{idx}"
            node = StencilNode(
                name=name,
                uid=node_uid(name, state.name, len(state.sequence)),
                blocks=[clone_block(block)],
                kwargs=dict(stmt.kwargs),
                participants=(name,),
            )
            state.sequence.append(node)

    def _emit_if(self, stmt: DriverIf) -> None:
        self.ensure_state()
        fork = self.current
        pending = dict(self.pending)
        join = self.new_state("join")

        for cond_flag, body in ((True, stmt.then), (False, stmt.orelse)):
            self.current = fork
            self.pending = dict(pending)
            head = self.new_state("br")
            self.link(head.name, (stmt.cond, cond_flag))
            self.emit(body)
            self.link(join.name)

        self.current = join.name
        self.pending = {}

    def _emit_loop(self, stmt: DriverLoop) -> None:
        self.ensure_state()
        guard = self.new_state("guard")
        self.pending[stmt.var] = _subst_pending(Const(0.0), self.pending)
        self.link(guard.name)

        cond = Compare("<", ScalarRef(stmt.var), stmt.count)
        body_head = self.new_state("body")
        first_body_idx = len(self.graph.states) - 1
        self.link(body_head.name, (cond, True))
        self.emit(stmt.body)
        self.pending[stmt.var] = _subst_pending(
            BinOp("+", ScalarRef(stmt.var), Const(1.0)), self.pending
        )
        self.link(guard.name)

        exit_state = self.new_state("exit")
        self.graph.transitions.append(
            Transition(guard.name, exit_state.name, (cond, False), {})
        )
        body_states = [s.name for s in self.graph.states[first_body_idx:-1]]
        self.graph.loops.append(
            LoopInfo(
                var=stmt.var,
                count=stmt.count,
                guard=guard.name,
                body=body_states,
                exit=exit_state.name,
                unrollable=stmt.unroll,
            )
        )
        self.current = exit_state.name


def _subst_pending(expr: Expr, pending: dict[str, Expr]) -> Expr:
    """Fold earlier same-transition assignments into a driver expression."""
    if isinstance(expr, ScalarRef) and expr.name in pending:
        return pending[expr.name]
    if isinstance(expr, BinOp):
        return BinOp(expr.op, _subst_pending(expr.lhs, pending), _subst_pending(expr.rhs, pending))
    if isinstance(expr, Compare):
        return Compare(expr.op, _subst_pending(expr.lhs, pending), _subst_pending(expr.rhs, pending))
    if isinstance(expr, UnaryOp):
        return UnaryOp(expr.op, _subst_pending(expr.operand, pending))
    return expr


def assign_default_schedules(graph: DataflowGraph) -> None:
    for _, node in graph.all_nodes():
        node.schedule = default_schedule(node, graph.arrays)


def fuse_linear_states(graph: DataflowGraph) -> None:
    """Merge runs of states connected by unconditional, assignment-free
    transitions so straight-line driver steps share one state.

    This is pipeline plumbing: it exposes adjacent stencil nodes to fusion
    matchers and cutout enumeration. Loop guards and exits are preserved.
    """
    changed = True
    while changed:
        changed = False
        protected = {l.guard for l in graph.loops} | {l.exit for l in graph.loops}
        for t in list(graph.transitions):
            if t.condition is not None or t.assignments or t.src == t.dst:
                continue
            if t.src in protected or t.dst in protected:
                continue
            if len(graph.out_transitions(t.src)) != 1:
                continue
            if len([x for x in graph.transitions if x.dst == t.dst]) != 1:
                continue
            if _loop_of(graph, t.src) != _loop_of(graph, t.dst):
                continue
            src = graph.state(t.src)
            dst = graph.state(t.dst)
            for node in dst.sequence:
                node.uid = node_uid(node.name, src.name, len(src.sequence))
                src.sequence.append(node)
            graph.transitions.remove(t)
            for x in graph.transitions:
                if x.src == dst.name:
                    x.src = src.name
                if x.dst == dst.name:
                    x.dst = src.name
            graph.states.remove(dst)
            for info in graph.loops:
                info.body = _dedup([src.name if b == dst.name else b for b in info.body])
            src.rebuild_dataflow()
            changed = True
            break
    graph.bump_version()


def _loop_of(graph: DataflowGraph, state: str) -> Optional[int]:
    for idx, info in enumerate(graph.loops):
        if state in info.body:
            return idx
    return None


def _dedup(items: list) -> list:
    seen = set()
    out = []
    for x in items:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out
