"""Reference interpreter: the correctness oracle.

Executes the declarative semantics directly on dense row-major scratch
arrays, ignoring schedules and layouts entirely: driver trace in order;
blocks per their vertical policy (PARALLEL runs as FORWARD; validation
guarantees the order is unobservable); at each level every statement is
applied across its full horizontal domain (temporaries over their extended
domain, regions over their resolved cells) before the next statement runs.

The right-hand side of a statement is materialized for the whole level
before assignment, so offset reads of the statement's own target observe
pre-statement values.

Power uses elementwise libm ``pow`` (no vectorized shortcuts) so results are
bit-identical to the scalar engines, which call libm with runtime-opaque
exponents.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from stencilkit.frontend.ast import (
    BinOp,
    Call,
    Compare,
    ComputationBlock,
    Const,
    Expr,
    FieldRead,
    ScalarRef,
    Statement,
    StencilProgram,
    UnaryOp,
)
from stencilkit.frontend.extents import FieldRequirements, compute_requirements
from stencilkit.frontend.validate import resolve_driver
from stencilkit.ir.graph import FULL_TILE, DataflowGraph, RankPlacement
from stencilkit.ir.lower import resolve_constraint

_LIBM_POW = np.frompyfunc(math.pow, 2, 1)


def libm_pow(a, b):
    """Elementwise correctly-rounded pow matching scalar math.pow bitwise."""
    out = _LIBM_POW(a, b)
    if isinstance(out, np.ndarray):
        return out.astype(np.float64)
    return float(out)


@dataclass
class AccessRecorder:
    """Marks every touched cell per node execution on boolean masks.

    Used as the brute-force unique-address oracle: mask shapes follow the
    dense scratch arrays, and counts are unioned per (node, direction).
    """

    shapes: dict[str, tuple[int, ...]]
    current: str = ""
    executions: list[dict] = dataclass_field(default_factory=list)
    _masks: dict[str, dict[str, np.ndarray]] = dataclass_field(default_factory=dict)

    def begin_node(self, key: str) -> None:
        self.flush()
        self.current = key
        self._masks = {
            "read": {},
            "write": {},
        }

    def mark(self, kind: str, fieldname: str, index) -> None:
        masks = self._masks[kind]
        if fieldname not in masks:
            masks[fieldname] = np.zeros(self.shapes[fieldname], dtype=bool)
        masks[fieldname][index] = True

    def flush(self) -> None:
        if self.current:
            self.executions.append(
                {
                    "node": self.current,
                    "read": {f: int(m.sum()) for f, m in self._masks["read"].items()},
                    "write": {f: int(m.sum()) for f, m in self._masks["write"].items()},
                    "read_masks": self._masks["read"],
                    "write_masks": self._masks["write"],
                }
            )
        self.current = ""
        self._masks = {}

    def union_reach(self, halos: dict[str, tuple[int, ...]]) -> dict[str, list[tuple[int, int]]]:
        """Per-field per-axis touched reach beyond the interior, unioned over
        all executions; used as the extent oracle."""
        union: dict[str, np.ndarray] = {}
        for ex in self.executions:
            for kind in ("read_masks", "write_masks"):
                for f, m in ex[kind].items():
                    if f not in union:
                        union[f] = m.copy()
                    else:
                        union[f] |= m
        reach = {}
        for f, m in union.items():
            halo = halos[f]
            axes_reach = []
            for axis in range(m.ndim):
                other = tuple(a for a in range(m.ndim) if a != axis)
                line = m.any(axis=other) if other else m
                touched = np.nonzero(line)[0]
                if touched.size == 0:
                    axes_reach.append((0, 0))
                    continue
                n_interior = m.shape[axis] - halo[axis][0] - halo[axis][1]
                lo = min(0, int(touched.min()) - halo[axis][0])
                hi = max(0, int(touched.max()) - halo[axis][0] - (n_interior - 1))
                axes_reach.append((lo, hi))
            reach[f] = axes_reach
        return reach


class _Context:
    """One program execution: dense arrays plus resolution tables."""

    def __init__(
        self,
        fields,
        reqs: FieldRequirements,
        domain: tuple[int, int, int],
        placement: RankPlacement,
        inputs: dict[str, np.ndarray],
        recorder: AccessRecorder | None,
        check_finite: bool,
    ):
        self.fields = fields
        self.reqs = reqs
        self.domain = domain
        self.placement = placement
        self.recorder = recorder
        self.check_finite = check_finite
        self.finite_events: list[str] = []
        ni, nj, nk = domain
        sizes = {"I": ni, "J": nj, "K": nk}
        self.sizes = sizes
        self.halos: dict[str, dict[str, int]] = {}
        self.arrays: dict[str, np.ndarray] = {}
        for decl in fields.values():
            ext = reqs.extent[decl.name]
            shape = []
            halos = {}
            for axis in decl.dims:
                lo, hi = ext.component(axis)
                shape.append(-lo + sizes[axis] + hi)
                halos[axis] = -lo
            self.halos[decl.name] = halos
            np_dtype = np.float32 if getattr(decl, "dtype", "float64") == "float32" else np.float64
            if decl.name in inputs:
                arr = np.array(inputs[decl.name], dtype=np_dtype)
                if tuple(arr.shape) != tuple(shape):
                    raise ValueError(
                        f"input {decl.name!r} has shape {arr.shape}, expected {tuple(shape)}"
                    )
            else:
                arr = np.zeros(shape, dtype=np_dtype)
            self.arrays[decl.name] = arr

    def index(self, name: str, ranges: dict[str, tuple[int, int]], k: int, dk: tuple[int, int, int]):
        """Bounds-checked numpy index for a field over shifted per-axis
        ranges at level k (negative-index wraparound must never happen)."""
        decl = self.fields[name]
        halos = self.halos[name]
        shape = self.arrays[name].shape
        shifts = dict(zip(("I", "J", "K"), dk))
        idx = []
        for pos, axis in enumerate(decl.dims):
            if axis == "K":
                kk = k + shifts["K"] + halos["K"]
                if not 0 <= kk < shape[pos]:
                    raise IndexError(
                        f"vertical access to {name!r} at level {kk - halos['K']} "
                        "is outside the allocated halo"
                    )
                idx.append(kk)
            else:
                lo, hi = ranges[axis]
                a = lo + shifts[axis] + halos[axis]
                b = hi + shifts[axis] + halos[axis]
                if a < 0 or b > shape[pos]:
                    raise IndexError(
                        f"{axis} access to {name!r} over [{a - halos[axis]}, "
                        f"{b - halos[axis]}) is outside the allocated halo"
                    )
                idx.append(slice(a, b))
        return tuple(idx)


def _eval(expr: Expr, ctx: _Context, ranges, k: int, scalars: dict[str, float], record: bool):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, ScalarRef):
        return scalars[expr.name]
    if isinstance(expr, FieldRead):
        off = (expr.offset.di, expr.offset.dj, expr.offset.dk)
        idx = ctx.index(expr.field, ranges, k, off)
        if record and ctx.recorder is not None:
            ctx.recorder.mark("read", expr.field, idx)
        value = ctx.arrays[expr.field][idx]
        if ctx.arrays[expr.field].dtype == np.float32:
            value = np.float64(value) if np.isscalar(value) else value.astype(np.float64)
        return value
    if isinstance(expr, UnaryOp):
        return -_eval(expr.operand, ctx, ranges, k, scalars, record)
    if isinstance(expr, BinOp):
        lhs = _eval(expr.lhs, ctx, ranges, k, scalars, record)
        rhs = _eval(expr.rhs, ctx, ranges, k, scalars, record)
        if expr.op == "+":
            return lhs + rhs
        if expr.op == "-":
            return lhs - rhs
        if expr.op == "*":
            return lhs * rhs
        if expr.op == "/":
            return lhs / rhs
        return libm_pow(lhs, rhs)
    if isinstance(expr, Compare):
        lhs = _eval(expr.lhs, ctx, ranges, k, scalars, record)
        rhs = _eval(expr.rhs, ctx, ranges, k, scalars, record)
        op = expr.op
        if op == "<":
            return lhs < rhs
        if op == "<=":
            return lhs <= rhs
        if op == ">":
            return lhs > rhs
        if op == ">=":
            return lhs >= rhs
        if op == "==":
            return lhs == rhs
        return lhs != rhs
    if isinstance(expr, Call):
        args = [_eval(a, ctx, ranges, k, scalars, record) for a in expr.args]
        if expr.func == "sqrt":
            return np.sqrt(args[0])
        if expr.func == "abs":
            return np.abs(args[0])
        if expr.func == "min":
            return np.minimum(args[0], args[1])
        if expr.func == "max":
            return np.maximum(args[0], args[1])
        if expr.func == "select":
            with np.errstate(all="ignore"):
                return np.where(args[0], args[1], args[2])
    raise TypeError(f"cannot evaluate {expr!r}")  # pragma: no cover


def _statement_ranges(ctx: _Context, stmt: Statement) -> dict[str, tuple[int, int]] | None:
    """Concrete horizontal iteration ranges of a statement, or None if its
    region is empty on this rank."""
    decl = ctx.fields[stmt.target]
    out = {}
    for axis in ("I", "J"):
        n = ctx.sizes[axis]
        if decl.temporary:
            lo, hi = ctx.reqs.extension[stmt.target][axis]
            base = (lo, n + hi)
        else:
            base = (0, n)
        c = stmt.region.constraint(axis) if stmt.region is not None else None
        if c is None or c.kind == "full":
            out[axis] = base
        else:
            rng = resolve_constraint(c, n, axis, ctx.placement)
            if rng is None:
                return None
            out[axis] = rng
    return out


def _run_block(ctx: _Context, block: ComputationBlock, scalars: dict[str, float]) -> None:
    nk = ctx.sizes["K"]
    k0, k1 = block.interval.resolve(nk)
    levels = range(k0, k1) if block.policy != "BACKWARD" else range(k1 - 1, k0 - 1, -1)
    plans = []
    for stmt in block.statements:
        ranges = _statement_ranges(ctx, stmt)
        if ranges is not None:
            plans.append((stmt, ranges))
    for k in levels:
        for stmt, ranges in plans:
            rhs = _eval(stmt.expr, ctx, ranges, k, scalars, record=True)
            idx = ctx.index(stmt.target, ranges, k, (0, 0, 0))
            if ctx.recorder is not None:
                ctx.recorder.mark("write", stmt.target, idx)
            ctx.arrays[stmt.target][idx] = rhs
            if ctx.check_finite and not np.all(np.isfinite(ctx.arrays[stmt.target][idx])):
                if len(ctx.finite_events) < 16:
                    ctx.finite_events.append(
                        f"non-finite value writing {stmt.target!r} at level {k}"
                    )


def run_reference(
    program: StencilProgram,
    inputs: dict[str, np.ndarray],
    domain: tuple[int, int, int],
    placement: RankPlacement = FULL_TILE,
    recorder: AccessRecorder | None = None,
    check_finite: bool = False,
) -> dict[str, np.ndarray]:
    """Execute a validated program; returns halo-inclusive arrays for every
    non-temporary field (inputs it never wrote are returned as provided)."""
    fields = program.field_map()
    reqs = compute_requirements(program)
    ctx = _Context(fields, reqs, domain, placement, inputs, recorder, check_finite)
    stencil_map = program.stencil_map()
    consts = program.const_map()
    invocation_counter: dict[str, int] = defaultdict(int)
    for invoke in resolve_driver(program):
        stencil = stencil_map[invoke.stencil]
        scalars = dict(consts)
        scalars.update(invoke.kwarg_map())
        seq = invocation_counter[invoke.stencil]
        invocation_counter[invoke.stencil] += 1
        for idx, block in enumerate(stencil.blocks):
            if recorder is not None:
                recorder.begin_node(f"{invoke.stencil}_{idx}#{seq}")
            _run_block(ctx, block, scalars)
    if recorder is not None:
        recorder.flush()
    return {
        name: arr.copy()
        for name, arr in ctx.arrays.items()
        if not fields[name].temporary
    }


def run_reference_graph(
    graph: DataflowGraph,
    inputs: dict[str, np.ndarray],
    check_finite: bool = False,
) -> dict[str, np.ndarray]:
    """Reference-interpret a dataflow graph (post-transform oracle for
    cutouts and whole graphs): nodes execute in trace order with declarative
    per-level semantics; scratch arrays are dense and layout-free."""
    fields = _graph_fields(graph)
    reqs = _graph_requirements(graph)
    ctx = _Context(fields, reqs, graph.domain, graph.placement, inputs, None, check_finite)
    from stencilkit.frontend.validate import _eval_driver_expr

    by_state = {s.name: s for s in graph.states}
    for sname, env in graph.execution_trace():
        for node in by_state[sname].sequence:
            scalars = dict(env)
            for key, expr in node.kwargs.items():
                scalars[key] = _eval_driver_expr(expr, env)
            for block in node.blocks:
                _run_block(ctx, block, scalars)
    return {
        name: arr.copy() for name, arr in ctx.arrays.items() if not fields[name].temporary
    }


@dataclass
class _DeclShim:
    name: str
    dims: tuple[str, ...]
    temporary: bool
    dtype: str = "float64"

    def has_axis(self, axis: str) -> bool:
        return axis in self.dims

    @property
    def rank(self) -> int:
        return len(self.dims)


def _graph_fields(graph: DataflowGraph) -> dict[str, _DeclShim]:
    return {
        name: _DeclShim(name=name, dims=info.dims, temporary=info.transient, dtype=info.dtype)
        for name, info in graph.arrays.items()
    }


def _graph_requirements(graph: DataflowGraph) -> FieldRequirements:
    extension = {
        name: {
            "I": tuple(info.extension.get("I", (0, 0))),
            "J": tuple(info.extension.get("J", (0, 0))),
        }
        for name, info in graph.arrays.items()
    }
    extent = {name: info.extent for name, info in graph.arrays.items()}
    return FieldRequirements(
        extension=extension, extent=extent, min_nk=1, min_ni=1, min_nj=1
    )
