"""Halo extent inference.

Temporaries are computed over the interior extended (horizontally) by the
union of offsets at which they are consumed; that extension propagates
transitively to the inputs of their defining statements. Vertical extents
come from interval-aware offset arithmetic: a read of ``f[0, 0, -1]`` inside
``interval(K_start + 1, K_end)`` never leaves the interior, so it needs no
vertical halo. Region-restricted statements touch exactly their (possibly
halo) region cells.

The result of :func:`infer_extents` is the allocation contract used by
lowering and both execution engines; tests cross-check it against a
mask-marking oracle that instruments reference execution.
"""

from __future__ import annotations

from dataclasses import dataclass

from stencilkit.frontend.ast import (
    AxisConstraint,
    Extent,
    FieldDecl,
    Interval,
    Statement,
    StencilProgram,
    clamp_reach,
    expr_reads,
    union_reach,
)
from stencilkit.frontend.validate import ResolvedInvoke, minimum_nk, resolve_driver

Reach = tuple[int, int]  # (lo <= 0, hi >= 0) excess beyond the interior


@dataclass(frozen=True)
class FieldRequirements:
    """Per-field analysis products shared by lowering and execution.

    ``extension`` is the horizontal compute-domain extension applied when a
    temporary is written; ``extent`` is the full allocation halo (reads,
    writes and region targets included).
    """

    extension: dict[str, dict[str, Reach]]
    extent: dict[str, Extent]
    min_nk: int
    min_ni: int
    min_nj: int


def _constraint_side_reach(c: AxisConstraint, shift: int) -> Reach:
    """Touch excess of a region-constrained axis, shifted by a read offset.

    Start-anchored cells only ever produce low-side excess and end-anchored
    cells high-side excess; mixed ranges contribute on both sides. Assumes
    the domain is large enough that anchored cells never cross to the
    opposite edge (enforced via the minimum-domain contract).
    """
    lo = 0
    hi = 0
    edges = []
    if c.kind == "point":
        edges = [(c.lo, 0)]
    elif c.kind == "range":
        # inclusive cell bounds of the half-open range; open ends stay interior
        if c.lo is not None:
            edges.append((c.lo, 0))
        if c.hi is not None:
            edges.append((c.hi, -1))
    for edge, adjust in edges:
        off = edge.offset + adjust + shift
        if edge.anchor == "start":
            lo = min(lo, off)
        else:
            # index n + off; excess over the last interior cell n - 1
            hi = max(hi, off + 1)
    return (lo, hi)


def _interval_reach(iv: Interval, dk: int) -> Reach:
    lo = 0
    hi = 0
    if iv.start.anchor == "start":
        lo = min(0, iv.start.offset + dk)
    if iv.end.anchor == "end":
        hi = max(0, iv.end.offset + dk)
    return (lo, hi)


def _statement_domain_reach(
    stmt: Statement, axis: str, extension: dict[str, Reach], target_temp: bool
) -> tuple[Reach, bool]:
    """Iteration reach of a statement on a horizontal axis.

    Returns (reach, anchored): ``anchored`` is True when the axis is pinned
    by a region constraint, in which case ``reach`` already denotes exact
    cells rather than an interior-spanning extension.
    """
    c = stmt.region.constraint(axis) if stmt.region is not None else None
    if c is not None and c.kind != "full":
        return _constraint_side_reach(c, 0), True
    if target_temp:
        return extension[axis], False
    return (0, 0), False


def compute_requirements(program: StencilProgram) -> FieldRequirements:
    """Compute temp compute-domain extensions and per-field halo extents."""
    fields = program.field_map()
    trace = resolve_driver(program)
    stencil_map = program.stencil_map()

    extension: dict[str, dict[str, Reach]] = {
        f.name: {"I": (0, 0), "J": (0, 0)} for f in program.fields
    }
    touched: dict[str, dict[str, Reach]] = {
        f.name: {"I": (0, 0), "J": (0, 0), "K": (0, 0)} for f in program.fields
    }

    def touch(name: str, axis: str, reach: Reach) -> None:
        touched[name][axis] = union_reach(touched[name][axis], reach)

    def consume(name: str, axis: str, reach: Reach) -> None:
        if fields[name].temporary and axis in ("I", "J"):
            extension[name][axis] = union_reach(extension[name][axis], reach)

    for invoke in reversed(trace):
        stencil = stencil_map[invoke.stencil]
        for block in reversed(stencil.blocks):
            for stmt in reversed(block.statements):
                tdecl = fields[stmt.target]
                dom: dict[str, tuple[Reach, bool]] = {}
                for axis in ("I", "J"):
                    dom[axis] = _statement_domain_reach(
                        stmt, axis, extension[stmt.target], tdecl.temporary
                    )
                # write touches
                for axis in ("I", "J"):
                    if tdecl.has_axis(axis):
                        touch(stmt.target, axis, dom[axis][0])
                if tdecl.has_axis("K"):
                    touch(stmt.target, "K", _interval_reach(block.interval, 0))
                # read touches and consumption
                for read in expr_reads(stmt.expr):
                    rdecl = fields[read.field]
                    for axis in ("I", "J"):
                        if not rdecl.has_axis(axis):
                            continue
                        base, anchored = dom[axis]
                        off = read.offset.component(axis)
                        if anchored:
                            reach = (min(0, base[0] + off), max(0, base[1] + off))
                        else:
                            reach = (base[0] + off, base[1] + off)
                            reach = (min(0, reach[0]), max(0, reach[1]))
                        touch(read.field, axis, reach)
                        consume(read.field, axis, reach)
                    if rdecl.has_axis("K"):
                        touch(
                            read.field,
                            "K",
                            _interval_reach(block.interval, read.offset.dk),
                        )

    extents = {
        name: Extent(
            i=clamp_reach(reach["I"]) if fields[name].has_axis("I") else (0, 0),
            j=clamp_reach(reach["J"]) if fields[name].has_axis("J") else (0, 0),
            k=clamp_reach(reach["K"]) if fields[name].has_axis("K") else (0, 0),
        )
        for name, reach in touched.items()
    }

    min_nk = minimum_nk(program) or 1
    spans = []
    for name, ext in extents.items():
        for axis in ("I", "J"):
            lo, hi = ext.component(axis)
            spans.append(hi - lo)
    guard = 2 * max(spans, default=0) + 2
    return FieldRequirements(
        extension=extension,
        extent=extents,
        min_nk=min_nk,
        min_ni=max(1, guard),
        min_nj=max(1, guard),
    )


def infer_extents(program: StencilProgram) -> dict[str, Extent]:
    """Per-field halo extents (allocation contract) for a validated program."""
    return compute_requirements(program).extent
