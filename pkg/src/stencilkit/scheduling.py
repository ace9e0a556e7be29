"""Stencil schedules and aligned memory layouts.

A schedule fixes, for one stencil node: the nesting order of the five
iteration dimensions (``Interval``, ``Operation``, ``K``, ``J``, ``I``,
outermost first), horizontal tile sizes, which dimensions run as parallel
maps versus sequential loops, cache directives per field, and how
region-restricted statements are realized.

Two placements of the (Interval, Operation) pair are part of the space:
leading the spatial dimensions (statements sweep the full domain one at a
time) or nested after two spatial dimensions (statements execute per point
of the outer spatial dims, sweeping the innermost one). Validity follows
from the data dependencies between statements of the node.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import permutations
from typing import Iterable, Optional

from stencilkit.frontend.ast import ComputationBlock, expr_reads

SCHEDULE_DIMS = ("Interval", "Operation", "K", "J", "I")
SPATIAL_DIMS = ("K", "J", "I")
HORIZONTAL_DIMS = ("J", "I")

DEFAULT_TILE_MENU: tuple[Optional[int], ...] = (None, 4, 8, 32)
DEFAULT_ALIGNMENT = 8  # elements; 64 bytes for float64, one cache line


@dataclass(frozen=True)
class Schedule:
    dim_order: tuple[str, ...] = ("Interval", "Operation", "K", "J", "I")
    tile_i: Optional[int] = None
    tile_j: Optional[int] = None
    loop_dims: tuple[str, ...] = ()  # spatial dims run sequentially; others are maps
    caches: tuple[tuple[str, str], ...] = ()  # (field, "register" | "scratch")
    region_strategy: str = "predicated"  # "predicated" | "split"

    def is_map(self, dim: str) -> bool:
        return dim in SPATIAL_DIMS and dim not in self.loop_dims

    def tile_for(self, dim: str) -> Optional[int]:
        if dim == "I":
            return self.tile_i
        if dim == "J":
            return self.tile_j
        return None

    def cache_map(self) -> dict[str, str]:
        return dict(self.caches)

    def to_json(self) -> dict:
        return {
            "dim_order": list(self.dim_order),
            "tile_i": self.tile_i,
            "tile_j": self.tile_j,
            "loop_dims": list(self.loop_dims),
            "caches": [list(c) for c in self.caches],
            "region_strategy": self.region_strategy,
        }

    @staticmethod
    def from_json(doc: dict) -> "Schedule":
        return Schedule(
            dim_order=tuple(doc["dim_order"]),
            tile_i=doc["tile_i"],
            tile_j=doc["tile_j"],
            loop_dims=tuple(doc["loop_dims"]),
            caches=tuple((f, k) for f, k in doc["caches"]),
            region_strategy=doc["region_strategy"],
        )


# ---------------------------------------------------------------------------
# Node dependency summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeDeps:
    """Dependency facts about one node's blocks that constrain schedules."""

    vertical: bool  # any FORWARD/BACKWARD block
    carried_k: bool  # reads a node-written field at dk != 0
    horizontal_coupling: bool  # reads a node-written field at (di, dj) != 0
    ops_outer_k_safe: bool  # statement-major k sweeps preserve semantics
    has_regions: bool
    zero_offset_fields: frozenset[str]  # node fields accessed only at offset 0
    written: frozenset[str]


def analyze_node(blocks: Iterable[ComputationBlock]) -> NodeDeps:
    blocks = list(blocks)
    vertical = any(b.policy != "PARALLEL" for b in blocks)
    written = {s.target for b in blocks for s in b.statements}
    carried_k = False
    horizontal_coupling = False
    has_regions = any(s.region is not None for b in blocks for s in b.statements)

    offsets: dict[str, set[tuple[int, int, int]]] = {}
    for b in blocks:
        for s in b.statements:
            offsets.setdefault(s.target, set()).add((0, 0, 0))
            for r in expr_reads(s.expr):
                off = (r.offset.di, r.offset.dj, r.offset.dk)
                offsets.setdefault(r.field, set()).add(off)
                if r.field in written:
                    if r.offset.dk != 0:
                        carried_k = True
                    if r.offset.di != 0 or r.offset.dj != 0:
                        horizontal_coupling = True

    ops_outer_k_safe = True
    for b in blocks:
        sweep = -1 if b.policy != "BACKWARD" else 1  # dk sign of already-swept levels
        writer_pos = {}
        for idx, s in enumerate(b.statements):
            writer_pos.setdefault(s.target, []).append(idx)
        for idx, s in enumerate(b.statements):
            for r in expr_reads(s.expr):
                if r.offset.dk == 0 or r.field not in writer_pos:
                    continue
                for widx in writer_pos[r.field]:
                    if widx == idx:
                        continue  # self-carried reads stay sequential in k
                    behind = (r.offset.dk > 0) == (sweep > 0)
                    if behind and widx > idx:
                        ops_outer_k_safe = False
                    if not behind and widx < idx:
                        ops_outer_k_safe = False

    zero_offset = frozenset(
        name for name, offs in offsets.items() if offs == {(0, 0, 0)}
    )
    return NodeDeps(
        vertical=vertical,
        carried_k=carried_k,
        horizontal_coupling=horizontal_coupling,
        ops_outer_k_safe=ops_outer_k_safe,
        has_regions=has_regions,
        zero_offset_fields=zero_offset,
        written=frozenset(written),
    )


def _node_blocks(node) -> list[ComputationBlock]:
    return list(node.blocks)


def _node_deps(node) -> NodeDeps:
    return analyze_node(_node_blocks(node))


# ---------------------------------------------------------------------------
# Validity
# ---------------------------------------------------------------------------


def placement_legal(order: tuple[str, ...]) -> bool:
    """Dimension orders keep Interval immediately outside Operation, placed
    either before all spatial dims or after exactly two of them."""
    if sorted(order) != sorted(SCHEDULE_DIMS):
        return False
    p = order.index("Interval")
    if order.index("Operation") != p + 1:
        return False
    return p in (0, 2)


def schedule_validity(node, schedule: Schedule, arrays=None) -> tuple[bool, str]:
    """Check a schedule against a node's dependency structure.

    Returns (ok, reason); reason is empty when valid. ``arrays`` maps
    container names to catalog entries with a ``transient`` flag (used for
    cache feasibility); omit it to skip transience checks.
    """
    deps = _node_deps(node)
    order = schedule.dim_order
    if not placement_legal(order):
        return False, f"illegal dimension order {order}"
    if any(d not in SPATIAL_DIMS for d in schedule.loop_dims):
        return False, "only spatial dimensions can be loop-flagged"
    if (deps.vertical or deps.carried_k) and schedule.is_map("K"):
        return False, "carried dependency on K"
    if deps.horizontal_coupling and tuple(order[-2:]) not in (
        ("J", "I"),
        ("I", "J"),
    ):
        return False, "horizontal coupling requires J and I innermost"
    ops_pos = order.index("Operation")
    k_pos = order.index("K")
    if k_pos > ops_pos and not deps.ops_outer_k_safe:
        return False, "statement-major vertical sweep reorders a carried dependency"
    for t in (schedule.tile_i, schedule.tile_j):
        if t is not None and t < 1:
            return False, "tile sizes must be positive"
    if schedule.region_strategy not in ("predicated", "split"):
        return False, f"unknown region strategy {schedule.region_strategy!r}"
    node_fields = {
        name
        for b in _node_blocks(node)
        for s in b.statements
        for name in [s.target] + [r.field for r in expr_reads(s.expr)]
    }
    for fname, kind in schedule.caches:
        if fname not in node_fields:
            return False, f"cache directive for field {fname!r} not used by node"
        if kind == "register" and fname not in deps.zero_offset_fields:
            if not (fname in deps.written and _only_vertical_offsets(node, fname)):
                return False, "cache visibility violation"
        elif kind == "scratch" and fname in deps.zero_offset_fields:
            return False, "shared scratch requires multi-point access"
        elif kind not in ("register", "scratch"):
            return False, f"unknown cache kind {kind!r}"
    return True, ""


def _only_vertical_offsets(node, fname: str) -> bool:
    for b in _node_blocks(node):
        for s in b.statements:
            for r in expr_reads(s.expr):
                if r.field == fname and (r.offset.di != 0 or r.offset.dj != 0):
                    return False
    return True


# ---------------------------------------------------------------------------
# Defaults and enumeration
# ---------------------------------------------------------------------------


def _default_caches(node, arrays) -> tuple[tuple[str, str], ...]:
    """Single-point temporaries live in the fastest storage: registers."""
    if arrays is None:
        return ()
    deps = _node_deps(node)
    caches = []
    for name in sorted(deps.zero_offset_fields):
        info = arrays.get(name)
        if info is not None and getattr(info, "transient", False) and name in deps.written:
            caches.append((name, "register"))
    return tuple(caches)


def default_schedule(node, arrays=None) -> Schedule:
    """Heuristic schedule: statement-major full sweeps with I unit-stride for
    horizontal stencils; per-column sweeps with a sequential K loop for
    vertical solvers."""
    deps = _node_deps(node)
    if deps.vertical:
        sched = Schedule(
            dim_order=("J", "I", "Interval", "Operation", "K"),
            loop_dims=("K",),
            caches=_default_caches(node, arrays),
        )
    else:
        sched = Schedule(
            dim_order=("Interval", "Operation", "K", "J", "I"),
            caches=_default_caches(node, arrays),
        )
    return sched


def legal_dim_orders() -> list[tuple[str, ...]]:
    orders = []
    for perm in permutations(SPATIAL_DIMS):
        orders.append(("Interval", "Operation") + perm)
    for perm in permutations(SPATIAL_DIMS):
        orders.append(perm[:2] + ("Interval", "Operation") + perm[2:])
    return orders


def enumerate_schedules(
    node,
    arrays=None,
    domain: Optional[tuple[int, int, int]] = None,
    tile_menu: tuple[Optional[int], ...] = DEFAULT_TILE_MENU,
) -> list[Schedule]:
    """All valid schedules for a node, deterministic and duplicate-free.

    Tiling applies one menu entry jointly to the horizontal map dims; the
    menu is filtered against the domain extent when a domain is given.
    """
    deps = _node_deps(node)
    caches = _default_caches(node, arrays)
    loop_dims = ("K",) if (deps.vertical or deps.carried_k) else ()
    tiles = list(tile_menu)
    if domain is not None:
        ni, nj, _ = domain
        tiles = [t for t in tiles if t is None or t <= max(ni, nj)]
    strategies = ("predicated", "split") if deps.has_regions else ("predicated",)

    out: list[Schedule] = []
    seen = set()
    for order in legal_dim_orders():
        for t in tiles:
            for strategy in strategies:
                sched = Schedule(
                    dim_order=order,
                    tile_i=t,
                    tile_j=t,
                    loop_dims=loop_dims,
                    caches=caches,
                    region_strategy=strategy,
                )
                ok, _ = schedule_validity(node, sched, arrays)
                if ok and sched not in seen:
                    seen.add(sched)
                    out.append(sched)
    default = default_schedule(node, arrays)
    if default not in seen:  # pragma: no cover - default is always valid
        out.insert(0, default)
    return out


# ---------------------------------------------------------------------------
# Memory layout (aligned allocation scheme)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """Strided element layout with row padding and leading alignment pad.

    The unit-stride axis is I (FORTRAN-style) when present. Rows on the
    unit-stride axis are padded to a multiple of ``alignment`` elements and
    the buffer gets ``pre_pad`` leading elements so that the first interior
    element of every row is aligned.
    """

    dims: tuple[str, ...]
    shape: tuple[int, ...]  # halo-inclusive extents per axis
    halo_lo: tuple[int, ...]
    strides: tuple[int, ...]  # in elements
    pre_pad: int
    alignment: int

    @property
    def total_elements(self) -> int:
        if not self.dims:
            return self.pre_pad + 1
        last = sum((e - 1) * s for e, s in zip(self.shape, self.strides))
        return self.pre_pad + last + 1

    def origin(self) -> int:
        """Linear element index of the all-zero interior point."""
        return self.pre_pad + sum(h * s for h, s in zip(self.halo_lo, self.strides))

    def address(self, point: tuple[int, ...]) -> int:
        """Linear element index of an interior-relative point."""
        return self.origin() + sum(p * s for p, s in zip(point, self.strides))

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "shape": list(self.shape),
            "halo_lo": list(self.halo_lo),
            "strides": list(self.strides),
            "pre_pad": self.pre_pad,
            "alignment": self.alignment,
        }

    @staticmethod
    def from_json(doc: dict) -> "Layout":
        return Layout(
            dims=tuple(doc["dims"]),
            shape=tuple(doc["shape"]),
            halo_lo=tuple(doc["halo_lo"]),
            strides=tuple(doc["strides"]),
            pre_pad=doc["pre_pad"],
            alignment=doc["alignment"],
        )


def allocate_layout(field_decl, extent, domain: tuple[int, int, int], alignment: int = DEFAULT_ALIGNMENT) -> Layout:
    """Aligned layout for one field: I unit-stride, padded rows, pre-pad so
    every row's first interior element sits on an alignment boundary."""
    if alignment < 1 or alignment & (alignment - 1):
        raise ValueError("alignment must be a power of two")
    sizes = dict(zip(("I", "J", "K"), domain))
    dims = field_decl.dims
    shape = []
    halo_lo = []
    for axis in dims:
        lo, hi = extent.component(axis)
        shape.append(-lo + sizes[axis] + hi)
        halo_lo.append(-lo)
    # unit-stride axis is the first declared axis in I, J, K order
    padded = list(shape)
    if dims:
        padded[0] = -(-shape[0] // alignment) * alignment
    strides = [0] * len(dims)
    acc = 1
    for idx in range(len(dims)):
        strides[idx] = acc
        acc *= padded[idx]
    pre_pad = (alignment - (halo_lo[0] % alignment)) % alignment if dims else 0
    return Layout(
        dims=dims,
        shape=tuple(shape),
        halo_lo=tuple(halo_lo),
        strides=tuple(strides),
        pre_pad=pre_pad,
        alignment=alignment,
    )
