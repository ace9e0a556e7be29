"""AST node definitions for the stencil language.

Conventions used throughout the toolkit:

* Grid axes are named ``I``, ``J`` (horizontal) and ``K`` (vertical).
  Interior cells of a domain ``(ni, nj, nk)`` are indexed ``0 .. n-1`` per
  axis; halo cells carry negative indices below and ``>= n`` above.
* Vertical bounds are edge-relative: ``K_start + c`` resolves to ``c`` and
  ``K_end + c`` resolves to ``nk + c``. Intervals are half-open.
* Horizontal region anchors follow the same rule: ``i_start`` is interior
  index 0 and ``i_end`` is one past the last interior index (``ni``), so
  ``i_end - 1`` names the last interior cell and ``i_start - 1`` the first
  halo cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

AXES = ("I", "J", "K")

DTYPES = ("float64", "float32")

POLICIES = ("PARALLEL", "FORWARD", "BACKWARD")

#: Builtin functions callable in statement expressions, with arity.
BUILTINS = {"sqrt": 1, "abs": 1, "min": 2, "max": 2, "select": 3}


@dataclass(frozen=True)
class Loc:
    """Source position, 1-indexed line, 1-indexed column. line 0 = unknown."""

    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


UNKNOWN_LOC = Loc()


class ParseError(Exception):
    """Raised for unrecoverable syntax errors."""

    def __init__(self, message: str, loc: Loc):
        super().__init__(f"{loc}: {message}")
        self.message = message
        self.loc = loc


@dataclass(frozen=True)
class Diagnostic:
    category: str
    message: str
    loc: Loc = UNKNOWN_LOC

    def format(self, filename: str = "<source>") -> str:
        return f"{filename}:{self.loc.line}:{self.loc.col}: {self.category}: {self.message}"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Offset:
    """Relative grid offset of a field access."""

    di: int = 0
    dj: int = 0
    dk: int = 0

    def is_zero(self) -> bool:
        return self.di == 0 and self.dj == 0 and self.dk == 0

    def component(self, axis: str) -> int:
        return {"I": self.di, "J": self.dj, "K": self.dk}[axis]


class Expr:
    """Base class for expression nodes (all concrete nodes are frozen)."""

    __slots__ = ()


@dataclass(frozen=True)
class FieldRead(Expr):
    field: str
    offset: Offset = Offset()
    #: number of offset components as written (0 for a bare name); checked
    #: against the field's rank during validation, ignored for equality
    arity: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ScalarRef(Expr):
    """Reference to a scalar parameter or program constant."""

    name: str


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * / **
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class UnaryOp(Expr):
    op: str  # "-"
    operand: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Compare(Expr):
    op: str  # < <= > >= == !=
    lhs: Expr
    rhs: Expr


def walk_expr(expr: Expr):
    """Yield every node of an expression tree, preorder."""
    yield expr
    if isinstance(expr, (BinOp, Compare)):
        yield from walk_expr(expr.lhs)
        yield from walk_expr(expr.rhs)
    elif isinstance(expr, UnaryOp):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from walk_expr(a)


def expr_reads(expr: Expr) -> list[FieldRead]:
    return [n for n in walk_expr(expr) if isinstance(n, FieldRead)]


def expr_scalars(expr: Expr) -> list[str]:
    return [n.name for n in walk_expr(expr) if isinstance(n, ScalarRef)]


# ---------------------------------------------------------------------------
# Vertical intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VBound:
    """Symbolic vertical bound ``K_start + offset`` or ``K_end + offset``."""

    anchor: str  # "start" | "end"
    offset: int = 0

    def resolve(self, nk: int) -> int:
        return self.offset if self.anchor == "start" else nk + self.offset


@dataclass(frozen=True)
class Interval:
    """Half-open vertical range [start, end)."""

    start: VBound = VBound("start", 0)
    end: VBound = VBound("end", 0)

    def resolve(self, nk: int) -> tuple[int, int]:
        return self.start.resolve(nk), self.end.resolve(nk)

    def is_full(self) -> bool:
        return self == FULL_INTERVAL


FULL_INTERVAL = Interval()


# ---------------------------------------------------------------------------
# Horizontal regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeIndex:
    """Edge-relative horizontal index, e.g. ``i_start - 1`` or ``j_end``."""

    anchor: str  # "start" | "end"
    offset: int = 0

    def resolve(self, n: int) -> int:
        return self.offset if self.anchor == "start" else n + self.offset


@dataclass(frozen=True)
class AxisConstraint:
    """Per-axis region constraint: full slice, single index, or range.

    ``kind`` is one of "full", "point" (``lo`` holds the index) or "range"
    (half-open ``[lo, hi)``; an open end is clipped to the statement's
    iteration domain on that axis).
    """

    kind: str = "full"
    lo: Optional[EdgeIndex] = None
    hi: Optional[EdgeIndex] = None

    def anchors(self) -> list[EdgeIndex]:
        return [e for e in (self.lo, self.hi) if e is not None]


FULL_AXIS = AxisConstraint()


@dataclass(frozen=True)
class HorizontalRegion:
    i: AxisConstraint = FULL_AXIS
    j: AxisConstraint = FULL_AXIS

    def constraint(self, axis: str) -> AxisConstraint:
        return self.i if axis == "I" else self.j


# ---------------------------------------------------------------------------
# Statements, blocks, stencils
# ---------------------------------------------------------------------------


@dataclass
class Statement:
    """Single assignment ``target = expr``, optionally region-restricted.

    The target is always written at offset (0, 0, 0); region-restricted
    statements may place that point into the halo.
    """

    target: str
    expr: Expr
    region: Optional[HorizontalRegion] = None
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class ComputationBlock:
    policy: str  # PARALLEL | FORWARD | BACKWARD
    interval: Interval
    statements: list[Statement]
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class StencilDef:
    name: str
    params: tuple[str, ...]  # scalar parameter names
    blocks: list[ComputationBlock]
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class FieldDecl:
    name: str
    dims: tuple[str, ...]  # ordered subset of AXES
    dtype: str = "float64"
    temporary: bool = False
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)

    def has_axis(self, axis: str) -> bool:
        return axis in self.dims

    @property
    def rank(self) -> int:
        return len(self.dims)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass
class DriverAssign:
    name: str
    expr: Expr  # over Const / ScalarRef / BinOp / UnaryOp
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class DriverIf:
    cond: Expr
    then: list["DriverStmt"]
    orelse: list["DriverStmt"]
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class DriverLoop:
    var: str
    count: Expr
    body: list["DriverStmt"]
    unroll: bool = False
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class DriverInvoke:
    stencil: str
    kwargs: dict[str, Expr]
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


DriverStmt = Union[DriverAssign, DriverIf, DriverLoop, DriverInvoke]


@dataclass
class ConstDecl:
    name: str
    value: float
    loc: Loc = field(default=UNKNOWN_LOC, compare=False, repr=False)


@dataclass
class StencilProgram:
    consts: list[ConstDecl]
    fields: list[FieldDecl]
    stencils: list[StencilDef]
    driver: list[DriverStmt]

    def field_map(self) -> dict[str, FieldDecl]:
        return {f.name: f for f in self.fields}

    def stencil_map(self) -> dict[str, StencilDef]:
        return {s.name: s for s in self.stencils}

    def const_map(self) -> dict[str, float]:
        return {c.name: c.value for c in self.consts}


# ---------------------------------------------------------------------------
# Extents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Extent:
    """Per-axis halo reach [lo, hi] in grid points, lo <= 0 <= hi."""

    i: tuple[int, int] = (0, 0)
    j: tuple[int, int] = (0, 0)
    k: tuple[int, int] = (0, 0)

    def component(self, axis: str) -> tuple[int, int]:
        return {"I": self.i, "J": self.j, "K": self.k}[axis]

    def halo(self, axis: str) -> tuple[int, int]:
        """(lo_width, hi_width) as non-negative widths."""
        lo, hi = self.component(axis)
        return -lo, hi


ZERO_EXTENT = Extent()


def union_reach(a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    return (min(a[0], b[0]), max(a[1], b[1]))


def clamp_reach(r: tuple[int, int]) -> tuple[int, int]:
    return (min(r[0], 0), max(r[1], 0))
