"""Semantic validation and driver resolution.

Validation returns a list of diagnostics (empty means well-formed). The
driver resolver interprets driver control flow against the program constants
and produces the straight-line invocation trace; it is shared by extent
inference, lowering, and the reference interpreter.
"""

from __future__ import annotations

from dataclasses import dataclass

from stencilkit.frontend.ast import (
    UNKNOWN_LOC,
    BinOp,
    Call,
    Compare,
    Const,
    Diagnostic,
    DriverAssign,
    DriverIf,
    DriverInvoke,
    DriverLoop,
    Expr,
    FieldRead,
    Interval,
    ScalarRef,
    StencilDef,
    StencilProgram,
    UnaryOp,
    expr_reads,
    walk_expr,
)

_MAX_PROBE_NK = 256
_PROBE_SPAN = 8


@dataclass(frozen=True)
class ResolvedInvoke:
    """One step of the fully resolved driver trace."""

    stencil: str
    kwargs: tuple[tuple[str, float], ...]

    def kwarg_map(self) -> dict[str, float]:
        return dict(self.kwargs)


class DriverResolutionError(Exception):
    def __init__(self, message: str, loc):
        super().__init__(message)
        self.message = message
        self.loc = loc


def _eval_driver_expr(expr: Expr, env: dict[str, float]):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, ScalarRef):
        if expr.name not in env:
            raise DriverResolutionError(f"undefined name {expr.name!r}", None)
        return env[expr.name]
    if isinstance(expr, UnaryOp):
        return -_eval_driver_expr(expr.operand, env)
    if isinstance(expr, BinOp):
        lhs = _eval_driver_expr(expr.lhs, env)
        rhs = _eval_driver_expr(expr.rhs, env)
        if expr.op == "+":
            return lhs + rhs
        if expr.op == "-":
            return lhs - rhs
        if expr.op == "*":
            return lhs * rhs
        if expr.op == "/":
            return lhs / rhs
        if expr.op == "**":
            return lhs**rhs
        raise DriverResolutionError(f"unsupported operator {expr.op!r}", None)
    if isinstance(expr, Compare):
        lhs = _eval_driver_expr(expr.lhs, env)
        rhs = _eval_driver_expr(expr.rhs, env)
        return float(
            {
                "<": lhs < rhs,
                "<=": lhs <= rhs,
                ">": lhs > rhs,
                ">=": lhs >= rhs,
                "==": lhs == rhs,
                "!=": lhs != rhs,
            }[expr.op]
        )
    if isinstance(expr, (FieldRead, Call)):
        raise DriverResolutionError("field reads and calls are not allowed in the driver", None)
    raise DriverResolutionError(f"unsupported driver expression {expr!r}", None)


def resolve_driver(program: StencilProgram) -> list[ResolvedInvoke]:
    """Interpret driver control flow into a straight-line invocation list.

    Raises DriverResolutionError when the driver is not resolvable to
    constants (unknown names, non-constant trip counts, ...).
    """
    env: dict[str, float] = program.const_map()
    trace: list[ResolvedInvoke] = []

    def run(stmts) -> None:
        for stmt in stmts:
            if isinstance(stmt, DriverAssign):
                try:
                    env[stmt.name] = _eval_driver_expr(stmt.expr, env)
                except DriverResolutionError as err:
                    raise DriverResolutionError(err.message, stmt.loc) from None
            elif isinstance(stmt, DriverIf):
                try:
                    cond = _eval_driver_expr(stmt.cond, env)
                except DriverResolutionError as err:
                    raise DriverResolutionError(err.message, stmt.loc) from None
                run(stmt.then if cond != 0.0 else stmt.orelse)
            elif isinstance(stmt, DriverLoop):
                try:
                    count = _eval_driver_expr(stmt.count, env)
                except DriverResolutionError as err:
                    raise DriverResolutionError(err.message, stmt.loc) from None
                if count != int(count) or count < 0:
                    raise DriverResolutionError(
                        f"loop trip count must be a non-negative integer, got {count!r}",
                        stmt.loc,
                    )
                for it in range(int(count)):
                    env[stmt.var] = float(it)
                    run(stmt.body)
                env.pop(stmt.var, None)
            elif isinstance(stmt, DriverInvoke):
                kwargs = {}
                for key, value in stmt.kwargs.items():
                    try:
                        kwargs[key] = float(_eval_driver_expr(value, env))
                    except DriverResolutionError as err:
                        raise DriverResolutionError(err.message, stmt.loc) from None
                trace.append(ResolvedInvoke(stmt.stencil, tuple(sorted(kwargs.items()))))
            else:  # pragma: no cover
                raise TypeError(f"unknown driver statement {stmt!r}")

    run(program.driver)
    return trace


# ---------------------------------------------------------------------------
# Interval feasibility
# ---------------------------------------------------------------------------


def interval_nonempty(iv: Interval, nk: int) -> bool:
    lo, hi = iv.resolve(nk)
    return lo < hi


def intervals_overlap(a: Interval, b: Interval, nk: int) -> bool:
    a0, a1 = a.resolve(nk)
    b0, b1 = b.resolve(nk)
    return max(a0, b0) < min(a1, b1)


def minimum_nk(program: StencilProgram) -> int | None:
    """Smallest nk such that every interval is non-empty and block intervals
    within each stencil stay disjoint, for all nk' in [nk, nk + 8].

    Returns None if no such nk <= 256 exists.
    """
    intervals = [b.interval for s in program.stencils for b in s.blocks]
    per_stencil = [[b.interval for b in s.blocks] for s in program.stencils]

    def ok(nk: int) -> bool:
        for iv in intervals:
            if not interval_nonempty(iv, nk):
                return False
            lo, hi = iv.resolve(nk)
            if lo < 0 or hi > nk:
                return False
        for ivs in per_stencil:
            for i in range(len(ivs)):
                for j in range(i + 1, len(ivs)):
                    if intervals_overlap(ivs[i], ivs[j], nk):
                        return False
        return True

    for nk in range(1, _MAX_PROBE_NK + 1):
        if all(ok(nk + d) for d in range(_PROBE_SPAN + 1)):
            return nk
    return None


def _written_k_ranges(program: StencilProgram, name: str) -> list[Interval]:
    ranges = []
    for stencil in program.stencils:
        for block in stencil.blocks:
            for stmt in block.statements:
                if stmt.target == name:
                    ranges.append(block.interval)
    return ranges


def _k_read_covered(
    read_iv: Interval, dk: int, produced: list[Interval], nk: int
) -> bool:
    lo, hi = read_iv.resolve(nk)
    needed = set(range(lo + dk, hi + dk))
    have: set[int] = set()
    for iv in produced:
        p0, p1 = iv.resolve(nk)
        have.update(range(p0, p1))
    return needed <= have


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(program: StencilProgram) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    fields = {}
    for f in program.fields:
        if f.name in fields:
            diags.append(Diagnostic("duplicate-field", f"field {f.name!r} redeclared", f.loc))
        fields[f.name] = f

    stencils = {}
    for s in program.stencils:
        if s.name in stencils:
            diags.append(
                Diagnostic("duplicate-stencil", f"stencil {s.name!r} redeclared", s.loc)
            )
        stencils[s.name] = s

    consts = program.const_map()
    min_nk = minimum_nk(program)
    if min_nk is None:
        diags.append(
            Diagnostic(
                "empty-interval",
                "no vertical domain size satisfies all interval bounds",
            )
        )

    for stencil in program.stencils:
        _validate_stencil(program, stencil, fields, consts, min_nk, diags)

    _validate_driver(program, stencils, diags)
    return diags


def _validate_stencil(program, stencil: StencilDef, fields, consts, min_nk, diags) -> None:
    scalar_scope = set(consts) | set(stencil.params)
    for block in stencil.blocks:
        iv = block.interval
        if iv.start.anchor == iv.end.anchor and iv.start.offset >= iv.end.offset:
            diags.append(
                Diagnostic(
                    "empty-interval",
                    f"interval is empty for every domain in stencil {stencil.name!r}",
                    block.loc,
                )
            )
        if (iv.start.anchor == "start" and iv.start.offset < 0) or (
            iv.end.anchor == "end" and iv.end.offset > 0
        ):
            diags.append(
                Diagnostic(
                    "interval-out-of-range",
                    "interval writes outside the vertical domain "
                    "(start must be >= K_start, end <= K_end)",
                    block.loc,
                )
            )
        written = {stmt.target for stmt in block.statements}
        for stmt in block.statements:
            tdecl = fields.get(stmt.target)
            if tdecl is None:
                diags.append(
                    Diagnostic(
                        "unknown-field", f"write to undeclared field {stmt.target!r}", stmt.loc
                    )
                )
            for node in walk_expr(stmt.expr):
                if isinstance(node, ScalarRef):
                    if node.name not in scalar_scope:
                        diags.append(
                            Diagnostic(
                                "unknown-scalar",
                                f"unknown scalar {node.name!r} (not a const or parameter of "
                                f"{stencil.name!r})",
                                stmt.loc,
                            )
                        )
            for read in expr_reads(stmt.expr):
                decl = fields.get(read.field)
                if decl is None:
                    diags.append(
                        Diagnostic(
                            "unknown-field",
                            f"read of undeclared field {read.field!r}",
                            stmt.loc,
                        )
                    )
                    continue
                if read.arity not in (0, decl.rank):
                    diags.append(
                        Diagnostic(
                            "offset-arity",
                            f"offset on {read.field!r} has {read.arity} components, "
                            f"field has {decl.rank} dimension(s)",
                            stmt.loc,
                        )
                    )
                    continue
                if block.policy == "PARALLEL" and read.field in written and read.offset.dk != 0:
                    diags.append(
                        Diagnostic(
                            "parallel-vertical-dependency",
                            f"vertical dependency in PARALLEL block: {read.field!r} is "
                            f"written here and read at dk={read.offset.dk}",
                            stmt.loc,
                        )
                    )
                if (
                    tdecl is not None
                    and tdecl.temporary
                    and read.field == stmt.target
                    and (read.offset.di != 0 or read.offset.dj != 0)
                ):
                    diags.append(
                        Diagnostic(
                            "self-referential-temporary",
                            f"temporary {stmt.target!r} reads itself at a horizontal "
                            "offset in its own defining statement",
                            stmt.loc,
                        )
                    )
                if (
                    decl.temporary
                    and read.offset.dk != 0
                    and min_nk is not None
                    and read.field != stmt.target
                ):
                    produced = _written_k_ranges(program, read.field)
                    if not all(
                        _k_read_covered(block.interval, read.offset.dk, produced, nk)
                        for nk in range(min_nk, min_nk + _PROBE_SPAN + 1)
                    ):
                        diags.append(
                            Diagnostic(
                                "uncovered-temporary-read",
                                f"temporary {read.field!r} read at dk={read.offset.dk} "
                                "outside every produced vertical range",
                                stmt.loc,
                            )
                        )


def _validate_driver(program, stencils, diags) -> None:
    def check_invokes(stmts) -> None:
        for stmt in stmts:
            if isinstance(stmt, DriverInvoke):
                target = stencils.get(stmt.stencil)
                if target is None:
                    diags.append(
                        Diagnostic(
                            "unknown-stencil",
                            f"driver invokes undeclared stencil {stmt.stencil!r}",
                            stmt.loc,
                        )
                    )
                    continue
                for key in stmt.kwargs:
                    if key not in target.params:
                        diags.append(
                            Diagnostic(
                                "unknown-parameter",
                                f"stencil {stmt.stencil!r} has no parameter {key!r}",
                                stmt.loc,
                            )
                        )
                for param in target.params:
                    if param not in stmt.kwargs and param not in program.const_map():
                        diags.append(
                            Diagnostic(
                                "missing-parameter",
                                f"parameter {param!r} of {stmt.stencil!r} is not bound "
                                "at this call and is not a program constant",
                                stmt.loc,
                            )
                        )
            elif isinstance(stmt, DriverIf):
                check_invokes(stmt.then)
                check_invokes(stmt.orelse)
            elif isinstance(stmt, DriverLoop):
                check_invokes(stmt.body)

    check_invokes(program.driver)

    try:
        resolve_driver(program)
    except DriverResolutionError as err:
        category = (
            "non-constant-trip-count"
            if "trip count" in err.message
            else "unresolvable-control-flow"
        )
        diags.append(Diagnostic(category, err.message, err.loc or UNKNOWN_LOC))
