"""Canonical pretty-printer and JSON dump for program ASTs.

The printer is the inverse of the parser up to formatting: parsing its
output reproduces the same AST (source locations aside), which makes
``parse . print`` a fixed point on parsed programs.
"""

from __future__ import annotations

import json
from typing import Any

from stencilkit.frontend.ast import (
    AxisConstraint,
    BinOp,
    Call,
    Compare,
    ComputationBlock,
    Const,
    DriverAssign,
    DriverIf,
    DriverInvoke,
    DriverLoop,
    EdgeIndex,
    Expr,
    FieldDecl,
    FieldRead,
    HorizontalRegion,
    Interval,
    ScalarRef,
    Statement,
    StencilProgram,
    UnaryOp,
    VBound,
)

_INDENT = "    "

# precedence levels: higher binds tighter
_PREC_CMP = 0
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_UNARY = 3
_PREC_POW = 4
_PREC_ATOM = 5

_BINOP_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "**": _PREC_POW}


def _fmt_number(value: float) -> str:
    return repr(float(value))


def format_expr(expr: Expr, fields: dict[str, FieldDecl] | None = None) -> str:
    fields = fields or {}

    def prec(e: Expr) -> int:
        if isinstance(e, BinOp):
            return _BINOP_PREC[e.op]
        if isinstance(e, Compare):
            return _PREC_CMP
        if isinstance(e, UnaryOp):
            return _PREC_UNARY
        return _PREC_ATOM

    def emit(e: Expr, parent_prec: int, right_of_same: bool = False) -> str:
        p = prec(e)
        if isinstance(e, Const):
            text = _fmt_number(e.value)
        elif isinstance(e, ScalarRef):
            text = e.name
        elif isinstance(e, FieldRead):
            if e.offset.is_zero():
                text = e.field
            else:
                decl = fields.get(e.field)
                axes = decl.dims if decl is not None else ("I", "J", "K")
                comps = [str(e.offset.component(a)) for a in axes]
                text = f"{e.field}[{', '.join(comps)}]"
        elif isinstance(e, Call):
            text = f"{e.func}({', '.join(emit(a, _PREC_CMP) for a in e.args)})"
        elif isinstance(e, UnaryOp):
            text = f"-{emit(e.operand, _PREC_UNARY)}"
        elif isinstance(e, Compare):
            text = f"{emit(e.lhs, _PREC_ADD)} {e.op} {emit(e.rhs, _PREC_ADD)}"
        elif isinstance(e, BinOp):
            if e.op == "**":
                # right-associative; a negated exponent needs no parentheses
                lhs = emit(e.lhs, _PREC_POW + 1)
                if isinstance(e.rhs, UnaryOp):
                    rhs = f"-{emit(e.rhs.operand, _PREC_POW)}"
                else:
                    rhs = emit(e.rhs, _PREC_POW)
                text = f"{lhs} ** {rhs}"
            else:
                lhs = emit(e.lhs, p)
                rhs = emit(e.rhs, p + 1)
                text = f"{lhs} {e.op} {rhs}"
        else:  # pragma: no cover - exhaustive over node kinds
            raise TypeError(f"unknown expression node {e!r}")
        if p < parent_prec:
            return f"({text})"
        return text

    return emit(expr, _PREC_CMP)


def _fmt_vbound(b: VBound, is_end: bool) -> str:
    base = "K_start" if b.anchor == "start" else "K_end"
    if b.offset == 0:
        return base
    sign = "+" if b.offset > 0 else "-"
    return f"{base} {sign} {abs(b.offset)}"


def _fmt_interval(iv: Interval) -> str:
    if iv.is_full():
        return "..."
    return f"{_fmt_vbound(iv.start, False)}, {_fmt_vbound(iv.end, True)}"


def _fmt_edge(e: EdgeIndex, axis: str) -> str:
    base = f"{axis}_{e.anchor}"
    if e.offset == 0:
        return base
    sign = "+" if e.offset > 0 else "-"
    return f"{base} {sign} {abs(e.offset)}"


def _fmt_constraint(c: AxisConstraint, axis: str) -> str:
    if c.kind == "full":
        return ":"
    if c.kind == "point":
        return _fmt_edge(c.lo, axis)
    lo = _fmt_edge(c.lo, axis) if c.lo is not None else ""
    hi = _fmt_edge(c.hi, axis) if c.hi is not None else ""
    return f"{lo}:{hi}"


def _fmt_region(r: HorizontalRegion) -> str:
    return f"region[{_fmt_constraint(r.i, 'i')}, {_fmt_constraint(r.j, 'j')}]"


def print_program(program: StencilProgram) -> str:
    fields = program.field_map()
    out: list[str] = []

    for c in program.consts:
        out.append(f"const {c.name} = {_fmt_number(c.value)}")
    if program.consts:
        out.append("")

    for f in program.fields:
        tail = " temporary" if f.temporary else ""
        out.append(f"field {f.name} : {f.dtype} [{', '.join(f.dims)}]{tail}")
    if program.fields:
        out.append("")

    for stencil in program.stencils:
        uses = f" uses ({', '.join(stencil.params)})" if stencil.params else ""
        out.append(f"stencil {stencil.name}{uses}:")
        for block in stencil.blocks:
            out.append(
                f"{_INDENT}with computation({block.policy}), "
                f"interval({_fmt_interval(block.interval)}):"
            )
            _print_block_body(out, block, fields)
        out.append("")

    if program.driver:
        out.append("driver:")
        _print_driver(out, program.driver, 1, fields)

    return "\n".join(out).rstrip("\n") + "\n"


def _print_block_body(out: list[str], block: ComputationBlock, fields) -> None:
    idx = 0
    statements = block.statements
    while idx < len(statements):
        stmt = statements[idx]
        if stmt.region is None:
            out.append(f"{_INDENT * 2}{_fmt_stmt(stmt, fields)}")
            idx += 1
            continue
        region = stmt.region
        out.append(f"{_INDENT * 2}with horizontal({_fmt_region(region)}):")
        while idx < len(statements) and statements[idx].region == region:
            out.append(f"{_INDENT * 3}{_fmt_stmt(statements[idx], fields)}")
            idx += 1


def _fmt_stmt(stmt: Statement, fields) -> str:
    return f"{stmt.target} = {format_expr(stmt.expr, fields)}"


def _print_driver(out: list[str], stmts, depth: int, fields) -> None:
    pad = _INDENT * depth
    for stmt in stmts:
        if isinstance(stmt, DriverAssign):
            out.append(f"{pad}{stmt.name} = {format_expr(stmt.expr, fields)}")
        elif isinstance(stmt, DriverInvoke):
            args = ", ".join(f"{k} = {format_expr(v, fields)}" for k, v in stmt.kwargs.items())
            out.append(f"{pad}{stmt.stencil}({args})")
        elif isinstance(stmt, DriverIf):
            out.append(f"{pad}if {format_expr(stmt.cond, fields)}:")
            _print_driver(out, stmt.then, depth + 1, fields)
            if stmt.orelse:
                out.append(f"{pad}else:")
                _print_driver(out, stmt.orelse, depth + 1, fields)
        elif isinstance(stmt, DriverLoop):
            tail = " unroll" if stmt.unroll else ""
            out.append(f"{pad}for {stmt.var} in range({format_expr(stmt.count, fields)}){tail}:")
            _print_driver(out, stmt.body, depth + 1, fields)
        else:  # pragma: no cover
            raise TypeError(f"unknown driver statement {stmt!r}")


# ---------------------------------------------------------------------------
# JSON dump (CLI --dump-ast)
# ---------------------------------------------------------------------------


def _expr_to_json(e: Expr) -> Any:
    if isinstance(e, Const):
        return {"kind": "const", "value": e.value}
    if isinstance(e, ScalarRef):
        return {"kind": "scalar", "name": e.name}
    if isinstance(e, FieldRead):
        return {
            "kind": "read",
            "field": e.field,
            "offset": [e.offset.di, e.offset.dj, e.offset.dk],
        }
    if isinstance(e, UnaryOp):
        return {"kind": "neg", "operand": _expr_to_json(e.operand)}
    if isinstance(e, (BinOp, Compare)):
        return {
            "kind": "binop" if isinstance(e, BinOp) else "compare",
            "op": e.op,
            "lhs": _expr_to_json(e.lhs),
            "rhs": _expr_to_json(e.rhs),
        }
    if isinstance(e, Call):
        return {"kind": "call", "func": e.func, "args": [_expr_to_json(a) for a in e.args]}
    raise TypeError(f"unknown expression node {e!r}")  # pragma: no cover


def _region_to_json(r: HorizontalRegion | None) -> Any:
    if r is None:
        return None

    def conv(c: AxisConstraint):
        edge = lambda e: None if e is None else {"anchor": e.anchor, "offset": e.offset}
        return {"kind": c.kind, "lo": edge(c.lo), "hi": edge(c.hi)}

    return {"i": conv(r.i), "j": conv(r.j)}


def program_to_json(program: StencilProgram) -> str:
    doc = {
        "consts": [{"name": c.name, "value": c.value} for c in program.consts],
        "fields": [
            {
                "name": f.name,
                "dims": list(f.dims),
                "dtype": f.dtype,
                "temporary": f.temporary,
            }
            for f in program.fields
        ],
        "stencils": [
            {
                "name": s.name,
                "params": list(s.params),
                "blocks": [
                    {
                        "policy": b.policy,
                        "interval": {
                            "start": {"anchor": b.interval.start.anchor, "offset": b.interval.start.offset},
                            "end": {"anchor": b.interval.end.anchor, "offset": b.interval.end.offset},
                        },
                        "statements": [
                            {
                                "target": st.target,
                                "expr": _expr_to_json(st.expr),
                                "region": _region_to_json(st.region),
                            }
                            for st in b.statements
                        ],
                    }
                    for b in s.blocks
                ],
            }
            for s in program.stencils
        ],
        "driver": [_driver_to_json(d) for d in program.driver],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def _driver_to_json(stmt) -> Any:
    if isinstance(stmt, DriverAssign):
        return {"kind": "assign", "name": stmt.name, "expr": _expr_to_json(stmt.expr)}
    if isinstance(stmt, DriverInvoke):
        return {
            "kind": "invoke",
            "stencil": stmt.stencil,
            "kwargs": {k: _expr_to_json(v) for k, v in stmt.kwargs.items()},
        }
    if isinstance(stmt, DriverIf):
        return {
            "kind": "if",
            "cond": _expr_to_json(stmt.cond),
            "then": [_driver_to_json(s) for s in stmt.then],
            "else": [_driver_to_json(s) for s in stmt.orelse],
        }
    if isinstance(stmt, DriverLoop):
        return {
            "kind": "for",
            "var": stmt.var,
            "count": _expr_to_json(stmt.count),
            "unroll": stmt.unroll,
            "body": [_driver_to_json(s) for s in stmt.body],
        }
    raise TypeError(f"unknown driver statement {stmt!r}")  # pragma: no cover
