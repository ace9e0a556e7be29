"""Parser for the textual stencil language (``.stn`` files).

The language is line-oriented and indentation-structured:

    const dt2 = 0.5

    field vel  : float64 [I, J, K]
    field flux : float64 [I, J, K]

    stencil edge_flux uses (dt2):
        with computation(PARALLEL), interval(...):
            flux = dt2 * (vel - vel[-1, 0, 0])
            with horizontal(region[:, j_start]):
                flux = dt2 * vel

    driver:
        edge_flux()

Offsets index a field's declared axes positionally in I, J, K order; a bare
name reads at the iteration point. Interval bounds accept plain integers
(non-negative counts from ``K_start``, negative from ``K_end``), ``None``
(meaning ``K_end``), or explicit ``K_start + c`` / ``K_end + c`` forms.
"""

from __future__ import annotations

import re

from stencilkit.frontend.ast import (
    AXES,
    BUILTINS,
    DTYPES,
    POLICIES,
    AxisConstraint,
    BinOp,
    Call,
    Compare,
    ComputationBlock,
    Const,
    ConstDecl,
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
    Loc,
    Offset,
    ParseError,
    ScalarRef,
    Statement,
    StencilDef,
    StencilProgram,
    UnaryOp,
    VBound,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|<=|>=|==|!=|[-+*/<>=():,\[\].])
  | (?P<ws>\s+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "loc")

    def __init__(self, kind: str, text: str, loc: Loc):
        self.kind = kind
        self.text = text
        self.loc = loc

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Token({self.kind!r}, {self.text!r})"


class _Line:
    __slots__ = ("indent", "tokens", "loc")

    def __init__(self, indent: int, tokens: list[_Token], loc: Loc):
        self.indent = indent
        self.tokens = tokens
        self.loc = loc


def _tokenize_line(text: str, lineno: int) -> list[_Token]:
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        loc = Loc(lineno, m.start() + 1)
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", loc)
        tokens.append(_Token(kind, m.group(), loc))
    return tokens


def _scan(text: str) -> list[_Line]:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        stripped = body.lstrip(" ")
        if "\t" in body[: len(body) - len(stripped)]:
            raise ParseError("tab indentation is not supported", Loc(lineno, 1))
        indent = len(body) - len(stripped)
        tokens = _tokenize_line(stripped, lineno)
        for t in tokens:
            object.__setattr__(t, "loc", Loc(lineno, t.loc.col + indent))
        lines.append(_Line(indent, tokens, Loc(lineno, indent + 1)))
    return lines


class _TokenStream:
    """Cursor over one line's tokens."""

    def __init__(self, line: _Line):
        self.tokens = line.tokens
        self.pos = 0
        self.line_loc = line.loc

    @property
    def loc(self) -> Loc:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos].loc
        if self.tokens:
            last = self.tokens[-1].loc
            return Loc(last.line, last.col + len(self.tokens[-1].text))
        return self.line_loc

    def peek(self, offset: int = 0) -> _Token | None:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text

    def at_name(self, text: str | None = None) -> bool:
        t = self.peek()
        if t is None or t.kind != "name":
            return False
        return text is None or t.text == text

    def next(self) -> _Token:
        if self.pos >= len(self.tokens):
            raise ParseError("unexpected end of line", self.loc)
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, text: str) -> _Token:
        t = self.peek()
        if t is None or t.text != text:
            found = t.text if t else "end of line"
            raise ParseError(f"expected {text!r}, found {found!r}", self.loc)
        return self.next()

    def expect_name(self) -> _Token:
        t = self.peek()
        if t is None or t.kind != "name":
            found = t.text if t else "end of line"
            raise ParseError(f"expected identifier, found {found!r}", self.loc)
        return self.next()

    def expect_end(self) -> None:
        if self.pos != len(self.tokens):
            raise ParseError(f"trailing input {self.peek().text!r}", self.loc)


# ---------------------------------------------------------------------------
# Expression parsing (shared by stencil statements and driver expressions)
# ---------------------------------------------------------------------------

_CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")


def _parse_int(ts: _TokenStream) -> int:
    sign = 1
    if ts.at("-"):
        ts.next()
        sign = -1
    elif ts.at("+"):
        ts.next()
    t = ts.next()
    if t.kind != "num" or any(c in t.text for c in ".eE"):
        raise ParseError(f"expected integer, found {t.text!r}", t.loc)
    return sign * int(t.text)


def _parse_expr(ts: _TokenStream) -> Expr:
    expr = _parse_sum(ts)
    t = ts.peek()
    if t is not None and t.text in _CMP_OPS:
        op = ts.next().text
        rhs = _parse_sum(ts)
        return Compare(op, expr, rhs)
    return expr


def _parse_sum(ts: _TokenStream) -> Expr:
    expr = _parse_term(ts)
    while ts.at("+") or ts.at("-"):
        op = ts.next().text
        expr = BinOp(op, expr, _parse_term(ts))
    return expr


def _parse_term(ts: _TokenStream) -> Expr:
    expr = _parse_unary(ts)
    while ts.at("*") or ts.at("/"):
        op = ts.next().text
        expr = BinOp(op, expr, _parse_unary(ts))
    return expr


def _parse_unary(ts: _TokenStream) -> Expr:
    if ts.at("-"):
        ts.next()
        return UnaryOp("-", _parse_unary(ts))
    return _parse_power(ts)


def _parse_power(ts: _TokenStream) -> Expr:
    base = _parse_atom(ts)
    if ts.at("**"):
        ts.next()
        # right-associative; unary minus binds tighter on the exponent side
        if ts.at("-"):
            ts.next()
            return BinOp("**", base, UnaryOp("-", _parse_power(ts)))
        return BinOp("**", base, _parse_power(ts))
    return base


def _parse_atom(ts: _TokenStream) -> Expr:
    t = ts.peek()
    if t is None:
        raise ParseError("expected expression", ts.loc)
    if t.text == "(":
        ts.next()
        inner = _parse_expr(ts)
        ts.expect(")")
        return inner
    if t.kind == "num":
        ts.next()
        return Const(float(t.text))
    if t.kind == "name":
        name = ts.next().text
        if ts.at("(") and name in BUILTINS:
            ts.next()
            args = [_parse_expr(ts)]
            while ts.at(","):
                ts.next()
                args.append(_parse_expr(ts))
            ts.expect(")")
            if len(args) != BUILTINS[name]:
                raise ParseError(
                    f"{name} takes {BUILTINS[name]} argument(s), got {len(args)}", t.loc
                )
            return Call(name, tuple(args))
        if ts.at("("):
            raise ParseError(f"unknown builtin function {name!r}", t.loc)
        if ts.at("["):
            ts.next()
            comps = [_parse_int(ts)]
            while ts.at(","):
                ts.next()
                comps.append(_parse_int(ts))
            ts.expect("]")
            if len(comps) > 3:
                raise ParseError("at most 3 offset components", t.loc)
            return FieldRead(name, _positional_offset(comps), arity=len(comps))
        return ScalarRef(name)
    raise ParseError(f"unexpected token {t.text!r} in expression", t.loc)


def _positional_offset(comps: list[int]) -> Offset:
    """Offsets are stored positionally onto I, J, K (the common 3D case);
    ``_remap_offsets`` re-targets them onto the declared axes of lower-rank
    fields once the field table is known."""
    padded = comps + [0] * (3 - len(comps))
    return Offset(padded[0], padded[1], padded[2])


# ---------------------------------------------------------------------------
# Block-structure parsing
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, lines: list[_Line]):
        self.lines = lines
        self.pos = 0

    def peek_line(self) -> _Line | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def next_line(self) -> _Line:
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def body_lines(self, parent_indent: int, loc: Loc) -> int:
        """Return the indent level of a block body, or raise if missing."""
        line = self.peek_line()
        if line is None or line.indent <= parent_indent:
            raise ParseError("expected an indented block", loc)
        return line.indent

    # -- top level ---------------------------------------------------------

    def parse_program(self) -> StencilProgram:
        consts: list[ConstDecl] = []
        fields: list[FieldDecl] = []
        stencils: list[StencilDef] = []
        driver: list[DriverStmt] = []
        seen_driver = False
        while (line := self.peek_line()) is not None:
            if line.indent != 0:
                raise ParseError("unexpected indentation at top level", line.loc)
            head = line.tokens[0]
            if head.text == "const":
                consts.append(self.parse_const())
            elif head.text == "field":
                fields.append(self.parse_field())
            elif head.text == "stencil":
                stencils.append(self.parse_stencil())
            elif head.text == "driver":
                if seen_driver:
                    raise ParseError("duplicate driver section", head.loc)
                seen_driver = True
                driver = self.parse_driver()
            else:
                raise ParseError(
                    f"expected const, field, stencil or driver, found {head.text!r}",
                    head.loc,
                )
        return StencilProgram(consts=consts, fields=fields, stencils=stencils, driver=driver)

    def parse_const(self) -> ConstDecl:
        line = self.next_line()
        ts = _TokenStream(line)
        ts.expect("const")
        name = ts.expect_name()
        ts.expect("=")
        sign = 1.0
        if ts.at("-"):
            ts.next()
            sign = -1.0
        num = ts.next()
        if num.kind != "num":
            raise ParseError("const value must be a numeric literal", num.loc)
        ts.expect_end()
        return ConstDecl(name.text, sign * float(num.text), name.loc)

    def parse_field(self) -> FieldDecl:
        line = self.next_line()
        ts = _TokenStream(line)
        ts.expect("field")
        name = ts.expect_name()
        ts.expect(":")
        dtype = ts.expect_name()
        if dtype.text not in DTYPES:
            raise ParseError(f"unknown element type {dtype.text!r}", dtype.loc)
        ts.expect("[")
        dims = [ts.expect_name()]
        while ts.at(","):
            ts.next()
            dims.append(ts.expect_name())
        ts.expect("]")
        for d in dims:
            if d.text not in AXES:
                raise ParseError(f"unknown axis {d.text!r}", d.loc)
        ordered = tuple(a for a in AXES if a in [d.text for d in dims])
        if len(ordered) != len(dims):
            raise ParseError("duplicate axis in field declaration", name.loc)
        temporary = False
        if ts.at_name("temporary"):
            ts.next()
            temporary = True
        ts.expect_end()
        return FieldDecl(name.text, ordered, dtype.text, temporary, name.loc)

    # -- stencils ----------------------------------------------------------

    def parse_stencil(self) -> StencilDef:
        line = self.next_line()
        ts = _TokenStream(line)
        ts.expect("stencil")
        name = ts.expect_name()
        params: list[str] = []
        if ts.at_name("uses"):
            ts.next()
            ts.expect("(")
            params.append(ts.expect_name().text)
            while ts.at(","):
                ts.next()
                params.append(ts.expect_name().text)
            ts.expect(")")
        ts.expect(":")
        ts.expect_end()
        indent = self.body_lines(line.indent, name.loc)
        blocks = []
        while (nxt := self.peek_line()) is not None and nxt.indent >= indent:
            if nxt.indent > indent:
                raise ParseError("unexpected indentation", nxt.loc)
            blocks.append(self.parse_block(indent))
        if not blocks:
            raise ParseError("empty computation", name.loc)
        return StencilDef(name.text, tuple(params), blocks, name.loc)

    def parse_block(self, indent: int) -> ComputationBlock:
        line = self.next_line()
        ts = _TokenStream(line)
        loc = ts.loc
        ts.expect("with")
        ts.expect("computation")
        ts.expect("(")
        policy = ts.expect_name()
        if policy.text not in POLICIES:
            raise ParseError(f"unknown computation policy {policy.text!r}", policy.loc)
        ts.expect(")")
        ts.expect(",")
        ts.expect("interval")
        ts.expect("(")
        interval = self.parse_interval(ts)
        ts.expect(")")
        ts.expect(":")
        ts.expect_end()
        body_indent = self.body_lines(indent, loc)
        statements = self.parse_statements(body_indent)
        if not statements:
            raise ParseError("empty computation", loc)
        return ComputationBlock(policy.text, interval, statements, loc)

    def parse_interval(self, ts: _TokenStream) -> Interval:
        if ts.at("."):
            ts.expect(".")
            ts.expect(".")
            ts.expect(".")
            return Interval()
        start = self.parse_vbound(ts, is_end=False)
        ts.expect(",")
        end = self.parse_vbound(ts, is_end=True)
        return Interval(start, end)

    def parse_vbound(self, ts: _TokenStream, is_end: bool) -> VBound:
        t = ts.peek()
        if t is None:
            raise ParseError("expected interval bound", ts.loc)
        if t.kind == "name" and t.text == "None":
            ts.next()
            if not is_end:
                raise ParseError("None is only valid as an interval end", t.loc)
            return VBound("end", 0)
        if t.kind == "name" and t.text in ("K_start", "K_end"):
            anchor = "start" if ts.next().text == "K_start" else "end"
            offset = 0
            if ts.at("+") or ts.at("-"):
                offset = _parse_int(ts)
            return VBound(anchor, offset)
        c = _parse_int(ts)
        # GT4Py-style shorthand: non-negative counts from the domain start,
        # negative from the end.
        if c >= 0:
            return VBound("start", c)
        return VBound("end", c)

    def parse_statements(self, indent: int) -> list[Statement]:
        statements: list[Statement] = []
        while (line := self.peek_line()) is not None and line.indent >= indent:
            if line.indent > indent:
                raise ParseError("unexpected indentation", line.loc)
            if line.tokens[0].text == "with":
                statements.extend(self.parse_region_block(indent))
            else:
                statements.append(self.parse_assignment(self.next_line(), None))
        return statements

    def parse_region_block(self, indent: int) -> list[Statement]:
        line = self.next_line()
        ts = _TokenStream(line)
        loc = ts.loc
        ts.expect("with")
        ts.expect("horizontal")
        ts.expect("(")
        ts.expect("region")
        ts.expect("[")
        ci = self.parse_axis_constraint(ts, "i")
        ts.expect(",")
        cj = self.parse_axis_constraint(ts, "j")
        ts.expect("]")
        ts.expect(")")
        ts.expect(":")
        ts.expect_end()
        region = HorizontalRegion(ci, cj)
        body_indent = self.body_lines(indent, loc)
        statements = []
        while (nxt := self.peek_line()) is not None and nxt.indent >= body_indent:
            if nxt.indent > body_indent:
                raise ParseError("unexpected indentation", nxt.loc)
            if nxt.tokens[0].text == "with":
                raise ParseError("regions cannot be nested", nxt.loc)
            statements.append(self.parse_assignment(self.next_line(), region))
        if not statements:
            raise ParseError("empty region block", loc)
        return statements

    def parse_axis_constraint(self, ts: _TokenStream, axis: str) -> AxisConstraint:
        if ts.at(":"):
            nxt = ts.peek(1)
            if nxt is None or nxt.text in (",", "]"):
                ts.next()
                return AxisConstraint("full")
        lo = None
        if not ts.at(":"):
            lo = self.parse_edge_index(ts, axis)
            if not ts.at(":"):
                return AxisConstraint("point", lo)
        ts.expect(":")
        hi = None
        if not (ts.at(",") or ts.at("]")):
            hi = self.parse_edge_index(ts, axis)
        return AxisConstraint("range", lo, hi)

    def parse_edge_index(self, ts: _TokenStream, axis: str) -> EdgeIndex:
        t = ts.expect_name()
        names = {f"{axis}_start": "start", f"{axis}_end": "end"}
        if t.text not in names:
            raise ParseError(
                f"expected {axis}_start or {axis}_end in region constraint, found {t.text!r}",
                t.loc,
            )
        offset = 0
        if ts.at("+") or ts.at("-"):
            offset = _parse_int(ts)
        return EdgeIndex(names[t.text], offset)

    def parse_assignment(self, line: _Line, region: HorizontalRegion | None) -> Statement:
        ts = _TokenStream(line)
        target = ts.expect_name()
        ts.expect("=")
        expr = _parse_expr(ts)
        ts.expect_end()
        return Statement(target.text, expr, region, target.loc)

    # -- driver ------------------------------------------------------------

    def parse_driver(self) -> list:
        line = self.next_line()
        ts = _TokenStream(line)
        ts.expect("driver")
        ts.expect(":")
        ts.expect_end()
        indent = self.body_lines(0, line.loc)
        return self.parse_driver_body(indent)

    def parse_driver_body(self, indent: int) -> list:
        stmts = []
        while (line := self.peek_line()) is not None and line.indent >= indent:
            if line.indent > indent:
                raise ParseError("unexpected indentation", line.loc)
            head = line.tokens[0]
            if head.text == "if":
                stmts.append(self.parse_driver_if(indent))
            elif head.text == "for":
                stmts.append(self.parse_driver_loop(indent))
            else:
                stmts.append(self.parse_driver_simple(self.next_line()))
        return stmts

    def parse_driver_simple(self, line: _Line):
        ts = _TokenStream(line)
        name = ts.expect_name()
        if ts.at("("):
            ts.next()
            kwargs: dict[str, Expr] = {}
            if not ts.at(")"):
                while True:
                    key = ts.expect_name()
                    ts.expect("=")
                    if key.text in kwargs:
                        raise ParseError(f"duplicate argument {key.text!r}", key.loc)
                    kwargs[key.text] = _parse_expr(ts)
                    if ts.at(","):
                        ts.next()
                        continue
                    break
            ts.expect(")")
            ts.expect_end()
            return DriverInvoke(name.text, kwargs, name.loc)
        ts.expect("=")
        expr = _parse_expr(ts)
        ts.expect_end()
        return DriverAssign(name.text, expr, name.loc)

    def parse_driver_if(self, indent: int):
        line = self.next_line()
        ts = _TokenStream(line)
        loc = ts.loc
        ts.expect("if")
        cond = _parse_expr(ts)
        ts.expect(":")
        ts.expect_end()
        body_indent = self.body_lines(indent, loc)
        then = self.parse_driver_body(body_indent)
        orelse: list = []
        nxt = self.peek_line()
        if nxt is not None and nxt.indent == indent and nxt.tokens[0].text == "else":
            eline = self.next_line()
            ets = _TokenStream(eline)
            ets.expect("else")
            ets.expect(":")
            ets.expect_end()
            else_indent = self.body_lines(indent, eline.loc)
            orelse = self.parse_driver_body(else_indent)
        return DriverIf(cond, then, orelse, loc)

    def parse_driver_loop(self, indent: int):
        line = self.next_line()
        ts = _TokenStream(line)
        loc = ts.loc
        ts.expect("for")
        var = ts.expect_name()
        if not ts.at_name("in"):
            raise ParseError("expected 'in'", ts.loc)
        ts.next()
        if not ts.at_name("range"):
            raise ParseError("expected 'range'", ts.loc)
        ts.next()
        ts.expect("(")
        count = _parse_expr(ts)
        ts.expect(")")
        unroll = False
        if ts.at_name("unroll"):
            ts.next()
            unroll = True
        ts.expect(":")
        ts.expect_end()
        body_indent = self.body_lines(indent, loc)
        body = self.parse_driver_body(body_indent)
        return DriverLoop(var.text, count, body, unroll, loc)


def _remap_offsets(program: StencilProgram) -> None:
    """Re-target positional offsets onto the declared axes of 2D/1D fields.

    A read like ``q2d[1, -1]`` of an (I, J) field keeps its positional
    meaning, while ``col[2]`` of a K-only field moves its single component
    onto the K axis. Arity mismatches are left as-is for validation to flag.
    """
    fields = program.field_map()

    def fix(expr: Expr) -> Expr:
        if isinstance(expr, ScalarRef) and expr.name in fields:
            return FieldRead(expr.name)
        if isinstance(expr, FieldRead):
            decl = fields.get(expr.field)
            if decl is None or decl.rank == 3 or expr.arity != decl.rank:
                return expr
            raw = (expr.offset.di, expr.offset.dj, expr.offset.dk)[: expr.arity]
            comp = {"I": 0, "J": 0, "K": 0}
            for axis, value in zip(decl.dims, raw):
                comp[axis] = value
            return FieldRead(
                expr.field, Offset(comp["I"], comp["J"], comp["K"]), arity=expr.arity
            )
        if isinstance(expr, BinOp):
            return BinOp(expr.op, fix(expr.lhs), fix(expr.rhs))
        if isinstance(expr, Compare):
            return Compare(expr.op, fix(expr.lhs), fix(expr.rhs))
        if isinstance(expr, UnaryOp):
            return UnaryOp(expr.op, fix(expr.operand))
        if isinstance(expr, Call):
            return Call(expr.func, tuple(fix(a) for a in expr.args))
        return expr

    for stencil in program.stencils:
        for block in stencil.blocks:
            for stmt in block.statements:
                stmt.expr = fix(stmt.expr)


def parse_program(text: str) -> StencilProgram:
    """Parse program source into an AST; raises ParseError on bad syntax."""
    program = _Parser(_scan(text)).parse_program()
    _remap_offsets(program)
    return program
