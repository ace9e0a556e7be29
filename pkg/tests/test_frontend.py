import pytest

from stencilkit.frontend import parse_program, print_program, validate
from stencilkit.frontend.ast import (
    AxisConstraint,
    BinOp,
    Call,
    Const,
    EdgeIndex,
    FieldRead,
    Interval,
    Offset,
    ParseError,
    ScalarRef,
    VBound,
)

EDGE_FLUX = """\
const dt2 = 0.5

field v    : float64 [I, J, K]
field vc   : float64 [I, J, K]
field cosa : float64 [I, J, K]
field sina : float64 [I, J, K]
field flux : float64 [I, J, K]

stencil edge_flux uses (dt2):
    with computation(PARALLEL), interval(...):
        flux = dt2 * (v - vc * cosa) / sina
        with horizontal(region[:, j_start]):
            flux = dt2 * v

driver:
    edge_flux()
"""


def test_parse_edge_flux_region_override():
    program = parse_program(EDGE_FLUX)
    (stencil,) = program.stencils
    (block,) = stencil.blocks
    assert block.policy == "PARALLEL"
    assert block.interval.is_full()
    assert len(block.statements) == 2
    first, second = block.statements
    assert first.region is None
    assert second.region is not None
    assert second.region.i == AxisConstraint("full")
    assert second.region.j == AxisConstraint("point", EdgeIndex("start", 0))
    # flux = dt2 * (v - vc * cosa) / sina
    expr = first.expr
    assert isinstance(expr, BinOp) and expr.op == "/"
    assert expr.lhs == BinOp(
        "*",
        ScalarRef("dt2"),
        BinOp("-", FieldRead("v"), BinOp("*", FieldRead("vc"), FieldRead("cosa"))),
    )


def test_parse_empty_stencil_is_error():
    src = "field a : float64 [I, J, K]\nstencil s:\ndriver:\n    s()\n"
    with pytest.raises(ParseError, match="indented block|empty computation"):
        parse_program(src)

    src2 = (
        "field a : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "driver:\n"
        "    s()\n"
    )
    with pytest.raises(ParseError, match="empty computation|indented block"):
        parse_program(src2)


def test_parse_symmetric_offsets():
    src = (
        "field inp : float64 [I, J, K]\n"
        "field out : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        out = inp[-1, 0, 0] + inp[1, 0, 0]\n"
        "driver:\n"
        "    s()\n"
    )
    program = parse_program(src)
    stmt = program.stencils[0].blocks[0].statements[0]
    assert stmt.expr == BinOp(
        "+",
        FieldRead("inp", Offset(di=-1)),
        FieldRead("inp", Offset(di=1)),
    )


def test_parse_interval_forms():
    src = (
        "field a : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(FORWARD), interval(0, 1):\n"
        "        a = 1.0\n"
        "    with computation(FORWARD), interval(K_start + 1, K_end):\n"
        "        a = 2.0\n"
        "    with computation(BACKWARD), interval(1, -1):\n"
        "        a = 3.0\n"
        "    with computation(FORWARD), interval(2, None):\n"
        "        a = 4.0\n"
        "driver:\n"
        "    s()\n"
    )
    blocks = parse_program(src).stencils[0].blocks
    assert blocks[0].interval == Interval(VBound("start", 0), VBound("start", 1))
    assert blocks[1].interval == Interval(VBound("start", 1), VBound("end", 0))
    assert blocks[2].interval == Interval(VBound("start", 1), VBound("end", -1))
    assert blocks[3].interval == Interval(VBound("start", 2), VBound("end", 0))


def test_parse_2d_field_offset_remap():
    src = (
        "field q2  : float64 [I, J]\n"
        "field col : float64 [K]\n"
        "field out : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        out = q2[1, -2] + col[1]\n"
        "driver:\n"
        "    s()\n"
    )
    stmt = parse_program(src).stencils[0].blocks[0].statements[0]
    q2_read, col_read = stmt.expr.lhs, stmt.expr.rhs
    assert q2_read.offset == Offset(di=1, dj=-2, dk=0)
    assert col_read.offset == Offset(di=0, dj=0, dk=1)


def test_parse_pow_and_builtins():
    src = (
        "const dt = 0.2\n"
        "field vort  : float64 [I, J, K]\n"
        "field delpc : float64 [I, J, K]\n"
        "stencil smag:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        vort = dt * (delpc ** 2.0 + vort ** 2.0) ** 0.5\n"
        "        delpc = max(min(vort, 10.0), sqrt(abs(delpc)))\n"
        "        vort = select(vort > 1.0, vort, delpc ** -3.0)\n"
        "driver:\n"
        "    smag()\n"
    )
    program = parse_program(src)
    stmts = program.stencils[0].blocks[0].statements
    pow_expr = stmts[0].expr
    assert isinstance(pow_expr.rhs, BinOp) and pow_expr.rhs.op == "**"
    assert pow_expr.rhs.rhs == Const(0.5)
    assert isinstance(stmts[1].expr, Call) and stmts[1].expr.func == "max"
    sel = stmts[2].expr
    assert sel.func == "select" and len(sel.args) == 3


def test_unknown_builtin_is_parse_error():
    src = (
        "field a : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        a = foo(a)\n"
        "driver:\n"
        "    s()\n"
    )
    with pytest.raises(ParseError, match="unknown builtin"):
        parse_program(src)


def test_parse_error_carries_location():
    with pytest.raises(ParseError) as err:
        parse_program("field a : float64 [I J]\n")
    assert err.value.loc.line == 1


DRIVER_FULL = """\
const n_split = 2
const do_corners = 1

field a : float64 [I, J, K]
field b : float64 [I, J, K]

stencil sa uses (w):
    with computation(PARALLEL), interval(...):
        a = w * b

stencil sb:
    with computation(PARALLEL), interval(...):
        b = a + 1.0

driver:
    x = 5
    y = x + 1
    if do_corners:
        sa(w = y)
    else:
        sb()
    for t in range(n_split) unroll:
        sb()
"""


def test_parse_print_parse_fixed_point():
    for src in (EDGE_FLUX, DRIVER_FULL):
        ast1 = parse_program(src)
        text = print_program(ast1)
        ast2 = parse_program(text)
        assert ast2 == ast1
        assert print_program(ast2) == text


def test_driver_structure():
    program = parse_program(DRIVER_FULL)
    assert [type(s).__name__ for s in program.driver] == [
        "DriverAssign",
        "DriverAssign",
        "DriverIf",
        "DriverLoop",
    ]
    loop = program.driver[-1]
    assert loop.unroll
    assert validate(program) == []
