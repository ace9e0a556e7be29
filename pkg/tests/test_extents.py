import numpy as np
import pytest

from stencilkit.frontend import infer_extents, parse_program, validate
from stencilkit.frontend.extents import compute_requirements
from stencilkit.executor.reference import AccessRecorder, run_reference


def _oracle_extents(program, domain, inputs=None):
    """Brute-force touched-cell oracle: instrument reference execution and
    measure per-field reach beyond the interior."""
    reqs = compute_requirements(program)
    fields = program.field_map()
    ni, nj, nk = domain
    sizes = {"I": ni, "J": nj, "K": nk}
    shapes = {}
    halos = {}
    for decl in program.fields:
        ext = reqs.extent[decl.name]
        shape = []
        halo = []
        for axis in decl.dims:
            lo, hi = ext.component(axis)
            shape.append(-lo + sizes[axis] + hi)
            halo.append((-lo, hi))
        shapes[decl.name] = tuple(shape)
        halos[decl.name] = halo
    rng = np.random.default_rng(7)
    if inputs is None:
        inputs = {
            decl.name: rng.uniform(0.1, 10.0, shapes[decl.name])
            for decl in program.fields
            if not decl.temporary
        }
    recorder = AccessRecorder(shapes=shapes)
    run_reference(program, inputs, domain, recorder=recorder)
    reach = recorder.union_reach(halos)
    out = {}
    for decl in program.fields:
        axes = reach.get(decl.name)
        per_axis = {"I": (0, 0), "J": (0, 0), "K": (0, 0)}
        if axes is not None:
            for axis, r in zip(decl.dims, axes):
                per_axis[axis] = r
        out[decl.name] = per_axis
    return out


def _assert_matches_oracle(src, domain=(12, 12, 6)):
    program = parse_program(src)
    assert validate(program) == []
    inferred = infer_extents(program)
    oracle = _oracle_extents(program, domain)
    for name, ext in inferred.items():
        for axis in ("I", "J", "K"):
            assert ext.component(axis) == oracle[name][axis], (
                f"{name} axis {axis}: inferred {ext.component(axis)} "
                f"oracle {oracle[name][axis]}"
            )


def test_symmetric_read_extent():
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
    ext = infer_extents(program)
    assert ext["inp"].i == (-1, 1)
    assert ext["inp"].j == (0, 0)
    assert ext["inp"].k == (0, 0)
    assert ext["out"].i == (0, 0)
    _assert_matches_oracle(src)


def test_copy_stencil_zero_extents():
    src = (
        "field inp : float64 [I, J, K]\n"
        "field out : float64 [I, J, K]\n"
        "stencil copy_field:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        out = inp\n"
        "driver:\n"
        "    copy_field()\n"
    )
    program = parse_program(src)
    for name, ext in infer_extents(program).items():
        assert ext.i == (0, 0) and ext.j == (0, 0) and ext.k == (0, 0)
    _assert_matches_oracle(src)


CHAIN = """\
field inp : float64 [I, J, K]
field tmp : float64 [I, J, K] temporary
field out : float64 [I, J, K]

stencil s1:
    with computation(PARALLEL), interval(...):
        tmp = inp[-1, 0, 0] + inp + inp[1, 0, 0]

stencil s2:
    with computation(PARALLEL), interval(...):
        out = tmp[0, -2, 0] + tmp[0, -1, 0] + tmp

driver:
    s1()
    s2()
"""


def test_transitive_extent_through_temporary():
    program = parse_program(CHAIN)
    assert validate(program) == []
    ext = infer_extents(program)
    # tmp is consumed at j in [-2, 0], so its compute domain extends that
    # far; computing it there pulls inp at i [-1, 1] over the shifted rows.
    assert ext["inp"].i == (-1, 1)
    assert ext["inp"].j == (-2, 0)
    assert ext["tmp"].j == (-2, 0)
    assert ext["out"].i == (0, 0)
    _assert_matches_oracle(CHAIN)


def test_vertical_offsets_interval_aware():
    # a read at dk=-1 inside interval(1, None) never leaves the interior
    src = (
        "field a : float64 [I, J, K]\n"
        "field b : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(FORWARD), interval(0, 1):\n"
        "        b = a\n"
        "    with computation(FORWARD), interval(1, None):\n"
        "        b = a[0, 0, -1] + b[0, 0, -1]\n"
        "driver:\n"
        "    s()\n"
    )
    program = parse_program(src)
    assert validate(program) == []
    ext = infer_extents(program)
    assert ext["a"].k == (0, 0)
    assert ext["b"].k == (0, 0)
    _assert_matches_oracle(src)

    # the same read over the full interval does need a vertical halo
    src2 = (
        "field a : float64 [I, J, K]\n"
        "field b : float64 [I, J, K]\n"
        "stencil s:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        b = a[0, 0, -1]\n"
        "driver:\n"
        "    s()\n"
    )
    program2 = parse_program(src2)
    assert infer_extents(program2)["a"].k == (-1, 0)
    _assert_matches_oracle(src2)


def test_region_statement_extent():
    src = (
        "const sw_mult = 2.0\n"
        "field q        : float64 [I, J, K]\n"
        "field q_corner : float64 [I, J, K]\n"
        "stencil corner_fix:\n"
        "    with computation(PARALLEL), interval(...):\n"
        "        with horizontal(region[i_start - 1, j_start - 1]):\n"
        "            q = sw_mult * q_corner[0, 1, 0]\n"
        "driver:\n"
        "    corner_fix()\n"
    )
    program = parse_program(src)
    assert validate(program) == []
    ext = infer_extents(program)
    # the write itself targets the halo corner; the read lands at (-1, 0)
    assert ext["q"].i == (-1, 0)
    assert ext["q"].j == (-1, 0)
    assert ext["q_corner"].i == (-1, 0)
    assert ext["q_corner"].j == (0, 0)
    _assert_matches_oracle(src)


@pytest.mark.slow
def test_random_two_stencil_chains_match_oracle():
    rng = np.random.default_rng(2024)
    for case in range(500):
        n_reads1 = rng.integers(1, 4)
        n_reads2 = rng.integers(1, 4)
        offs1 = [
            (int(rng.integers(-3, 4)), int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
            for _ in range(n_reads1)
        ]
        # temporary consumption: horizontal offsets only (vertical reads of
        # temporaries must stay within produced ranges)
        offs2 = [
            (int(rng.integers(-3, 4)), int(rng.integers(-3, 4)), 0)
            for _ in range(n_reads2)
        ]
        extra = (int(rng.integers(-3, 4)), int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
        reads1 = " + ".join(f"inp[{a}, {b}, {c}]" for a, b, c in offs1)
        reads2 = " + ".join(f"tmp[{a}, {b}, {c}]" for a, b, c in offs2)
        src = (
            "field inp : float64 [I, J, K]\n"
            "field aux : float64 [I, J, K]\n"
            "field tmp : float64 [I, J, K] temporary\n"
            "field out : float64 [I, J, K]\n"
            "stencil s1:\n"
            "    with computation(PARALLEL), interval(...):\n"
            f"        tmp = {reads1}\n"
            "stencil s2:\n"
            "    with computation(PARALLEL), interval(...):\n"
            f"        out = {reads2} + aux[{extra[0]}, {extra[1]}, {extra[2]}]\n"
            "driver:\n"
            "    s1()\n"
            "    s2()\n"
        )
        _assert_matches_oracle(src, domain=(16, 16, 8))
