"""Frontend: parsing, validation, and analysis of stencil programs."""

from stencilkit.frontend.ast import (
    AXES,
    AxisConstraint,
    ComputationBlock,
    Diagnostic,
    EdgeIndex,
    Extent,
    FieldDecl,
    HorizontalRegion,
    Interval,
    Loc,
    Offset,
    ParseError,
    Statement,
    StencilDef,
    StencilProgram,
    VBound,
)
from stencilkit.frontend.extents import infer_extents
from stencilkit.frontend.parser import parse_program
from stencilkit.frontend.printer import print_program, program_to_json
from stencilkit.frontend.validate import validate

__all__ = [
    "AXES",
    "AxisConstraint",
    "ComputationBlock",
    "Diagnostic",
    "EdgeIndex",
    "Extent",
    "FieldDecl",
    "HorizontalRegion",
    "Interval",
    "Loc",
    "Offset",
    "ParseError",
    "Statement",
    "StencilDef",
    "StencilProgram",
    "VBound",
    "infer_extents",
    "parse_program",
    "print_program",
    "program_to_json",
    "validate",
]
