"""stencilkit: a stencil DSL compiler and autotuning toolkit.

Programs written in a small declarative stencil language are lowered to a
stateful dataflow-graph IR with explicit per-stencil schedules, optimized by
local graph-rewriting transformations and transfer tuning, executed by a
schedule-faithful host executor, and analyzed with a memory-bandwidth-bound
performance model.
"""

__version__ = "0.1.0"

from stencilkit.frontend import infer_extents, parse_program, print_program, validate

__all__ = [
    "__version__",
    "parse_program",
    "print_program",
    "validate",
    "infer_extents",
]
