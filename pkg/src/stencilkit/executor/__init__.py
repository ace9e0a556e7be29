"""Execution engines: reference interpreter, scheduled host executor,
timing harness, and the machine bandwidth probe."""

from stencilkit.executor.buffers import FieldBuffer, allocate_buffers, load_field, save_field
from stencilkit.executor.reference import AccessRecorder, run_reference, run_reference_graph
from stencilkit.executor.scheduled import (
    BenchmarkResult,
    TimingStats,
    benchmark,
    run_scheduled,
    timings_to_csv,
)
from stencilkit.executor.bandwidth import measure_bandwidth

__all__ = [
    "AccessRecorder",
    "BenchmarkResult",
    "FieldBuffer",
    "TimingStats",
    "allocate_buffers",
    "benchmark",
    "load_field",
    "measure_bandwidth",
    "run_reference",
    "run_reference_graph",
    "run_scheduled",
    "save_field",
    "timings_to_csv",
]
