"""Field buffers: aligned raw storage with strided halo-aware views.

A FieldBuffer owns a flat element array whose base address is aligned to
``layout.alignment`` elements, so the leading pad puts the first interior
element of every unit-stride row on an alignment boundary. ``view`` exposes
the halo-inclusive logical array (axes in declared order, I unit-stride);
indexing ``interior_index + halo_lo`` addresses a cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import as_strided

from stencilkit.scheduling import Layout

_DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass
class FieldBuffer:
    name: str
    layout: Layout
    dtype: str
    raw: np.ndarray  # flat, element dtype, aligned base
    view: np.ndarray  # strided halo-inclusive window

    @property
    def itemsize(self) -> int:
        return self.view.dtype.itemsize

    def cell_slice(self, ranges: dict[str, tuple[int, int]]) -> tuple[slice, ...]:
        """Index tuple for interior-relative half-open per-axis ranges."""
        out = []
        for axis, halo in zip(self.layout.dims, self.layout.halo_lo):
            lo, hi = ranges[axis]
            out.append(slice(lo + halo, hi + halo))
        return tuple(out)

    def first_interior_address(self) -> int:
        return self.raw.ctypes.data + self.layout.origin() * self.itemsize


def _aligned_empty(total_elements: int, dtype: np.dtype, alignment_elems: int) -> np.ndarray:
    """Flat array whose base address is a multiple of alignment bytes."""
    itemsize = np.dtype(dtype).itemsize
    align_bytes = max(1, alignment_elems * itemsize)
    raw = np.empty(total_elements * itemsize + align_bytes, dtype=np.uint8)
    addr = raw.ctypes.data
    shift = (-addr) % align_bytes
    return raw[shift : shift + total_elements * itemsize].view(dtype)


def allocate_buffer(name: str, layout: Layout, dtype: str, fill: float = 0.0) -> FieldBuffer:
    np_dtype = np.dtype(_DTYPES[dtype])
    raw = _aligned_empty(layout.total_elements, np_dtype, layout.alignment)
    raw.fill(fill)
    view = as_strided(
        raw[layout.pre_pad :],
        shape=layout.shape,
        strides=tuple(s * np_dtype.itemsize for s in layout.strides),
    )
    return FieldBuffer(name=name, layout=layout, dtype=dtype, raw=raw, view=view)


def allocate_buffers(arrays, fill: float = 0.0) -> dict[str, FieldBuffer]:
    """Buffers for a graph's array catalog ({name: ArrayInfo})."""
    return {
        name: allocate_buffer(name, info.layout, info.dtype, fill)
        for name, info in arrays.items()
    }


# ---------------------------------------------------------------------------
# Field I/O: raw binary + JSON sidecar, and a small text format
# ---------------------------------------------------------------------------


def save_field(buf: FieldBuffer, path: str | Path, text: bool = False) -> None:
    """Write the halo-inclusive field content.

    Binary mode writes ``<path>`` (raw C-order elements of the view) plus a
    ``<path>.json`` sidecar describing shape, element type, and layout. Text
    mode writes one value per line after a header, for small cases.
    """
    path = Path(path)
    data = np.ascontiguousarray(buf.view)
    if text:
        with open(path, "w") as fh:
            fh.write(f"# field {buf.name} dtype {buf.dtype} shape {list(data.shape)}\n")
            for v in data.ravel():
                fh.write(f"{v!r}\n")
        return
    data.tofile(path)
    sidecar = {
        "field": buf.name,
        "dtype": buf.dtype,
        "shape": list(data.shape),
        "layout": buf.layout.to_json(),
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_field(path: str | Path) -> tuple[str, Layout, np.ndarray]:
    """Read a binary field written by :func:`save_field`."""
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        sidecar = json.load(fh)
    layout = Layout.from_json(sidecar["layout"])
    data = np.fromfile(path, dtype=_DTYPES[sidecar["dtype"]]).reshape(sidecar["shape"])
    return sidecar["field"], layout, data
