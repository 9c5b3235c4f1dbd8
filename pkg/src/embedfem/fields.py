"""Named multidimensional arrays over a generic scalar, workset-local storage.

A ``Field`` owns one storage object (ndarray, ``Dual``, or ``PCE``) whose
leading axes follow the field layout; kernels read and write whole fields at
once so the per-element work stays vectorized. A ``FieldArena`` allocates the
buffers for one evaluator graph once per workset size and hands out handles,
keeping the assembly hot loop free of repeated structural allocation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scalars as sc

#: extent names a layout may be built from
DIMENSION_NAMES = ("elem", "node", "qp", "eq", "dim")


@dataclass(frozen=True)
class Layout:
    """Ordered extents of a field, row-major (last index fastest)."""

    extents: tuple

    def __post_init__(self):
        if any(e < 1 for e in self.extents):
            raise ValueError(f"all extents must be >= 1, got {self.extents}")

    @property
    def size(self):
        return int(np.prod(self.extents, dtype=np.int64)) if self.extents else 1

    def linear_index(self, multi_index):
        """Row-major linearization of a multi-index, O(1)."""
        if len(multi_index) != len(self.extents):
            raise IndexError(
                f"expected {len(self.extents)} indices, got {len(multi_index)}")
        offset = 0
        for i, (idx, ext) in enumerate(zip(multi_index, self.extents)):
            if not 0 <= idx < ext:
                raise IndexError(f"index {idx} out of range for extent {ext} (axis {i})")
            offset = offset * ext + idx
        return offset


def resolve_layout(dims, dim_sizes):
    """Turn symbolic dimension names (or literal ints) into a Layout."""
    extents = []
    for d in dims:
        if isinstance(d, str):
            if d not in dim_sizes:
                raise KeyError(f"unknown dimension name {d!r}")
            extents.append(int(dim_sizes[d]))
        else:
            extents.append(int(d))
    return Layout(tuple(extents))


class Field:
    """A named array of generic scalars with a fixed layout.

    ``data`` is the storage object; its value shape equals ``layout.extents``.
    ``assign``/``accumulate`` copy results into the preallocated storage so the
    buffers survive graph re-execution.
    """

    __slots__ = ("name", "layout", "data")

    def __init__(self, name, layout, data):
        self.name = name
        self.layout = layout
        self.data = data

    def fill(self, c):
        """Set every entry to the scalar promotion of the real constant c."""
        sc.fill_zero(self.data)
        if c != 0.0:
            sc.add_into(self.data, c)

    def assign(self, value):
        sc.copy_into(self.data, value)

    def accumulate(self, value):
        sc.add_into(self.data, value)

    def zero(self):
        sc.fill_zero(self.data)

    def __getitem__(self, idx):
        if __debug__:
            self._check_bounds(idx)
        return self.data[idx]

    def __setitem__(self, idx, value):
        if __debug__:
            self._check_bounds(idx)
        entry = self.data[idx]
        if isinstance(entry, (sc.Dual, sc.PCE)):
            sc.copy_into(entry, value)
        else:
            if isinstance(value, (sc.Dual, sc.PCE)):
                raise TypeError(
                    "assigning embedded scalars into plain storage requires "
                    "strip_derivatives(...)")
            self.data[idx] = value

    def _check_bounds(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        pos = 0
        for i in idx:
            if i is None or isinstance(i, slice):
                pos += i is not None
                continue
            if isinstance(i, (int, np.integer)):
                if not -self.layout.extents[pos] <= i < self.layout.extents[pos]:
                    raise IndexError(
                        f"index {i} out of bounds for extent "
                        f"{self.layout.extents[pos]} of field {self.name!r}")
            pos += 1

    def __repr__(self):
        return f"Field({self.name!r}, extents={self.layout.extents})"


def make_storage(kind, extents, deriv_width=None, basis=None):
    """Zero-initialized storage for one of the concrete scalar kinds.

    kind is one of "real", "dual", "pce", "nested". Dual kinds need the
    derivative width; spectral kinds need the shared basis tables.
    """
    if kind == "real":
        return np.zeros(extents)
    if kind == "dual":
        if deriv_width is None:
            raise ValueError("dual storage needs a derivative width")
        return sc.Dual(np.zeros(extents), np.zeros(extents + (deriv_width,)))
    if kind == "pce":
        if basis is None:
            raise ValueError("spectral storage needs basis tables")
        return sc.PCE(np.zeros(extents + (basis.size,)), basis)
    if kind == "nested":
        if deriv_width is None or basis is None:
            raise ValueError("nested storage needs a derivative width and basis tables")
        return sc.Dual(sc.PCE(np.zeros(extents + (basis.size,)), basis),
                       sc.PCE(np.zeros(extents + (deriv_width, basis.size)), basis))
    raise ValueError(f"unknown scalar kind {kind!r}")


class FieldArena:
    """Owns the field buffers for one graph instance at one workset size.

    Allocation happens on first request per field; later executions reuse the
    same buffers. ``allocations`` counts buffer creations so reuse is testable.
    """

    def __init__(self, dim_sizes, deriv_width=None, basis=None):
        self.dim_sizes = dict(dim_sizes)
        self.deriv_width = deriv_width
        self.basis = basis
        self.fields = {}
        self.allocations = 0

    def ensure(self, name, dims, kind):
        field = self.fields.get(name)
        if field is not None:
            return field
        layout = resolve_layout(dims, self.dim_sizes)
        data = make_storage(kind, layout.extents, self.deriv_width, self.basis)
        field = Field(name, layout, data)
        self.fields[name] = field
        self.allocations += 1
        return field

    def get(self, name):
        try:
            return self.fields[name]
        except KeyError:
            raise KeyError(f"field {name!r} is not allocated in this arena") from None

    def __contains__(self, name):
        return name in self.fields
