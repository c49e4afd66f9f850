"""Dense tensor storage, network contraction, unfoldings and spectra.

All values are 64-bit floats stored row-major (last index fastest).
Tensors are immutable after construction, so every operation here is a
pure function and safe to call concurrently.
"""

from __future__ import annotations

import math
import struct
from typing import Sequence

import numpy as np

MAGIC = b"TNSR"


class ConformanceError(ValueError):
    """A core tensor does not match the shape demanded by its structure."""


class DenseTensor:
    """Immutable dense real tensor with explicit mode sizes."""

    __slots__ = ("_array",)

    def __init__(self, dims: Sequence[int], values) -> None:
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ValueError("tensor must have at least one mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"mode sizes must be >= 1, got {dims}")
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size != math.prod(dims):
            raise ValueError(
                f"got {arr.size} values for dims {dims} "
                f"(expected {math.prod(dims)})"
            )
        arr = arr.reshape(dims)
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape((1,))
        return cls(arr.shape, arr.reshape(-1))

    @property
    def dims(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def order(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the entries (read-only)."""
        return self._array.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        """Shaped read-only view of the entries."""
        return self._array

    def norm(self) -> float:
        return float(np.linalg.norm(self._array))

    def __repr__(self) -> str:
        return f"DenseTensor(dims={self.dims})"


class Matrix:
    """Immutable dense matrix; the unfolding target for spectra."""

    __slots__ = ("_array",)

    def __init__(self, rows: int, cols: int, values) -> None:
        rows, cols = int(rows), int(cols)
        if rows < 1 or cols < 1:
            raise ValueError("matrix dimensions must be positive")
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size != rows * cols:
            raise ValueError(f"got {arr.size} values for a {rows}x{cols} matrix")
        arr = arr.reshape(rows, cols)
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def from_array(cls, arr) -> "Matrix":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(arr.shape[0], arr.shape[1], arr.reshape(-1))

    @property
    def rows(self) -> int:
        return self._array.shape[0]

    @property
    def cols(self) -> int:
        return self._array.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self._array.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        return self._array

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


# --------------------------------------------------------------------- #
# Contraction                                                            #
# --------------------------------------------------------------------- #

def core_labels(structure, v: int) -> list[tuple]:
    """Axis labels of core v: its physical mode then one bond per other vertex.

    Bond axes are ordered by ascending partner index; the label of the bond
    between i and j is ("b", min(i, j), max(i, j)).
    """
    labels: list[tuple] = [("p", v)]
    for u in range(structure.n_vertices):
        if u != v:
            labels.append(("b", min(u, v), max(u, v)))
    return labels


def _as_arrays(structure, cores) -> list[np.ndarray]:
    arrays = [np.asarray(c.array if isinstance(c, DenseTensor) else c, dtype=np.float64)
              for c in cores]
    if len(arrays) != structure.n_vertices:
        raise ConformanceError(
            f"{len(arrays)} cores for {structure.n_vertices} vertices")
    for v, a in enumerate(arrays):
        expect = structure.core_shape(v)
        if a.shape != expect:
            raise ConformanceError(
                f"core {v} has shape {a.shape}, structure demands {expect}")
    return arrays


def contract_full(structure, cores) -> np.ndarray:
    """Contract all cores; result keeps one axis per vertex (latents singleton)."""
    arrays = _as_arrays(structure, cores)
    n = structure.n_vertices
    acc = arrays[0]
    acc_labels = core_labels(structure, 0)
    for v in range(1, n):
        labels_v = core_labels(structure, v)
        shared = [lab for lab in labels_v if lab in acc_labels]
        ax_acc = [acc_labels.index(lab) for lab in shared]
        ax_core = [labels_v.index(lab) for lab in shared]
        acc = np.tensordot(acc, arrays[v], axes=(ax_acc, ax_core))
        acc_labels = ([lab for lab in acc_labels if lab not in shared]
                      + [lab for lab in labels_v if lab not in shared])
    perm = [acc_labels.index(("p", v)) for v in range(n)]
    return acc.transpose(perm)


def contract_network(structure, cores) -> DenseTensor:
    """Contract the network into the full tensor over the physical modes.

    Vertices are merged pairwise in ascending index order.  Vertices with
    physical dimension 1 (latent vertices) contribute a singleton mode that
    is squeezed out of the result.
    """
    full = contract_full(structure, cores)
    out_dims = [d for d in structure.phys_dims if d > 1]
    if not out_dims:
        out_dims = [1]
    return DenseTensor.from_array(full.reshape(out_dims))


def rse(x: DenseTensor, z: DenseTensor) -> float:
    """Relative squared error ||x - z||^2 / ||x||^2."""
    if x.dims != z.dims:
        raise ValueError(f"dims mismatch: {x.dims} vs {z.dims}")
    denom = float(np.sum(x.values * x.values))
    if denom == 0.0:
        raise ValueError("reference tensor has zero norm")
    diff = x.values - z.values
    return float(np.sum(diff * diff)) / denom


# --------------------------------------------------------------------- #
# Unfoldings and spectra                                                 #
# --------------------------------------------------------------------- #

def unfold(t: DenseTensor, mode: int) -> Matrix:
    """Mode-k unfolding: rows index the chosen mode, columns the rest.

    Column order is row-major over the remaining modes in ascending order.
    """
    if not 0 <= mode < t.order:
        raise ValueError(f"mode {mode} out of range for order {t.order}")
    arr = np.moveaxis(t.array, mode, 0).reshape(t.dims[mode], -1)
    return Matrix.from_array(arr)


def singular_values(m: Matrix | np.ndarray) -> np.ndarray:
    """Singular values in descending order."""
    arr = m.array if isinstance(m, Matrix) else np.asarray(m, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("matrix has non-finite entries")
    try:
        return np.linalg.svd(arr, compute_uv=False)
    except np.linalg.LinAlgError:
        # Gram-matrix fallback for the rare case the direct SVD fails.
        gram = arr.T @ arr if arr.shape[0] >= arr.shape[1] else arr @ arr.T
        eig = np.linalg.eigvalsh(gram)
        return np.sqrt(np.clip(eig, 0.0, None))[::-1]


# --------------------------------------------------------------------- #
# TNSR v1 binary format                                                  #
# --------------------------------------------------------------------- #

def save_tnsr(t: DenseTensor, path) -> None:
    """Write magic, uint32 order, uint32 dims, float64 values (all LE)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", t.order))
        fh.write(struct.pack(f"<{t.order}I", *t.dims))
        fh.write(t.values.astype("<f8").tobytes())


def load_tnsr(path) -> DenseTensor:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a TNSR file (magic {magic!r})")
        (order,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{order}I", fh.read(4 * order))
        count = math.prod(dims)
        data = fh.read(8 * count)
        if len(data) != 8 * count:
            raise ValueError("truncated TNSR payload")
        values = np.frombuffer(data, dtype="<f8")
    return DenseTensor(dims, values)
