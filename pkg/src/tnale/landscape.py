"""Neighborhood landscape diagnostics.

The landscape tensor holds reciprocal objective values over a rank window
around a center structure (optionally with one extra mode enumerating the
graph neighborhood), so the neighborhood's best structure is its largest
entry.  Enumerating one structure variable at a time reads fibers of this
tensor; the fiber search here and the brute-force scan give the two routes
for checking when fiber alternation recovers the exact optimum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .structure import (TnStructure, VertexPermutation, apply_permutation,
                        graph_neighborhood, rank_candidates)
from .tensor import DenseTensor, singular_values, unfold

DEFAULT_GRID_CAP = 100_000


@dataclass(frozen=True)
class LandscapeTensor:
    """Reciprocal-objective grid around a center structure.

    index_offset is the center's 1-based position in every unclamped rank
    mode; clamped modes record their realized candidate lists so decoding
    stays bijective.  When the graph mode is present it is the last mode
    and position 0 holds the unswapped center.
    """

    tensor: DenseTensor
    center: TnStructure
    radius: int
    index_offset: int
    mode_candidates: tuple[tuple[int, ...], ...]
    graph_mode_labels: tuple[TnStructure, ...] | None = None
    graph_perms: tuple[VertexPermutation, ...] | None = None

    def decode(self, index: Sequence[int]) -> TnStructure:
        """The structure whose objective sits at the given multi-index."""
        index = tuple(int(i) for i in index)
        k = len(self.mode_candidates)
        ranks = [self.mode_candidates[m][index[m]] for m in range(k)]
        s = self.center.with_ranks(ranks)
        if self.graph_perms is not None:
            s = apply_permutation(s, self.graph_perms[index[k]])
        return s


def build_landscape(center: TnStructure, radius: int, include_graph_mode: bool,
                    evaluator, rank_bounds: tuple[int, int] | None = None,
                    cap: int = DEFAULT_GRID_CAP, workers: int = 1) -> LandscapeTensor:
    """Materialize the reciprocal-objective tensor by explicit evaluation."""
    lo, hi = rank_bounds if rank_bounds is not None else (1, 10 ** 9)
    ranks = center.ranks()
    cands = tuple(tuple(rank_candidates(int(r), radius, lo, hi)) for r in ranks)
    perms: list[VertexPermutation] | None = None
    if include_graph_mode:
        n = center.n_vertices
        perms = [VertexPermutation.identity(n)]
        target_dims = evaluator.target.dims
        from itertools import combinations
        for i, j in combinations(range(n), 2):
            pi = VertexPermutation.swap(n, i, j)
            if apply_permutation(center, pi).squeezed_dims() == target_dims:
                perms.append(pi)
    sizes = [len(c) for c in cands] + ([len(perms)] if perms else [])
    total = int(np.prod(sizes))
    if total > cap:
        raise ValueError(f"landscape grid of {total} entries exceeds cap {cap}")

    def structure_at(idx):
        s = center.with_ranks([cands[m][idx[m]] for m in range(len(cands))])
        if perms is not None:
            s = apply_permutation(s, perms[idx[len(cands)]])
        return s

    indices = list(product(*[range(sz) for sz in sizes]))

    def entry(idx):
        rec = evaluator.evaluate(structure_at(idx))
        if rec.objective <= 0:
            raise ValueError(f"non-positive objective {rec.objective} at {idx}")
        return 1.0 / rec.objective

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(entry, indices))
    else:
        values = [entry(idx) for idx in indices]
    arr = np.array(values).reshape(sizes)
    labels = None
    if perms is not None:
        labels = tuple(apply_permutation(center, pi) for pi in perms)
    return LandscapeTensor(tensor=DenseTensor.from_array(arr), center=center,
                           radius=radius, index_offset=radius + 1,
                           mode_candidates=cands, graph_mode_labels=labels,
                           graph_perms=tuple(perms) if perms else None)


# --------------------------------------------------------------------- #
# Entry search                                                           #
# --------------------------------------------------------------------- #

class EntrySearchResult(NamedTuple):
    index: tuple[int, ...]
    value: float
    entry_reads: int


def min_entry_brute(b: LandscapeTensor | DenseTensor | np.ndarray) -> EntrySearchResult:
    """Exact argmax of the reciprocal grid (ties: lexicographically first)."""
    arr = _as_array(b)
    flat = int(np.argmax(arr))
    idx = np.unravel_index(flat, arr.shape)
    return EntrySearchResult(tuple(int(i) for i in idx), float(arr[idx]), arr.size)


class LazyGrid:
    """Entry access by callable, for fiber search without materialization."""

    def __init__(self, fn: Callable[[tuple[int, ...]], float],
                 mode_sizes: Sequence[int]):
        self.fn = fn
        self.mode_sizes = tuple(int(s) for s in mode_sizes)


def _as_array(b):
    if isinstance(b, LandscapeTensor):
        return b.tensor.array
    if isinstance(b, DenseTensor):
        return b.array
    return np.asarray(b)


def ale_min_entry(b, round_trips: int = 1,
                  start: Sequence[int] | None = None) -> EntrySearchResult:
    """Alternating fiber search for the largest entry.

    Each pass scans one fiber per mode and commits its argmax; passes
    alternate direction.  Every pass reads at most one fiber per mode, so
    fresh entry reads stay within round_trips times the sum of mode sizes.
    The running value never decreases because the current point lies on
    every fiber scanned.
    """
    if isinstance(b, LazyGrid):
        sizes = b.mode_sizes
        fn = b.fn
    else:
        arr = _as_array(b)
        sizes = arr.shape
        fn = lambda idx: float(arr[idx])
    m = len(sizes)
    if any(s < 1 for s in sizes):
        raise ValueError("mode sizes must be >= 1")
    point = list(start) if start is not None else [0] * m
    if len(point) != m or any(not 0 <= p < s for p, s in zip(point, sizes)):
        raise ValueError(f"start {point} outside grid {sizes}")

    seen: dict[tuple[int, ...], float] = {}

    def read(idx):
        if idx not in seen:
            seen[idx] = float(fn(idx))
        return seen[idx]

    value = read(tuple(point))
    for trip in range(round_trips):
        modes = range(m) if trip % 2 == 0 else range(m - 1, -1, -1)
        for mode in modes:
            best_i, best_v = point[mode], value
            for i in range(sizes[mode]):
                idx = tuple(point[:mode] + [i] + point[mode + 1:])
                v = read(idx)
                if v > best_v:
                    best_i, best_v = i, v
            point[mode] = best_i
            value = best_v
    return EntrySearchResult(tuple(point), value, len(seen))


def finite_gradient(f: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Forward-difference vector [f(x + e_i) - f(x)]_i on integer points."""
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1 or np.any(x < 0):
        raise ValueError("x must be a nonnegative integer vector")
    base = float(f(x))
    out = np.empty(len(x))
    for i in range(len(x)):
        step = x.copy()
        step[i] += 1
        out[i] = float(f(step)) - base
    return out


# --------------------------------------------------------------------- #
# Spectra                                                                 #
# --------------------------------------------------------------------- #

def unfolding_spectra(b: LandscapeTensor, rel_error: float = 0.1) -> dict:
    """Per-mode singular values plus the rank reaching the given
    truncation error (relative, Frobenius)."""
    arr = _as_array(b)
    t = DenseTensor.from_array(arr)
    total = float(np.linalg.norm(arr))
    modes = []
    for mode in range(t.order):
        sv = singular_values(unfold(t, mode))
        tail = np.sqrt(np.maximum(0.0, np.cumsum((sv ** 2)[::-1])[::-1]))
        rank = len(sv)
        for r in range(len(sv) + 1):
            err = tail[r] / total if r < len(sv) else 0.0
            if err <= rel_error:
                rank = r
                break
        modes.append({
            "singular_values": [float(s) for s in sv],
            f"rank_at_rel_error_{rel_error:g}": int(rank),
        })
    return {"modes": modes, "norm": total}
