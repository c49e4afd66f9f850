"""Tensor-network structures: weighted adjacency, permutations, neighborhoods.

A structure couples a topology with bond dimensions.  Edges are never
deleted: a bond dimension of 1 marks a logically present but dimensionally
trivial bond, so topology search reduces to rank search over a
fully-connected template.  Vertices with physical dimension 1 are latent
(internal) vertices without a mode in the data tensor.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

Edge = tuple[int, int]


def _norm_edge(e: Iterable[int]) -> Edge:
    i, j = sorted(int(v) for v in e)
    if i == j:
        raise ValueError(f"self-loop edge ({i},{j}) is not allowed")
    return (i, j)


@dataclass(frozen=True, eq=False)
class TnStructure:
    """A weighted adjacency matrix plus per-vertex physical dimensions.

    ``bond`` is symmetric with zero diagonal; off-diagonal entries are the
    bond dimensions (>= 1).  When ``template_edges`` is set, only those
    pairs are searchable and every other pair is pinned at bond 1.
    """

    phys_dims: tuple[int, ...]
    bond: np.ndarray
    template_edges: frozenset[Edge] | None = None

    def __post_init__(self):
        phys = tuple(int(d) for d in self.phys_dims)
        object.__setattr__(self, "phys_dims", phys)
        n = len(phys)
        if n < 1 or any(d < 1 for d in phys):
            raise ValueError(f"invalid physical dims {phys}")
        bond = np.array(self.bond, dtype=np.int64)
        if bond.shape != (n, n):
            raise ValueError(f"bond matrix shape {bond.shape} for {n} vertices")
        if not np.array_equal(bond, bond.T):
            raise ValueError("bond matrix must be symmetric")
        if np.any(np.diag(bond) != 0):
            raise ValueError("bond matrix diagonal must be zero")
        off = bond[~np.eye(n, dtype=bool)]
        if n > 1 and np.any(off < 1):
            raise ValueError("off-diagonal bond entries must be >= 1")
        if self.template_edges is not None:
            tpl = frozenset(_norm_edge(e) for e in self.template_edges)
            for i, j in tpl:
                if not (0 <= i < n and 0 <= j < n):
                    raise ValueError(f"template edge ({i},{j}) out of range")
            object.__setattr__(self, "template_edges", tpl)
            for i, j in combinations(range(n), 2):
                if (i, j) not in tpl and bond[i, j] != 1:
                    raise ValueError(
                        f"non-template pair ({i},{j}) carries bond {bond[i, j]}")
        bond.flags.writeable = False
        object.__setattr__(self, "bond", bond)

    @property
    def n_vertices(self) -> int:
        return len(self.phys_dims)

    def edges(self) -> tuple[Edge, ...]:
        """Searchable edges in canonical order (upper triangle, row-major)."""
        all_pairs = combinations(range(self.n_vertices), 2)
        if self.template_edges is None:
            return tuple(all_pairs)
        return tuple(e for e in all_pairs if e in self.template_edges)

    def ranks(self) -> np.ndarray:
        """Bond dimensions over the canonical searchable edges."""
        return np.array([self.bond[i, j] for i, j in self.edges()], dtype=np.int64)

    def with_ranks(self, ranks: Sequence[int]) -> "TnStructure":
        edges = self.edges()
        if len(ranks) != len(edges):
            raise ValueError(f"{len(ranks)} ranks for {len(edges)} edges")
        bond = np.array(self.bond)
        for (i, j), r in zip(edges, ranks):
            if r < 1:
                raise ValueError(f"rank {r} on edge ({i},{j}) must be >= 1")
            bond[i, j] = bond[j, i] = int(r)
        return TnStructure(self.phys_dims, bond, self.template_edges)

    def with_rank(self, edge_index: int, rank: int) -> "TnStructure":
        ranks = self.ranks()
        ranks[edge_index] = rank
        return self.with_ranks(ranks)

    def core_shape(self, v: int) -> tuple[int, ...]:
        """Shape of core v: physical dim then bonds to the others, ascending."""
        return (self.phys_dims[v],) + tuple(
            int(self.bond[v, u]) for u in range(self.n_vertices) if u != v)

    def squeezed_dims(self) -> tuple[int, ...]:
        """Mode sizes of the contracted tensor (latent vertices dropped)."""
        dims = tuple(d for d in self.phys_dims if d > 1)
        return dims if dims else (1,)

    def canonical_key(self) -> tuple:
        n = self.n_vertices
        upper = tuple(int(self.bond[i, j]) for i, j in combinations(range(n), 2))
        tpl = None if self.template_edges is None else tuple(sorted(self.template_edges))
        return (self.phys_dims, upper, tpl)

    def stable_hash(self) -> int:
        """Platform-independent 64-bit hash of the canonical key."""
        payload = repr(self.canonical_key()).encode()
        return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TnStructure):
            return NotImplemented
        return self.canonical_key() == other.canonical_key()

    def __hash__(self) -> int:
        return hash(self.canonical_key())

    def __repr__(self) -> str:
        return (f"TnStructure(n={self.n_vertices}, phys={self.phys_dims}, "
                f"ranks={self.ranks().tolist()})")

    # -- JSON round-trip ------------------------------------------------ #

    def to_json_dict(self) -> dict:
        n = self.n_vertices
        return {
            "n": n,
            "phys_dims": list(self.phys_dims),
            "bond": [int(self.bond[i, j]) for i, j in combinations(range(n), 2)],
            "template_edges": (None if self.template_edges is None
                               else [list(e) for e in sorted(self.template_edges)]),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TnStructure":
        n = int(d["n"])
        bond = np.zeros((n, n), dtype=np.int64)
        upper = d["bond"]
        for (i, j), r in zip(combinations(range(n), 2), upper):
            bond[i, j] = bond[j, i] = int(r)
        tpl = d.get("template_edges")
        tpl = None if tpl is None else frozenset(_norm_edge(e) for e in tpl)
        return cls(tuple(d["phys_dims"]), bond, tpl)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "TnStructure":
        return cls.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class EdgeOrder:
    """Ordered searchable edges; canonical order is the row-major upper triangle."""

    edges: tuple[Edge, ...]

    @classmethod
    def for_structure(cls, s: TnStructure) -> "EdgeOrder":
        return cls(s.edges())

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class VertexPermutation:
    """A bijection on vertex indices."""

    perm: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        object.__setattr__(self, "perm", perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"{perm} is not a bijection on 0..{len(perm) - 1}")

    @classmethod
    def identity(cls, n: int) -> "VertexPermutation":
        return cls(tuple(range(n)))

    @classmethod
    def swap(cls, n: int, i: int, j: int) -> "VertexPermutation":
        perm = list(range(n))
        perm[i], perm[j] = perm[j], perm[i]
        return cls(tuple(perm))

    def inverse(self) -> "VertexPermutation":
        inv = [0] * len(self.perm)
        for i, p in enumerate(self.perm):
            inv[p] = i
        return VertexPermutation(tuple(inv))

    def __call__(self, v: int) -> int:
        return self.perm[v]

    def __len__(self) -> int:
        return len(self.perm)


# --------------------------------------------------------------------- #
# Operations                                                             #
# --------------------------------------------------------------------- #

def ranks_to_padded_vector(s: TnStructure) -> np.ndarray:
    """Scatter the rank vector onto the full upper triangle (zeros elsewhere).

    The result has length n(n-1)/2 in canonical pair order; pairs outside
    the template carry 0.  For fully-connected structures this is the upper
    triangle verbatim.
    """
    n = s.n_vertices
    out = []
    for i, j in combinations(range(n), 2):
        if s.template_edges is None or (i, j) in s.template_edges:
            out.append(int(s.bond[i, j]))
        else:
            out.append(0)
    return np.array(out, dtype=np.int64)


def apply_permutation(s: TnStructure, pi: VertexPermutation) -> TnStructure:
    """Relabel vertices: bond'[pi(i)][pi(j)] = bond[i][j], phys dims follow."""
    n = s.n_vertices
    if len(pi) != n:
        raise ValueError(f"permutation on {len(pi)} vertices, structure has {n}")
    bond = np.zeros_like(s.bond)
    for i in range(n):
        for j in range(n):
            bond[pi(i), pi(j)] = s.bond[i, j]
    phys = [0] * n
    for i in range(n):
        phys[pi(i)] = s.phys_dims[i]
    tpl = (None if s.template_edges is None
           else frozenset(_norm_edge((pi(i), pi(j))) for i, j in s.template_edges))
    return TnStructure(tuple(phys), bond, tpl)


def graph_neighborhood(s: TnStructure) -> list[TnStructure]:
    """All structures reachable by one vertex transposition; n(n-1)/2 of them."""
    n = s.n_vertices
    if n < 2:
        raise ValueError("need at least two vertices")
    return [apply_permutation(s, VertexPermutation.swap(n, i, j))
            for i, j in combinations(range(n), 2)]


def rank_candidates(center: int, radius: int, lo: int, hi: int) -> list[int]:
    """The window [center-radius, center+radius] clamped to [lo, hi], ascending."""
    if lo > hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    if not lo <= center <= hi:
        raise ValueError(f"center {center} outside [{lo}, {hi}]")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return list(range(max(lo, center - radius), min(hi, center + radius) + 1))


def param_count(s: TnStructure) -> int:
    """Total core entries: sum over v of phys[v] * prod of incident bonds."""
    total = 0
    for v in range(s.n_vertices):
        cnt = s.phys_dims[v]
        for u in range(s.n_vertices):
            if u != v:
                cnt *= int(s.bond[v, u])
        total += cnt
    return total


def compression_ratio(s: TnStructure) -> float:
    """Target entry count divided by total core parameter count."""
    target = 1
    for d in s.phys_dims:
        target *= d
    return target / param_count(s)


def efficiency(found: TnStructure, truth: TnStructure) -> float:
    """Parameter-count ratio truth/found; >= 1 means found is as compact."""
    if sorted(found.phys_dims) != sorted(truth.phys_dims):
        raise ValueError(
            f"incompatible physical dims {found.phys_dims} vs {truth.phys_dims}")
    return param_count(truth) / param_count(found)
