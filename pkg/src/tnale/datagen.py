"""Synthetic targets with hidden ground-truth structure.

Templates cover rings (TR), tensor wheels (TW, a ring plus a latent hub),
grids (PEPS), balanced hierarchical trees (HT), a layered MERA-style
layout, and fully-connected graphs (FC).  Latent vertices carry physical
dimension 1 and never appear as modes of the generated tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .objective import EvaluationRecord, derive_rng
from .solver import CoreSet, permute_cores
from .structure import (TnStructure, VertexPermutation, apply_permutation,
                        efficiency)
from .tensor import DenseTensor, contract_network, save_tnsr

KINDS = ("tr", "tw", "peps", "ht", "mera", "fc")


@dataclass(frozen=True)
class TopologyTemplate:
    kind: str
    order: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.order < 2:
            raise ValueError("order must be >= 2")


@dataclass(frozen=True)
class GenSpec:
    template: TopologyTemplate
    phys_dim: int = 3
    rank_range: tuple[int, int] = (1, 4)
    permute: bool = False
    core_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rank_range[0] < 1:
            raise ValueError("rank lower bound must be >= 1")


class GenResult(NamedTuple):
    target: DenseTensor
    truth: TnStructure
    truth_perm: VertexPermutation
    cores: CoreSet


def _edges_tr(order):
    return sorted({tuple(sorted((i, (i + 1) % order))) for i in range(order)})


def _grid_shape(order):
    rows = 1
    for r in range(1, int(order ** 0.5) + 1):
        if order % r == 0:
            rows = r
    return rows, order // rows


def template_adjacency(t: TopologyTemplate, phys_dim: int = 3) -> TnStructure:
    """The unweighted template: bonds all 1, searchable edges marked."""
    order = t.order
    if t.kind == "tr":
        n, phys = order, [phys_dim] * order
        edges = _edges_tr(order)
    elif t.kind == "tw":
        n = order + 1
        phys = [phys_dim] * order + [1]
        edges = _edges_tr(order) + [(i, order) for i in range(order)]
    elif t.kind == "fc":
        n, phys = order, [phys_dim] * order
        edges = [(i, j) for i in range(order) for j in range(i + 1, order)]
    elif t.kind == "peps":
        rows, cols = _grid_shape(order)
        n, phys = order, [phys_dim] * order
        edges = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    edges.append((v, v + 1))
                if r + 1 < rows:
                    edges.append((v, v + cols))
    elif t.kind == "ht":
        phys = [phys_dim] * order
        edges = []
        counter = [order]

        def build(a, b):
            if b - a == 1:
                return a
            node = counter[0]
            counter[0] += 1
            phys.append(1)
            mid = (a + b + 1) // 2
            edges.append(tuple(sorted((node, build(a, mid)))))
            edges.append(tuple(sorted((node, build(mid, b)))))
            return node

        build(0, order)
        n = counter[0]
    elif t.kind == "mera":
        if order % 2 != 0 or order < 6:
            raise ValueError("mera template needs an even order >= 6")
        half = order // 2
        # one layer of entangling vertices over site pairs, one layer of
        # coarse-graining vertices over neighbouring pairs, one top vertex
        n = order + half + half + 1
        phys = [phys_dim] * order + [1] * (half + half + 1)
        dis = [order + i for i in range(half)]
        iso = [order + half + i for i in range(half)]
        top = n - 1
        edges = []
        for i in range(half):
            edges.append(tuple(sorted((2 * i, dis[i]))))
            edges.append(tuple(sorted((2 * i + 1, dis[i]))))
            edges.append(tuple(sorted((dis[i], iso[i]))))
            edges.append(tuple(sorted((dis[(i + 1) % half], iso[i]))))
            edges.append(tuple(sorted((iso[i], top))))
    else:  # pragma: no cover - guarded by TopologyTemplate
        raise ValueError(t.kind)
    bond = np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)
    return TnStructure(tuple(phys), bond, frozenset(edges))


def generate(spec: GenSpec) -> GenResult:
    """Draw a hidden structure, cores and (optionally) a mode permutation.

    The returned truth is the unpermuted generating structure; applying
    truth_perm to it (and to the cores) reproduces the target exactly.
    """
    tpl = template_adjacency(spec.template, spec.phys_dim)
    rng = derive_rng(spec.seed, "datagen")
    lo, hi = spec.rank_range
    ranks = rng.integers(lo, hi + 1, size=len(tpl.edges()))
    truth = tpl.with_ranks(ranks)
    cores = CoreSet(tuple(rng.normal(0.0, spec.core_std, size=truth.core_shape(v))
                          for v in range(truth.n_vertices)))
    n = truth.n_vertices
    if spec.permute:
        order = spec.template.order
        phys_perm = rng.permutation(order)
        full = tuple(int(p) for p in phys_perm) + tuple(range(order, n))
        pi = VertexPermutation(full)
    else:
        pi = VertexPermutation.identity(n)
    permuted = apply_permutation(truth, pi)
    target = contract_network(permuted, permute_cores(truth, cores, pi))
    return GenResult(target, truth, pi, cores)


def success(found: EvaluationRecord, truth: TnStructure,
            rse_threshold: float = 1e-4) -> bool:
    """True iff the fit error and the compactness criteria both hold."""
    return (found.rse <= rse_threshold
            and efficiency(found.structure, truth) >= 1.0)


def write_instance(spec: GenSpec, result: GenResult, directory) -> dict:
    """Emit target.tnsr, truth.json and manifest.json; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_tnsr(result.target, directory / "target.tnsr")
    truth_doc = {
        "structure": result.truth.to_json_dict(),
        "permutation": list(result.truth_perm.perm),
    }
    with open(directory / "truth.json", "w") as fh:
        json.dump(truth_doc, fh, indent=2, sort_keys=True)
    manifest = {
        "spec": {
            "template": {"kind": spec.template.kind, "order": spec.template.order},
            "phys_dim": spec.phys_dim,
            "rank_range": list(spec.rank_range),
            "permute": spec.permute,
            "core_std": spec.core_std,
        },
        "seed": spec.seed,
        "truth_ranks": result.truth.ranks().tolist(),
        "permutation": list(result.truth_perm.perm),
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_truth(path) -> tuple[TnStructure, VertexPermutation]:
    with open(path) as fh:
        doc = json.load(fh)
    return (TnStructure.from_json_dict(doc["structure"]),
            VertexPermutation(tuple(doc["permutation"])))
