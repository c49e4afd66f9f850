"""Outer objective, evaluation bookkeeping and the estimation trick.

The objective of a structure is 1/compression_ratio + lambda * RSE, where
the RSE comes from an inner minimization.  Explicit inner minimizations are
the cost currency of every experiment here, so they are counted exactly:
cache hits and interpolated estimates never increment the counter.
"""

from __future__ import annotations

import csv
import hashlib
import json
import threading
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .solver import CoreSet, SolverConfig, init_cores, minimize_rse, warm_start
from .structure import TnStructure, compression_ratio
from .tensor import ConformanceError, DenseTensor


class BudgetExceededError(RuntimeError):
    """The explicit-evaluation budget is exhausted."""


@dataclass(frozen=True)
class ObjectiveConfig:
    lam: float = 200.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    iters_per_eval: int | None = None
    # Warm-started solves have no init plateau, so they may stall out on a
    # much shorter window than fresh ones.
    warm_patience: int | None = 300

    def __post_init__(self):
        # lam == 0 degenerates to pure compression ranking; still useful
        # for tests and diagnostics, so only negatives are rejected.
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


@dataclass(frozen=True)
class EvaluationRecord:
    structure: TnStructure
    rse: float
    compression_ratio: float
    objective: float
    eval_index: int
    estimated: bool
    solver_iters: int

    def structure_id(self) -> str:
        return f"{self.structure.stable_hash():016x}"


class EvaluationCache:
    """Maps canonical structure keys to records (and cores for warm starts).

    Reads are concurrent; writes and the evaluation counter are serialized.
    Cache hits never increment the counter.
    """

    def __init__(self):
        self._records: dict[tuple, EvaluationRecord] = {}
        self._cores: dict[tuple, CoreSet] = {}
        self._lock = threading.Lock()
        self._count = 0

    @property
    def eval_count(self) -> int:
        return self._count

    def get(self, s: TnStructure) -> EvaluationRecord | None:
        return self._records.get(s.canonical_key())

    def cores_for(self, s: TnStructure) -> CoreSet | None:
        return self._cores.get(s.canonical_key())

    def __len__(self) -> int:
        return len(self._records)


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Deterministic, order-independent stream from a seed and string/int keys."""
    entropy = [seed & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            digest = hashlib.blake2b(k.encode(), digest_size=8).digest()
            entropy.append(int.from_bytes(digest, "little"))
        else:
            entropy.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(entropy)


class Evaluator:
    """Binds a target, an objective config and a cache.

    Each solve draws its init stream from (seed, structure hash), so results
    do not depend on the order in which candidates are evaluated.
    """

    def __init__(self, target: DenseTensor, cfg: ObjectiveConfig,
                 cache: EvaluationCache | None = None,
                 budget: int | None = None):
        if budget is not None and budget < 1:
            raise ValueError("budget must be >= 1")
        self.target = target
        self.cfg = cfg
        self.cache = cache if cache is not None else EvaluationCache()
        self.budget = budget
        self.log: list[EvaluationRecord] = []
        self._inflight: dict[tuple, threading.Event] = {}

    @property
    def eval_count(self) -> int:
        return self.cache.eval_count

    def rng_for(self, s: TnStructure, *keys) -> np.random.Generator:
        return derive_rng(self.cfg.solver.seed, s.stable_hash(), *keys)

    def _solver_config(self) -> SolverConfig:
        scfg = self.cfg.solver
        if self.cfg.iters_per_eval is not None:
            scfg = replace(scfg, max_iters=self.cfg.iters_per_eval)
        return scfg

    def evaluate(self, s: TnStructure, warm: CoreSet | None = None) -> EvaluationRecord:
        """Return the record for s, solving the inner problem at most once."""
        key = s.canonical_key()
        cache = self.cache
        while True:
            with cache._lock:
                rec = cache._records.get(key)
                if rec is not None:
                    return rec
                ev = self._inflight.get(key)
                if ev is None:
                    if self.budget is not None and cache._count >= self.budget:
                        raise BudgetExceededError(
                            f"budget of {self.budget} explicit evaluations reached")
                    cache._count += 1
                    idx = cache._count
                    ev = threading.Event()
                    self._inflight[key] = ev
                    break
            ev.wait()

        try:
            rec = self._solve(s, warm, idx)
        except BaseException:
            with cache._lock:
                cache._count -= 1
                self._inflight.pop(key, None)
            ev.set()
            raise
        with cache._lock:
            cache._records[key] = rec
            self.log.append(rec)
            self._inflight.pop(key, None)
        ev.set()
        return rec

    def _solve(self, s: TnStructure, warm: CoreSet | None, idx: int) -> EvaluationRecord:
        if s.squeezed_dims() != self.target.dims:
            raise ConformanceError(
                f"structure dims {s.squeezed_dims()} vs target {self.target.dims}")
        scfg = self._solver_config()
        if warm is not None and self.cfg.warm_patience is not None:
            scfg = replace(scfg, patience=min(scfg.patience, self.cfg.warm_patience))
        init = warm if warm is not None else init_cores(s, scfg, self.rng_for(s))
        cores, rse_val, iters = minimize_rse(self.target, s, init, scfg)
        cr = compression_ratio(s)
        obj = 1.0 / cr + self.cfg.lam * rse_val
        self.cache._cores[s.canonical_key()] = cores
        return EvaluationRecord(structure=s, rse=rse_val, compression_ratio=cr,
                                objective=obj, eval_index=idx, estimated=False,
                                solver_iters=iters)

    def warm_from(self, src: TnStructure, dst: TnStructure) -> CoreSet | None:
        """Warm-start cores for dst from src's cached solution, if compatible."""
        cores = self.cache.cores_for(src)
        if cores is None:
            return None
        try:
            return warm_start(cores, src, dst, self._solver_config(),
                              self.rng_for(dst, "warm"))
        except ValueError:
            return None

    def note_estimated(self, s: TnStructure, objective: float) -> EvaluationRecord:
        """Log an interpolated (never solved) objective value for reporting."""
        cr = compression_ratio(s)
        rec = EvaluationRecord(structure=s, rse=float("nan"),
                               compression_ratio=cr, objective=objective,
                               eval_index=self.cache.eval_count, estimated=True,
                               solver_iters=0)
        with self.cache._lock:
            self.log.append(rec)
        return rec


def estimate_rank_sweep(center_rank: int, radius_b: int,
                        bounds: tuple[int, int],
                        anchor_evaluator: Callable[[int], float]) -> dict[int, float]:
    """Objective values over a rank window from at most three explicit anchors.

    The anchors center-b, center and center+b (clamped to bounds) are
    evaluated explicitly; values strictly between two anchors are linear
    interpolations of that anchor pair.  Anchors keep their exact values.
    """
    if radius_b < 1:
        raise ValueError("radius_b must be >= 1")
    lo, hi = bounds
    if not lo <= center_rank <= hi:
        raise ValueError(f"center {center_rank} outside bounds {bounds}")
    lo_anchor = max(lo, center_rank - radius_b)
    hi_anchor = min(hi, center_rank + radius_b)
    anchors = sorted({lo_anchor, center_rank, hi_anchor})
    values = {r: float(anchor_evaluator(r)) for r in anchors}
    out: dict[int, float] = {}
    for r in range(lo_anchor, hi_anchor + 1):
        if r in values:
            out[r] = values[r]
        elif r < center_rank:
            t = (r - lo_anchor) / (center_rank - lo_anchor)
            out[r] = values[lo_anchor] + t * (values[center_rank] - values[lo_anchor])
        else:
            t = (r - center_rank) / (hi_anchor - center_rank)
            out[r] = values[center_rank] + t * (values[hi_anchor] - values[center_rank])
    return out


# --------------------------------------------------------------------- #
# Trace export                                                           #
# --------------------------------------------------------------------- #

TRACE_COLUMNS = ["eval_index", "objective", "rse", "compression_ratio",
                 "estimated", "structure_id"]


def write_trace_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            writer.writerow([r.eval_index, f"{r.objective:.17g}", f"{r.rse:.17g}",
                             f"{r.compression_ratio:.17g}", int(r.estimated),
                             r.structure_id()])


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"empty trace {path}")
    out = []
    for row in rows:
        out.append({
            "eval_index": int(row["eval_index"]),
            "objective": float(row["objective"]),
            "rse": float(row["rse"]),
            "compression_ratio": float(row["compression_ratio"]),
            "estimated": bool(int(row["estimated"])),
            "structure_id": row["structure_id"],
        })
    return out


def write_structures_json(records, path) -> None:
    """Side table resolving structure_id to the structure JSON."""
    table: dict[str, dict] = {}
    for r in records:
        table.setdefault(r.structure_id(), r.structure.to_json_dict())
    with open(path, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
