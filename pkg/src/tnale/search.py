"""Structure search: ALE sweeps, the full alternating search, a random
local-sampling baseline, and a brute-force oracle.

An ALE round-trip enumerates each rank variable over a window and commits
the argmin immediately (forward over edges, an optional pass over the
graph neighborhood, then backward over edges down to the second).  The
full search runs a short initialization phase with a wide radius and
interpolated objectives, then a search phase with explicit evaluation,
re-centering at a random structure when progress stalls.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Sequence

import numpy as np

from .objective import (BudgetExceededError, EvaluationRecord, Evaluator,
                        ObjectiveConfig, derive_rng, estimate_rank_sweep)
from .structure import (TnStructure, VertexPermutation, apply_permutation,
                        graph_neighborhood, param_count, rank_candidates)
from .tensor import DenseTensor

DEFAULT_GRID_CAP = 100_000


class GridCapExceededError(ValueError):
    """The requested exhaustive grid is larger than the configured cap."""


@dataclass(frozen=True)
class AleConfig:
    radius: int = 1
    round_trips: int = 1
    use_estimation: bool = False
    permutation_search: bool = False
    rank_bounds: tuple[int, int] = (1, 7)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.round_trips < 1:
            raise ValueError("round_trips must be >= 1")
        if self.rank_bounds[0] < 1:
            raise ValueError("rank lower bound must be >= 1")


@dataclass(frozen=True)
class TnaleConfig:
    r1: int = 2
    r2: int = 1
    l0: int = 2
    l: int = 30
    ale: AleConfig = field(default_factory=AleConfig)
    restart_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.r1 >= self.r2 >= 1:
            raise ValueError("need r1 >= r2 >= 1")
        if self.l0 < 0 or self.l < 1:
            raise ValueError("need l0 >= 0 and l >= 1")


@dataclass(frozen=True)
class TnlsConfig:
    samples_per_iter: int = 60
    max_iters: int = 30
    radius_schedule: tuple[int, ...] | float = 0.85
    permutation_search: bool = False
    rank_bounds: tuple[int, int] = (1, 7)
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_iter < 1:
            raise ValueError("samples_per_iter must be >= 1")


@dataclass
class SearchTrace:
    records: list[EvaluationRecord]
    best_curve: list[tuple[int, float]]
    final: EvaluationRecord
    restarts: int = 0
    init_phase_evals: int = 0
    wall_time_s: float = 0.0

    @property
    def n_eval(self) -> int:
        return sum(1 for r in self.records if not r.estimated)


# --------------------------------------------------------------------- #
# ALE sweep                                                              #
# --------------------------------------------------------------------- #

def _evaluate(evaluator, s, warm_src):
    warm = evaluator.warm_from(warm_src, s) if warm_src is not None else None
    return evaluator.evaluate(s, warm=warm)


def ale_sweep(center: TnStructure, cfg: AleConfig, evaluator) -> TnStructure:
    """One or more alternating-enumeration round-trips around a center.

    Tie-breaking prefers the smaller rank on edge updates and the
    unswapped center on graph updates.  With estimation enabled, each edge
    window costs at most three explicit evaluations (its anchors); the
    returned structure is always re-evaluated explicitly.
    """
    lo, hi = cfg.rank_bounds
    cur = center
    _evaluate(evaluator, cur, None)
    warm_src = cur
    for _ in range(cfg.round_trips):
        k_count = len(cur.edges())
        order = list(range(k_count))
        for k in order:
            cur, warm_src = _update_edge(cur, k, cfg, evaluator, warm_src)
        if cfg.permutation_search:
            cur, warm_src = _update_graph(cur, evaluator, warm_src)
        for k in range(k_count - 1, 0, -1):
            cur, warm_src = _update_edge(cur, k, cfg, evaluator, warm_src)
    _evaluate(evaluator, cur, warm_src)
    return cur


def _update_edge(cur, k, cfg, evaluator, warm_src):
    lo, hi = cfg.rank_bounds
    center_rank = int(cur.ranks()[k])
    cands = rank_candidates(center_rank, cfg.radius, lo, hi)
    if cfg.use_estimation and cfg.radius >= 1 and len(cands) > 1:
        anchors = sorted({max(lo, center_rank - cfg.radius), center_rank,
                          min(hi, center_rank + cfg.radius)})

        def anchor_eval(r):
            return _evaluate(evaluator, cur.with_rank(k, r), warm_src).objective

        est = estimate_rank_sweep(center_rank, cfg.radius, (lo, hi), anchor_eval)
        for r in cands:
            if r not in anchors and hasattr(evaluator, "note_estimated"):
                evaluator.note_estimated(cur.with_rank(k, r), est[r])
        best_r, best_val = None, None
        for r in cands:
            if best_val is None or est[r] < best_val:
                best_r, best_val = r, est[r]
        nxt = cur.with_rank(k, best_r)
    else:
        best_rec = None
        for r in cands:
            rec = _evaluate(evaluator, cur.with_rank(k, r), warm_src)
            if best_rec is None or rec.objective < best_rec.objective:
                best_rec = rec
        nxt = best_rec.structure
    if evaluator.cache.cores_for(nxt) is not None:
        warm_src = nxt
    return nxt, warm_src


def _update_graph(cur, evaluator, warm_src):
    target_dims = evaluator.target.dims
    cands = [cur] + [nb for nb in graph_neighborhood(cur)
                     if nb.squeezed_dims() == target_dims]
    best_rec = None
    for s in cands:
        rec = evaluator.evaluate(s) if s is not cur else _evaluate(evaluator, s, warm_src)
        if best_rec is None or rec.objective < best_rec.objective:
            best_rec = rec
    nxt = best_rec.structure
    if evaluator.cache.cores_for(nxt) is not None:
        warm_src = nxt
    return nxt, warm_src


# --------------------------------------------------------------------- #
# Full searches                                                          #
# --------------------------------------------------------------------- #

def _random_center(template: TnStructure, bounds, permute: bool,
                   rng: np.random.Generator, target_dims) -> TnStructure:
    lo, hi = bounds
    ranks = rng.integers(lo, hi + 1, size=len(template.edges()))
    s = template.with_ranks(ranks)
    if permute:
        n = s.n_vertices
        for _ in range(100):
            pi = VertexPermutation(tuple(int(p) for p in rng.permutation(n)))
            cand = apply_permutation(s, pi)
            if cand.squeezed_dims() == tuple(target_dims):
                return cand
    return s


def _finalize(evaluator, mark: int, restarts: int, init_phase_evals: int,
              t0: float) -> SearchTrace:
    records = list(evaluator.log[mark:])
    explicit = [r for r in records if not r.estimated]
    if not explicit:
        raise BudgetExceededError("budget exhausted before any explicit evaluation")
    curve = []
    best = float("inf")
    for r in explicit:
        best = min(best, r.objective)
        curve.append((r.eval_index, best))
    final = min(explicit, key=lambda r: (r.objective, r.eval_index))
    return SearchTrace(records=records, best_curve=curve, final=final,
                       restarts=restarts, init_phase_evals=init_phase_evals,
                       wall_time_s=time.time() - t0)


def tnale(target: DenseTensor, template: TnStructure, cfg: TnaleConfig,
          objective_cfg: ObjectiveConfig | None = None,
          evaluator: Evaluator | None = None,
          start: TnStructure | None = None) -> SearchTrace:
    """Alternating local enumeration with init and search phases.

    The initialization phase runs l0 sweeps at radius r1 with interpolated
    objectives; the search phase runs l sweeps at radius r2 with explicit
    evaluation.  When the center survives restart_patience consecutive
    sweeps unchanged, the search re-centers at a random structure while
    keeping the global best.
    """
    if evaluator is None:
        evaluator = Evaluator(target, objective_cfg or ObjectiveConfig())
    t0 = time.time()
    mark = len(evaluator.log)
    count0 = evaluator.eval_count
    rng_init = derive_rng(cfg.seed, "init")
    rng_restart = derive_rng(cfg.seed, "restart")
    bounds = cfg.ale.rank_bounds
    center = start if start is not None else _random_center(
        template, bounds, cfg.ale.permutation_search, rng_init, target.dims)
    restarts = 0
    init_phase_evals = 0
    try:
        for _ in range(cfg.l0):
            center = ale_sweep(center, replace(cfg.ale, radius=cfg.r1,
                                               use_estimation=True), evaluator)
        init_phase_evals = evaluator.eval_count - count0
        search_cfg = replace(cfg.ale, radius=cfg.r2, use_estimation=False)
        stagnant = 0
        for _ in range(cfg.l):
            nxt = ale_sweep(center, search_cfg, evaluator)
            if nxt == center:
                stagnant += 1
            else:
                stagnant = 0
            center = nxt
            if cfg.restart_patience and stagnant >= cfg.restart_patience:
                center = _random_center(template, bounds,
                                        cfg.ale.permutation_search,
                                        rng_restart, target.dims)
                restarts += 1
                stagnant = 0
    except BudgetExceededError:
        pass
    return _finalize(evaluator, mark, restarts, init_phase_evals, t0)


def _radius_at(cfg: TnlsConfig, t: int, span: int) -> int:
    rs = cfg.radius_schedule
    if isinstance(rs, (list, tuple)):
        return int(rs[min(t, len(rs) - 1)])
    return max(1, round(span * float(rs) ** t))


def tnls(target: DenseTensor, template: TnStructure, cfg: TnlsConfig,
         objective_cfg: ObjectiveConfig | None = None,
         evaluator: Evaluator | None = None,
         start: TnStructure | None = None) -> SearchTrace:
    """Random local sampling baseline.

    Each iteration draws structures uniformly from the rank box around the
    center (and a uniformly chosen vertex swap when permutation search is
    on), evaluates them, and moves the center to the best strictly
    improving sample.  The box radius follows the configured schedule,
    decaying geometrically with floor 1 by default.  When the whole box is
    no larger than the sample budget it is enumerated instead.
    """
    if evaluator is None:
        evaluator = Evaluator(target, objective_cfg or ObjectiveConfig())
    t0 = time.time()
    mark = len(evaluator.log)
    lo, hi = cfg.rank_bounds
    rng_init = derive_rng(cfg.seed, "init")
    rng_sample = derive_rng(cfg.seed, "tnls-sample")
    center = start if start is not None else _random_center(
        template, cfg.rank_bounds, cfg.permutation_search, rng_init, target.dims)
    try:
        center_rec = evaluator.evaluate(center)
        n = center.n_vertices
        span = hi - lo
        for it in range(cfg.max_iters):
            radius = _radius_at(cfg, it, span)
            ranks = center_rec.structure.ranks()
            los = np.maximum(lo, ranks - radius)
            his = np.minimum(hi, ranks + radius)
            box = int(np.prod(his - los + 1))
            samples: list[TnStructure] = []
            if not cfg.permutation_search and box <= cfg.samples_per_iter:
                for combo in product(*[range(a, b + 1) for a, b in zip(los, his)]):
                    samples.append(center_rec.structure.with_ranks(combo))
            else:
                for _ in range(cfg.samples_per_iter):
                    draw = rng_sample.integers(los, his + 1)
                    s = center_rec.structure.with_ranks(draw)
                    if cfg.permutation_search:
                        i, j = _random_pair(rng_sample, n)
                        s = apply_permutation(
                            s, VertexPermutation.swap(n, i, j))
                        if s.squeezed_dims() != target.dims:
                            continue
                    samples.append(s)
            best = center_rec
            for s in samples:
                warm_src = (center_rec.structure
                            if s.template_edges == center_rec.structure.template_edges
                            else None)
                rec = _evaluate(evaluator, s, warm_src)
                if rec.objective < best.objective:
                    best = rec
            center_rec = best
    except BudgetExceededError:
        pass
    return _finalize(evaluator, mark, 0, 0, t0)


def _random_pair(rng: np.random.Generator, n: int) -> tuple[int, int]:
    i = int(rng.integers(0, n))
    j = int(rng.integers(0, n - 1))
    if j >= i:
        j += 1
    return (i, j) if i < j else (j, i)


def brute_force(target: DenseTensor, template: TnStructure,
                rank_bounds: tuple[int, int],
                perms: Sequence[VertexPermutation] | None = None,
                cfg: ObjectiveConfig | None = None,
                evaluator: Evaluator | None = None,
                cap: int = DEFAULT_GRID_CAP) -> EvaluationRecord:
    """Evaluate every (ranks, permutation) combination; return the argmin.

    Ties break toward the smaller parameter count, then the
    lexicographically smaller rank vector.
    """
    if evaluator is None:
        evaluator = Evaluator(target, cfg or ObjectiveConfig())
    lo, hi = rank_bounds
    k_count = len(template.edges())
    perm_list = list(perms) if perms else [None]
    total = (hi - lo + 1) ** k_count * len(perm_list)
    if total > cap:
        raise GridCapExceededError(
            f"grid of {total} structures exceeds cap {cap}")
    best_rec = None
    best_key = None
    for ranks in product(range(lo, hi + 1), repeat=k_count):
        base = template.with_ranks(ranks)
        for p_i, pi in enumerate(perm_list):
            s = base if pi is None else apply_permutation(base, pi)
            if s.squeezed_dims() != target.dims:
                continue
            rec = evaluator.evaluate(s)
            key = (rec.objective, param_count(s), ranks, p_i)
            if best_key is None or key < best_key:
                best_rec, best_key = rec, key
    if best_rec is None:
        raise ValueError("no admissible structure in the grid")
    return best_rec


def evals_to_success(trace: SearchTrace, truth: TnStructure,
                     rse_threshold: float = 1e-4) -> int | None:
    """First eval_index at which a success-grade structure had been solved."""
    from .datagen import success
    for r in trace.records:
        if r.estimated:
            continue
        if success(r, truth, rse_threshold=rse_threshold):
            return r.eval_index
    return None
