"""Inner minimization: fit cores of a fixed structure to a target tensor.

Gradients are exact, obtained by contracting the residual against all cores
but one (the environment of that core).  The optimizer is Adam; the best
iterate seen is returned, not the last, because these fits feed a discrete
search and tail noise must not corrupt comparisons between structures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .structure import TnStructure, VertexPermutation
from .tensor import ConformanceError, DenseTensor, contract_full, core_labels, load_tnsr, save_tnsr


class SolverDivergenceError(RuntimeError):
    """The fit produced non-finite values."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite objective at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    learning_rate: float = 1e-3
    max_iters: int = 5000
    init_std: float = 0.1
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_rse: float = 1e-4
    # Fresh inits at std 0.1 sit on a growth plateau with no-improvement
    # gaps up to ~1000 iterations before the fit takes off; the default
    # keeps headroom so fresh solves are never cut there.
    patience: int = 1200

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init_std <= 0:
            raise ValueError("init_std must be > 0")


@dataclass(frozen=True)
class CoreSet:
    """One core tensor per vertex, unit bond dims retained."""

    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        arrays = []
        for c in self.cores:
            a = np.array(c, dtype=np.float64)
            a.flags.writeable = False
            arrays.append(a)
        object.__setattr__(self, "cores", tuple(arrays))

    def conform(self, s: TnStructure) -> None:
        if len(self.cores) != s.n_vertices:
            raise ConformanceError(
                f"{len(self.cores)} cores for {s.n_vertices} vertices")
        for v, c in enumerate(self.cores):
            if c.shape != s.core_shape(v):
                raise ConformanceError(
                    f"core {v} has shape {c.shape}, structure demands "
                    f"{s.core_shape(v)}")

    def __iter__(self):
        return iter(self.cores)

    def __len__(self) -> int:
        return len(self.cores)


def init_cores(s: TnStructure, cfg: SolverConfig, rng: np.random.Generator) -> CoreSet:
    """Draw every core entry i.i.d. normal(0, init_std^2)."""
    return CoreSet(tuple(rng.normal(0.0, cfg.init_std, size=s.core_shape(v))
                         for v in range(s.n_vertices)))


def warm_start(old: CoreSet, old_s: TnStructure, new_s: TnStructure,
               cfg: SolverConfig, rng: np.random.Generator) -> CoreSet:
    """Carry optimized cores over to a structure with different bond dims.

    Overlapping index ranges are copied slot-by-slot; grown slices are
    filled with noise at a tenth of the fresh-init std so the embedded
    solution stays nearly intact while symmetry is broken.
    """
    if (old_s.n_vertices != new_s.n_vertices
            or old_s.phys_dims != new_s.phys_dims
            or old_s.template_edges != new_s.template_edges):
        raise ValueError("warm start requires matching vertices and template")
    old.conform(old_s)
    cores = []
    for v in range(new_s.n_vertices):
        new_shape = new_s.core_shape(v)
        core = rng.normal(0.0, cfg.init_std * 0.1, size=new_shape)
        shared = tuple(slice(0, min(a, b))
                       for a, b in zip(old.cores[v].shape, new_shape))
        core[shared] = old.cores[v][shared]
        cores.append(core)
    return CoreSet(tuple(cores))


def permute_cores(s: TnStructure, cores: CoreSet, pi: VertexPermutation) -> CoreSet:
    """Rearrange cores to conform to apply_permutation(s, pi)."""
    cores.conform(s)
    n = s.n_vertices
    new_arrays: list = [None] * n
    for v in range(n):
        partners = [u for u in range(n) if u != v]
        order = sorted(partners, key=pi)
        axes = [0] + [1 + partners.index(u) for u in order]
        new_arrays[pi(v)] = np.transpose(cores.cores[v], axes)
    return CoreSet(tuple(new_arrays))


# --------------------------------------------------------------------- #
# Contraction plans                                                      #
# --------------------------------------------------------------------- #

@lru_cache(maxsize=4096)
def _env_plan(s: TnStructure, v: int):
    """Tensordot steps merging all cores but v into a full-axis tensor."""
    n = s.n_vertices
    acc_labels = [("p", u) for u in range(n)]
    steps = []
    for u in range(n):
        if u == v:
            continue
        labels_u = core_labels(s, u)
        shared = [lab for lab in labels_u if lab in acc_labels]
        ax_acc = tuple(acc_labels.index(lab) for lab in shared)
        ax_core = tuple(labels_u.index(lab) for lab in shared)
        steps.append((u, ax_acc, ax_core))
        acc_labels = ([lab for lab in acc_labels if lab not in shared]
                      + [lab for lab in labels_u if lab not in shared])
    out_perm = tuple(acc_labels.index(lab) for lab in core_labels(s, v))
    return steps, out_perm


def _environment(s: TnStructure, arrays: Sequence[np.ndarray], v: int,
                 resid_full: np.ndarray) -> np.ndarray:
    steps, out_perm = _env_plan(s, v)
    acc = resid_full
    for u, ax_acc, ax_core in steps:
        acc = np.tensordot(acc, arrays[u], axes=(ax_acc, ax_core))
    return acc.transpose(out_perm)


def gradient_rse(target: DenseTensor, s: TnStructure, cores: CoreSet) -> CoreSet:
    """Exact gradient of rse(target, contract_network(s, cores)) per core."""
    cores.conform(s)
    if target.dims != s.squeezed_dims():
        raise ConformanceError(
            f"target dims {target.dims} vs structure {s.squeezed_dims()}")
    x_full = target.array.reshape(s.phys_dims)
    denom = float(np.sum(target.values ** 2))
    if denom == 0.0:
        raise ValueError("target tensor has zero norm")
    z_full = contract_full(s, cores.cores)
    resid = z_full - x_full
    scale = 2.0 / denom
    grads = tuple(scale * _environment(s, cores.cores, v, resid)
                  for v in range(s.n_vertices))
    return CoreSet(grads)


# --------------------------------------------------------------------- #
# Compiled fit plans                                                      #
#                                                                         #
# The reference contraction path above recomputes axis bookkeeping on     #
# every call.  The descent loop below instead compiles, once per          #
# structure, every merge into a fixed transpose + GEMM step over          #
# singleton-free shapes, and reuses reshaped core matrices across the     #
# per-vertex environment contractions of one iteration.                   #
# --------------------------------------------------------------------- #

@dataclass(frozen=True)
class _Step:
    slot: int                 # which prepared core matrix to multiply with
    perm_a: tuple[int, ...]   # transpose of the accumulator (kept axes first)
    identity_a: bool
    trans_shape: tuple[int, ...]
    mk: tuple[int, int]
    out_shape: tuple[int, ...]


@dataclass(frozen=True)
class _Chain:
    steps: tuple[_Step, ...]
    final_perm: tuple[int, ...]
    final_identity: bool
    final_shape: tuple[int, ...]


class _FitPlan:
    def __init__(self, s: TnStructure):
        n = s.n_vertices
        self.n = n
        self.core_compact = []
        core_lab = []
        for v in range(n):
            labels = core_labels(s, v)
            shape = s.core_shape(v)
            keep = [(lab, d) for lab, d in zip(labels, shape) if d > 1]
            self.core_compact.append(tuple(d for _, d in keep))
            core_lab.append([lab for lab, _ in keep])
        self.resid_shape = tuple(d for d in s.phys_dims if d > 1)
        resid_lab = [("p", v) for v in range(n) if s.phys_dims[v] > 1]

        # slots: distinct (core, contracted-axes-first permutation) matrices
        self._slot_index: dict[tuple, int] = {}
        self.slots: list[tuple[int, tuple[int, ...], tuple[int, int]]] = []

        def slot_for(u, shared):
            labels = core_lab[u]
            kept = [lab for lab in labels if lab not in shared]
            perm = tuple(labels.index(lab) for lab in shared) + tuple(
                labels.index(lab) for lab in kept)
            dims = self.core_compact[u]
            k = math.prod(dims[p] for p in perm[:len(shared)]) if shared else 1
            p_ = math.prod(dims[p] for p in perm[len(shared):]) if kept else 1
            key = (u, perm, len(shared))
            if key not in self._slot_index:
                self._slot_index[key] = len(self.slots)
                self.slots.append((u, perm, (int(k), int(p_))))
            return self._slot_index[key], kept

        core_size = {lab: d for v in range(n)
                     for lab, d in zip(core_lab[v], self.core_compact[v])}

        def chain(base_labels, base_dims, candidates, out_labels, out_shape):
            # Merge order is chosen greedily by smallest resulting
            # intermediate (ties broken by vertex index), fixed at compile
            # time, so results stay deterministic.
            acc_lab = list(base_labels)
            acc_dim = list(base_dims)
            remaining = list(candidates)
            steps = []
            while remaining:
                acc_size = math.prod(acc_dim)

                def merged_size(u):
                    shared = [lab for lab in core_lab[u] if lab in acc_lab]
                    drop = math.prod(core_size[lab] for lab in shared)
                    gain = math.prod(d for lab, d in zip(core_lab[u], self.core_compact[u])
                                     if lab not in shared)
                    return acc_size // max(drop, 1) * gain

                u = min(remaining, key=lambda w: (merged_size(w), w))
                remaining.remove(u)
                shared = [lab for lab in core_lab[u] if lab in acc_lab]
                slot, kept_b = slot_for(u, shared)
                kept_a = [lab for lab in acc_lab if lab not in shared]
                perm_a = tuple(acc_lab.index(lab) for lab in kept_a) + tuple(
                    acc_lab.index(lab) for lab in shared)
                trans_shape = tuple(acc_dim[p] for p in perm_a)
                m = math.prod(acc_dim[p] for p in perm_a[:len(kept_a)])
                k = math.prod(acc_dim[p] for p in perm_a[len(kept_a):])
                acc_dim = ([acc_dim[p] for p in perm_a[:len(kept_a)]]
                           + [self.core_compact[u][q]
                              for q in self.slots[slot][1][len(shared):]])
                acc_lab = kept_a + kept_b
                steps.append(_Step(slot, perm_a,
                                   perm_a == tuple(range(len(perm_a))),
                                   trans_shape, (int(m), int(k)), tuple(acc_dim)))
            final_perm = tuple(acc_lab.index(lab) for lab in out_labels)
            return _Chain(tuple(steps), final_perm,
                          final_perm == tuple(range(len(final_perm))), out_shape)

        full_shapes = [s.core_shape(v) for v in range(n)]
        self.forward = chain(core_lab[0], self.core_compact[0], range(1, n),
                             resid_lab, self.resid_shape)

        # Environments share one greedy merge order over the residual: the
        # partial contraction just before core v joins is exactly the
        # prefix that v's environment continues from, so the prefix is
        # computed once per iteration and only suffixes run per vertex.
        def one_merge(acc_lab, acc_dim, u):
            shared = [lab for lab in core_lab[u] if lab in acc_lab]
            slot, kept_b = slot_for(u, shared)
            kept_a = [lab for lab in acc_lab if lab not in shared]
            perm_a = tuple(acc_lab.index(lab) for lab in kept_a) + tuple(
                acc_lab.index(lab) for lab in shared)
            trans_shape = tuple(acc_dim[p] for p in perm_a)
            m = math.prod(acc_dim[p] for p in perm_a[:len(kept_a)])
            k = math.prod(acc_dim[p] for p in perm_a[len(kept_a):])
            new_dim = ([acc_dim[p] for p in perm_a[:len(kept_a)]]
                       + [self.core_compact[u][q]
                          for q in self.slots[slot][1][len(shared):]])
            step = _Step(slot, perm_a, perm_a == tuple(range(len(perm_a))),
                         trans_shape, (int(m), int(k)), tuple(new_dim))
            return step, kept_a + kept_b, new_dim

        def pick(acc_lab, acc_dim, remaining):
            acc_size = math.prod(acc_dim)

            def merged_size(u):
                shared = [lab for lab in core_lab[u] if lab in acc_lab]
                drop = math.prod(core_size[lab] for lab in shared)
                gain = math.prod(d for lab, d in zip(core_lab[u], self.core_compact[u])
                                 if lab not in shared)
                return acc_size // max(drop, 1) * gain

            return min(remaining, key=lambda w: (merged_size(w), w))

        prefix_steps = []
        states = [(list(resid_lab), list(self.resid_shape))]
        order = []
        remaining = list(range(n))
        while remaining:
            lab, dim = states[-1]
            u = pick(lab, dim, remaining)
            order.append(u)
            remaining.remove(u)
            if remaining:
                step, lab2, dim2 = one_merge(list(lab), list(dim), u)
                prefix_steps.append(step)
                states.append((lab2, dim2))
        self.env_prefix_steps = tuple(prefix_steps)
        self.env_pos = [0] * n
        self.env_suffix = [None] * n
        for j, v in enumerate(order):
            self.env_pos[v] = j
            lab, dim = states[j]
            self.env_suffix[v] = chain(list(lab), list(dim), order[j + 1:],
                                       core_lab[v], full_shapes[v])

    def prepare_slots(self, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
        out = []
        for u, perm, (k, p_) in self.slots:
            compact = arrays[u].reshape(self.core_compact[u])
            out.append(np.ascontiguousarray(compact.transpose(perm)).reshape(k, p_))
        return out

    def _step_buffers(self, steps) -> list:
        bufs = []
        for st in steps:
            m, k = st.mk
            p_ = self.slots[st.slot][2][1]
            tbuf = None if st.identity_a else np.empty(st.trans_shape)
            bufs.append((tbuf, np.empty((m, p_))))
        return bufs

    def new_workspace(self) -> dict:
        """Preallocated per-solve buffers: one transpose and one product
        buffer per chain step, plus one buffer per slot."""
        ws: dict = {"slots": [np.empty(kp) for _, _, kp in self.slots]}
        ws["f"] = self._step_buffers(self.forward.steps)
        ws["prefix"] = self._step_buffers(self.env_prefix_steps)
        for v in range(self.n):
            ws["s", v] = self._step_buffers(self.env_suffix[v].steps)
        return ws

    def fill_slots(self, arrays: Sequence[np.ndarray], ws: dict) -> None:
        slots = ws["slots"]
        for i, (u, perm, (k, p_)) in enumerate(self.slots):
            compact = arrays[u].reshape(self.core_compact[u])
            src = compact.transpose(perm)
            buf = slots[i]
            np.copyto(buf.reshape(src.shape), src)

    def run_buffered(self, key, chain: _Chain, base: np.ndarray, ws: dict) -> np.ndarray:
        slots = ws["slots"]
        acc = base
        for st, (tbuf, obuf) in zip(chain.steps, ws[key]):
            m, k = st.mk
            if st.identity_a:
                a = acc.reshape(m, k)
            else:
                np.copyto(tbuf, acc.transpose(st.perm_a))
                a = tbuf.reshape(m, k)
            np.matmul(a, slots[st.slot], out=obuf)
            acc = obuf.reshape(st.out_shape)
        if chain.final_identity:
            return acc.reshape(chain.final_shape)
        return np.ascontiguousarray(acc.transpose(chain.final_perm)).reshape(chain.final_shape)

    def run_envs(self, resid: np.ndarray, ws: dict) -> list[np.ndarray]:
        """All vertex environments via the shared prefix (one pass)."""
        slots = ws["slots"]
        states = [resid]
        acc = resid
        for st, (tbuf, obuf) in zip(self.env_prefix_steps, ws["prefix"]):
            m, k = st.mk
            if st.identity_a:
                a = acc.reshape(m, k)
            else:
                np.copyto(tbuf, acc.transpose(st.perm_a))
                a = tbuf.reshape(m, k)
            np.matmul(a, slots[st.slot], out=obuf)
            acc = obuf.reshape(st.out_shape)
            states.append(acc)
        return [self.run_buffered(("s", v), self.env_suffix[v],
                                  states[self.env_pos[v]], ws)
                for v in range(self.n)]

    @staticmethod
    def run_chain(chain: _Chain, base: np.ndarray, slots: list[np.ndarray]) -> np.ndarray:
        acc = base
        for st in chain.steps:
            m, k = st.mk
            if st.identity_a:
                a = acc.reshape(m, k)
            else:
                a = np.ascontiguousarray(acc.transpose(st.perm_a)).reshape(m, k)
            acc = (a @ slots[st.slot]).reshape(st.out_shape)
        if chain.final_identity:
            return acc.reshape(chain.final_shape)
        return np.ascontiguousarray(acc.transpose(chain.final_perm)).reshape(chain.final_shape)


@lru_cache(maxsize=4096)
def _fit_plan(s: TnStructure) -> _FitPlan:
    return _FitPlan(s)


# --------------------------------------------------------------------- #
# Adam descent                                                           #
# --------------------------------------------------------------------- #

def minimize_rse(target: DenseTensor, s: TnStructure, init: CoreSet,
                 cfg: SolverConfig) -> tuple[CoreSet, float, int]:
    """Adam descent on the relative squared error.

    Returns (cores, rse, iterations) at the best iterate seen.  Stops when
    the RSE drops below cfg.early_stop_rse, when it has not improved by a
    relative 1e-6 in cfg.patience iterations, or at cfg.max_iters.
    """
    init.conform(s)
    if target.dims != s.squeezed_dims():
        raise ConformanceError(
            f"target dims {target.dims} vs structure {s.squeezed_dims()}")
    denom = float(np.dot(target.values, target.values))
    if denom == 0.0:
        raise ValueError("target tensor has zero norm")
    plan = _fit_plan(s)
    x_sq = target.array.reshape(plan.resid_shape)

    n = s.n_vertices
    shapes = [s.core_shape(v) for v in range(n)]
    sizes = [math.prod(sh) for sh in shapes]
    offsets = [0]
    for sz in sizes:
        offsets.append(offsets[-1] + sz)
    x = np.empty(offsets[-1])
    for v in range(n):
        x[offsets[v]:offsets[v + 1]] = init.cores[v].reshape(-1)
    views = [x[offsets[v]:offsets[v + 1]].reshape(shapes[v]) for v in range(n)]
    g = np.empty_like(x)
    g_views = [g[offsets[v]:offsets[v + 1]].reshape(shapes[v]) for v in range(n)]

    m = np.zeros_like(x)
    vv = np.zeros_like(x)
    tmp1 = np.empty_like(x)
    tmp2 = np.empty_like(x)
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    scale = 2.0 / denom
    ws = plan.new_workspace()
    base0 = views[0].reshape(plan.core_compact[0])

    best_rse = math.inf
    best_x = x.copy()
    since_improve = 0
    iters = 0
    for t in range(cfg.max_iters + 1):
        plan.fill_slots(views, ws)
        z = plan.run_buffered("f", plan.forward, base0, ws)
        resid = z - x_sq
        flat = resid.reshape(-1)
        cur = float(np.dot(flat, flat)) / denom
        if not math.isfinite(cur):
            raise SolverDivergenceError(t)
        if cur < best_rse * (1.0 - 1e-6):
            since_improve = 0
        else:
            since_improve += 1
        if cur < best_rse:
            best_rse = cur
            best_x[:] = x
        if best_rse <= cfg.early_stop_rse:
            break
        if since_improve >= cfg.patience:
            break
        if t == cfg.max_iters:
            break
        iters = t + 1
        envs = plan.run_envs(resid, ws)
        for v in range(n):
            np.multiply(envs[v], scale, out=g_views[v])
        m *= b1
        np.multiply(g, 1 - b1, out=tmp1)
        m += tmp1
        vv *= b2
        np.multiply(g, g, out=tmp1)
        tmp1 *= 1 - b2
        vv += tmp1
        np.divide(m, 1 - b1 ** (t + 1), out=tmp1)
        np.divide(vv, 1 - b2 ** (t + 1), out=tmp2)
        np.sqrt(tmp2, out=tmp2)
        tmp2 += eps
        np.divide(tmp1, tmp2, out=tmp1)
        tmp1 *= lr
        x -= tmp1

    best = CoreSet(tuple(best_x[offsets[v]:offsets[v + 1]].reshape(shapes[v])
                         for v in range(n)))
    return best, best_rse, iters


# --------------------------------------------------------------------- #
# Per-vertex TNSR dumps                                                  #
# --------------------------------------------------------------------- #

def save_cores(cores: CoreSet, directory, prefix: str = "core") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for v, c in enumerate(cores.cores):
        path = directory / f"{prefix}_{v}.tnsr"
        save_tnsr(DenseTensor.from_array(c), path)
        paths.append(path)
    return paths


def load_cores(directory, n_vertices: int, prefix: str = "core") -> CoreSet:
    directory = Path(directory)
    return CoreSet(tuple(load_tnsr(directory / f"{prefix}_{v}.tnsr").array
                         for v in range(n_vertices)))
