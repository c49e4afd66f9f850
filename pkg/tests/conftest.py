"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from tnale.objective import EvaluationRecord
from tnale.solver import CoreSet
from tnale.structure import TnStructure, compression_ratio
from tnale.tensor import contract_network


def ring_template(n, phys_dim=3):
    """Fully specified ring template with all bonds at 1."""
    edges = frozenset(tuple(sorted((i, (i + 1) % n))) for i in range(n)
                      if i != (i + 1) % n)
    bond = np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)
    return TnStructure((phys_dim,) * n, bond, edges)


def fc_structure(n, phys_dim=3):
    bond = np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)
    return TnStructure((phys_dim,) * n, bond, None)


def random_cores(s, rng, std=1.0):
    return CoreSet(tuple(rng.normal(0.0, std, size=s.core_shape(v))
                         for v in range(s.n_vertices)))


def make_target(s, seed=0, std=1.0):
    rng = np.random.default_rng(seed)
    cores = random_cores(s, rng, std)
    return contract_network(s, cores), cores


class ToyEvaluator:
    """Evaluator-shaped wrapper around a pure function of the rank vector.

    Lets search code run against a deterministic objective without any
    tensor solves; mirrors the caching and counting semantics.
    """

    def __init__(self, template, fn):
        self.template = template
        self.fn = fn
        self.records = {}
        self.log = []
        self.count = 0
        self.target = type("T", (), {"dims": template.squeezed_dims()})()
        self.cache = self
        self.calls = []

    def cores_for(self, s):
        return None

    @property
    def eval_count(self):
        return self.count

    def warm_from(self, src, dst):
        return None

    def evaluate(self, s, warm=None):
        key = s.canonical_key()
        if key in self.records:
            return self.records[key]
        self.count += 1
        val = float(self.fn(tuple(int(r) for r in s.ranks()), s))
        rec = EvaluationRecord(structure=s, rse=0.0,
                               compression_ratio=compression_ratio(s),
                               objective=val, eval_index=self.count,
                               estimated=False, solver_iters=0)
        self.records[key] = rec
        self.log.append(rec)
        self.calls.append(tuple(int(r) for r in s.ranks()))
        return rec

    def note_estimated(self, s, objective):
        rec = EvaluationRecord(structure=s, rse=float("nan"),
                               compression_ratio=compression_ratio(s),
                               objective=float(objective), eval_index=self.count,
                               estimated=True, solver_iters=0)
        self.log.append(rec)
        return rec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
