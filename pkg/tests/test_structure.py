"""Tests for structure encoding, permutations, neighborhoods and metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnale.structure import (TnStructure, VertexPermutation, apply_permutation,
                             compression_ratio, efficiency, graph_neighborhood,
                             param_count, rank_candidates,
                             ranks_to_padded_vector)

from conftest import fc_structure, ring_template


def crossed_tr4(ranks=(2, 3, 4, 5)):
    """Order-4 ring on edges {0-2, 0-3, 1-2, 1-3} (the crossed layout)."""
    edges = frozenset({(0, 2), (0, 3), (1, 2), (1, 3)})
    bond = np.ones((4, 4), dtype=np.int64) - np.eye(4, dtype=np.int64)
    s = TnStructure((3, 3, 3, 3), bond, edges)
    return s.with_ranks(ranks)


def standard_tr4(ranks=(2, 3, 4, 5)):
    """Order-4 ring on edges {0-1, 1-2, 2-3, 0-3}; ranks in canonical order
    (0,1)->r0, (0,3)->r1, (1,2)->r2, (2,3)->r3."""
    return ring_template(4).with_ranks(ranks)


class TestPaddedVector:
    def test_crossed_layout_display(self):
        s = crossed_tr4((2, 3, 4, 5))
        assert ranks_to_padded_vector(s).tolist() == [0, 2, 3, 4, 5, 0]

    def test_standard_layout_display(self):
        # same rank multiset on the swapped ring: pairs (0,1)=2, (1,2)=3,
        # (2,3)=4, (0,3)=5
        s = standard_tr4((2, 5, 3, 4))
        assert ranks_to_padded_vector(s).tolist() == [2, 0, 5, 3, 0, 4]

    def test_fully_connected_verbatim(self):
        s = fc_structure(4).with_ranks([2, 3, 4, 5, 6, 7])
        assert ranks_to_padded_vector(s).tolist() == [2, 3, 4, 5, 6, 7]

    @given(st.lists(st.integers(1, 9), min_size=4, max_size=4),
           st.lists(st.integers(1, 9), min_size=4, max_size=4))
    @settings(max_examples=50, deadline=None)
    def test_injective_for_fixed_template(self, r1, r2):
        a = standard_tr4(r1)
        b = standard_tr4(r2)
        if r1 != r2:
            assert ranks_to_padded_vector(a).tolist() != ranks_to_padded_vector(b).tolist()
        else:
            assert ranks_to_padded_vector(a).tolist() == ranks_to_padded_vector(b).tolist()


class TestApplyPermutation:
    def test_identity(self):
        s = standard_tr4()
        out = apply_permutation(s, VertexPermutation.identity(4))
        assert out == s

    def test_round_trip(self, rng):
        s = standard_tr4((4, 2, 5, 3))
        pi = VertexPermutation((2, 0, 3, 1))
        back = apply_permutation(apply_permutation(s, pi), pi.inverse())
        assert back == s
        assert back.ranks().tolist() == s.ranks().tolist()

    def test_swap_1_2_gives_crossed_layout(self):
        s = standard_tr4()
        out = apply_permutation(s, VertexPermutation.swap(4, 1, 2))
        assert out.template_edges == frozenset({(0, 2), (0, 3), (1, 2), (1, 3)})

    def test_bond_values_follow(self):
        s = standard_tr4((2, 5, 3, 4))   # (0,1)=2 (0,3)=5 (1,2)=3 (2,3)=4
        pi = VertexPermutation.swap(4, 1, 2)
        out = apply_permutation(s, pi)
        assert out.bond[pi(0), pi(1)] == 2
        assert out.bond[pi(2), pi(3)] == 4

    def test_preserves_param_count(self, rng):
        s = standard_tr4((4, 2, 5, 3))
        for _ in range(10):
            pi = VertexPermutation(tuple(rng.permutation(4)))
            out = apply_permutation(s, pi)
            assert param_count(out) == param_count(s)
            assert compression_ratio(out) == compression_ratio(s)

    def test_non_bijection_rejected(self):
        with pytest.raises(ValueError):
            VertexPermutation((0, 0, 1, 2))


class TestGraphNeighborhood:
    @pytest.mark.parametrize("n", range(2, 9))
    def test_sizes(self, n):
        assert len(graph_neighborhood(ring_template(n))) == n * (n - 1) // 2

    def test_two_vertex_neighbor_equals_original(self):
        s = ring_template(2).with_ranks([3])
        (nb,) = graph_neighborhood(s)
        assert nb == s

    def test_single_transposition_difference(self):
        s = standard_tr4((4, 2, 5, 3))
        for nb, pi in zip(graph_neighborhood(s),
                          [(i, j) for i in range(4) for j in range(i + 1, 4)]):
            swap = VertexPermutation.swap(4, *pi)
            assert nb == apply_permutation(s, swap)
            assert apply_permutation(nb, swap) == s


class TestRankCandidates:
    def test_interior(self):
        assert rank_candidates(3, 1, 1, 7) == [2, 3, 4]

    def test_clamped_low(self):
        assert rank_candidates(1, 2, 1, 7) == [1, 2, 3]

    def test_clamped_high(self):
        assert rank_candidates(7, 2, 1, 7) == [5, 6, 7]

    def test_radius_zero(self):
        assert rank_candidates(4, 0, 1, 7) == [4]

    def test_empty_range(self):
        with pytest.raises(ValueError):
            rank_candidates(3, 1, 5, 4)

    @given(st.integers(1, 9), st.integers(0, 4))
    @settings(max_examples=40, deadline=None)
    def test_center_present(self, center, radius):
        cands = rank_candidates(center, radius, 1, 9)
        assert center in cands
        assert cands == sorted(cands)
        assert len(cands) <= 2 * radius + 1


class TestCounts:
    def test_param_count_tr4(self):
        # ranks 2,3,4,5 along the ring cycle 0-1-2-3-0: canonical edge
        # order (0,1),(0,3),(1,2),(2,3) receives (2,5,3,4)
        s = standard_tr4((2, 5, 3, 4))
        assert param_count(s) == 144

    def test_param_count_all_ones(self):
        s = standard_tr4((1, 1, 1, 1))
        assert param_count(s) == 12

    def test_param_count_single_vertex(self):
        s = TnStructure((81,), np.zeros((1, 1), dtype=np.int64), frozenset())
        assert param_count(s) == 81

    def test_compression_ratio_tr4(self):
        assert compression_ratio(standard_tr4((2, 5, 3, 4))) == 0.5625

    def test_compression_ratio_all_ones(self):
        assert compression_ratio(standard_tr4((1, 1, 1, 1))) == pytest.approx(81 / 12)

    def test_compression_ratio_trivial(self):
        s = TnStructure((81,), np.zeros((1, 1), dtype=np.int64), frozenset())
        assert compression_ratio(s) == 1.0


class TestEfficiency:
    def test_equal_structures(self):
        s = standard_tr4((2, 3, 4, 5))
        assert efficiency(s, s) == 1.0

    def test_ratio(self):
        truth = standard_tr4((2, 5, 3, 4))      # 144 params
        found = standard_tr4((1, 2, 2, 1))
        assert efficiency(found, truth) == pytest.approx(144 / param_count(found))

    def test_incompatible_dims(self):
        with pytest.raises(ValueError):
            efficiency(ring_template(4, 2).with_ranks([1] * 4),
                       ring_template(4, 3).with_ranks([1] * 4))

    def test_permutation_invariant(self, rng):
        truth = standard_tr4((2, 3, 4, 5))
        pi = VertexPermutation((3, 1, 0, 2))
        assert efficiency(apply_permutation(truth, pi), truth) == 1.0


class TestStructureBasics:
    def test_symmetry_enforced(self):
        bond = np.array([[0, 2], [3, 0]])
        with pytest.raises(ValueError):
            TnStructure((3, 3), bond, None)

    def test_nonzero_diagonal_rejected(self):
        bond = np.array([[1, 2], [2, 0]])
        with pytest.raises(ValueError):
            TnStructure((3, 3), bond, None)

    def test_non_template_bond_must_be_one(self):
        bond = np.array([[0, 2, 1], [2, 0, 2], [1, 2, 0]])
        with pytest.raises(ValueError):
            TnStructure((3, 3, 3), bond, frozenset({(0, 1)}))

    def test_json_round_trip(self):
        s = standard_tr4((4, 2, 5, 3))
        back = TnStructure.from_json(s.to_json())
        assert back == s
        assert back.template_edges == s.template_edges

    def test_json_round_trip_fully_connected(self):
        s = fc_structure(3).with_ranks([2, 3, 4])
        back = TnStructure.from_json(s.to_json())
        assert back == s
        assert back.template_edges is None

    def test_canonical_edge_order(self):
        s = fc_structure(4)
        assert s.edges() == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

    def test_core_shape_rule(self):
        s = standard_tr4((2, 3, 4, 5))
        # vertex 0: phys 3, bonds to 1,2,3 = 2,1,3
        assert s.core_shape(0) == (3, 2, 1, 3)
        # vertex 2: bonds to 0,1,3 = 1,4,5
        assert s.core_shape(2) == (3, 1, 4, 5)
