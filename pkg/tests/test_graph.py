import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camdag.errors import CycleError, DimensionMismatch
from camdag.graph import (
    Dag,
    EdgeCandidateMask,
    Ordering,
    d_separated,
    descendants,
    from_edge_list,
    from_json,
    full_dag_of_order,
    shd,
    sid,
    to_edge_list,
    to_json,
    topological_orders_contains,
)

from oracles import (
    closure_by_squaring,
    orders_containing,
    random_dag_edges,
    shd_pairwise,
    sid_linear_oracle,
)


def chain(p=3):
    return Dag(p, frozenset((i, i + 1) for i in range(p - 1)))


@st.composite
def dags(draw, max_p=8):
    p = draw(st.integers(1, max_p))
    perm = draw(st.permutations(range(p)))
    pairs = [(perm[a], perm[b]) for a in range(p) for b in range(a + 1, p)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag(p, frozenset(e for e, k in zip(pairs, keep) if k))


class TestDagInvariants:
    def test_rejects_cycle(self):
        with pytest.raises(CycleError):
            Dag(3, frozenset({(0, 1), (1, 2), (2, 0)}))

    def test_rejects_self_loop_and_range(self):
        with pytest.raises(ValueError):
            Dag(2, frozenset({(1, 1)}))
        with pytest.raises(ValueError):
            Dag(2, frozenset({(0, 2)}))

    def test_ordering_must_be_permutation(self):
        with pytest.raises(ValueError):
            Ordering((0, 0, 1))

    def test_topological_order_lowest_index_first(self):
        g = Dag(4, frozenset({(3, 0), (2, 1)}))
        assert g.topological_order() == [2, 1, 3, 0]


class TestOrders:
    def test_empty_dag_any_ordering(self):
        for perm in itertools.permutations(range(3)):
            assert topological_orders_contains(Dag.empty(3), perm)

    def test_chain(self):
        assert topological_orders_contains(chain(), (0, 1, 2))
        assert not topological_orders_contains(chain(), (2, 1, 0))

    def test_collider_matches_enumeration(self):
        g = Dag(3, frozenset({(0, 2), (1, 2)}))
        brute = orders_containing(3, g.edges)
        assert sorted(brute) == [(0, 1, 2), (1, 0, 2)]
        for perm in itertools.permutations(range(3)):
            assert topological_orders_contains(g, perm) == (perm in brute)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            topological_orders_contains(chain(), (0, 1))

    def test_full_dag_of_order(self):
        assert full_dag_of_order((0, 1)).edges == {(0, 1)}
        assert full_dag_of_order((2, 0, 1)).edges == {(2, 0), (2, 1), (0, 1)}
        assert len(full_dag_of_order(range(5))) == 10

    @given(st.integers(1, 8).flatmap(lambda p: st.permutations(range(p))))
    def test_full_dag_consistent_with_its_order(self, perm):
        g = full_dag_of_order(perm)
        assert g.topological_order() is not None
        assert topological_orders_contains(g, perm)


class TestDescendants:
    def test_chain_and_empty(self):
        assert descendants(chain(), 0) == {1, 2}
        assert descendants(Dag.empty(4), 2) == set()

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            descendants(chain(), 5)

    def test_matches_matrix_closure(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            g = Dag(6, frozenset(random_dag_edges(rng, 6, 0.4)))
            closure = closure_by_squaring(g.adjacency())
            for v in range(6):
                assert descendants(g, v) == set(np.flatnonzero(closure[v]).tolist())


class TestShd:
    def test_small_cases(self):
        g = Dag(2, frozenset({(0, 1)}))
        assert shd(g, g) == 0
        assert shd(g, Dag(2, frozenset({(1, 0)}))) == 1
        assert shd(g, Dag.empty(2)) == 1

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            g = Dag(6, frozenset(random_dag_edges(rng, 6, 0.4)))
            h = Dag(6, frozenset(random_dag_edges(rng, 6, 0.4)))
            assert shd(g, h) == shd_pairwise(g.adjacency(), h.adjacency())

    @given(dags(), dags())
    def test_metric_properties(self, g, h):
        if g.p != h.p:
            with pytest.raises(DimensionMismatch):
                shd(g, h)
            return
        assert shd(g, h) == shd(h, g)
        assert (shd(g, h) == 0) == (g.edges == h.edges)
        assert shd(g, h) <= g.p * (g.p - 1) // 2


class TestDSeparation:
    def test_textbook_structures(self):
        ch = chain()
        assert not d_separated(ch, {0}, {2}, set())
        assert d_separated(ch, {0}, {2}, {1})
        collider = Dag(3, frozenset({(0, 2), (1, 2)}))
        assert d_separated(collider, {0}, {1}, set())
        assert not d_separated(collider, {0}, {1}, {2})
        # conditioning on a descendant of a collider opens it
        g = Dag(4, frozenset({(0, 2), (1, 2), (2, 3)}))
        assert not d_separated(g, {0}, {1}, {3})


class TestSid:
    def test_identity_and_true_order(self):
        assert sid(chain(), chain()) == 0
        assert sid(chain(), full_dag_of_order((0, 1, 2))) == 0

    def test_chain_vs_empty(self):
        expected = sid_linear_oracle(3, {(0, 1), (1, 2)}, set(), np.random.default_rng(0))
        assert expected == 3
        assert sid(chain(), Dag.empty(3)) == expected

    def test_matches_linear_sem_oracle(self):
        rng = np.random.default_rng(11)
        for trial in range(60):
            p = int(rng.integers(3, 7))
            g = random_dag_edges(rng, p, rng.uniform(0.2, 0.8))
            h = random_dag_edges(rng, p, rng.uniform(0.2, 0.8))
            oracle = sid_linear_oracle(p, g, h, np.random.default_rng(trial))
            assert sid(Dag(p, frozenset(g)), Dag(p, frozenset(h))) == oracle

    @settings(max_examples=100)
    @given(dags())
    def test_self_distance_zero(self, g):
        assert sid(g, g) == 0

    @settings(max_examples=100)
    @given(dags(), st.randoms(use_true_random=False))
    def test_true_order_has_zero_sid(self, g, rnd):
        order = g.topological_order()
        assert sid(g, full_dag_of_order(order)) == 0
        # any other order containing g works as well
        perm = list(range(g.p))
        rnd.shuffle(perm)
        if topological_orders_contains(g, perm):
            assert sid(g, full_dag_of_order(perm)) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sid(chain(3), chain(4))


class TestEdgeCandidateMask:
    def test_diagonal_false_and_guard(self):
        m = EdgeCandidateMask(3)
        assert not m.allowed.diagonal().any()
        m.add_edge(0, 1)
        m.add_edge(1, 2)
        assert not m.allowed[2, 0] and not m.allowed[1, 0] and not m.allowed[2, 1]
        with pytest.raises(CycleError):
            m.add_edge(2, 0)

    @settings(max_examples=50)
    @given(st.integers(2, 8), st.randoms(use_true_random=False))
    def test_admissible_additions_stay_acyclic(self, p, rnd):
        m = EdgeCandidateMask(p)
        edges = set()
        while m.any():
            cand = list(zip(*np.nonzero(m.allowed)))
            k, j = cand[rnd.randrange(len(cand))]
            m.add_edge(int(k), int(j))
            edges.add((int(k), int(j)))
            Dag(p, frozenset(edges))  # raises on a cycle
            closure = closure_by_squaring(Dag(p, frozenset(edges)).adjacency())
            assert not (m.allowed & closure.T).any()
        assert len(edges) == p * (p - 1) // 2


class TestSerialization:
    def test_edge_list_roundtrip(self):
        g = Dag(4, frozenset({(2, 0), (0, 1)}))
        text = to_edge_list(g)
        assert text == "0 1\n2 0\n"
        assert from_edge_list(text, p=4) == g

    def test_json_roundtrip(self):
        g = Dag(5, frozenset({(3, 4)}))
        doc = json.loads(to_json(g))
        assert doc == {"p": 5, "edges": [[3, 4]]}
        assert from_json(to_json(g)) == g
