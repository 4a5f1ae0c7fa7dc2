"""Brute-force exactness, HNSW structure/recall/determinism, persistence."""

import math

import numpy as np
import pytest

from hybrid_retriever.ann import (
    BruteForceIndex,
    HnswIndex,
    HnswParams,
    SearchHit,
    assign_level,
    bf_search,
    select_diverse_neighbors,
)
from hybrid_retriever.vectors import Space, SparseVector, dense


def l2_space():
    return Space("l2_dense")


class TestBruteForce:
    def test_empty_index(self):
        assert bf_search(BruteForceIndex(l2_space()), dense([1.0]), 3) == []

    def test_singleton(self):
        index = BruteForceIndex(l2_space())
        index.add(dense([4.0]))
        for q in ([0.0], [100.0]):
            hits = bf_search(index, dense(q), 5)
            assert [h.internal_id for h in hits] == [0]

    def test_nearer_point_wins(self):
        index = BruteForceIndex(l2_space())
        index.add_many([dense([0.0]), dense([10.0])])
        hits = bf_search(index, dense([1.0]), 1)
        assert hits[0].internal_id == 0
        assert hits[0].score == 1.0

    def test_kind_mismatch(self):
        index = BruteForceIndex(l2_space())
        index.add(dense([0.0]))
        with pytest.raises(ValueError):
            bf_search(index, SparseVector.from_dict({0: 1.0}), 1)

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(42)
        space = l2_space()
        index = BruteForceIndex(space)
        points = [dense(rng.normal(size=8)) for _ in range(50)]
        index.add_many(points)
        for _ in range(10):
            q = dense(rng.normal(size=8))
            hits = bf_search(index, q, 5)
            oracle = sorted(
                ((space.score(p, q), i) for i, p in enumerate(points)),
                key=lambda t: (t[0], t[1]))[:5]
            assert [(h.score, h.internal_id) for h in hits] == oracle

    def test_tie_breaks_by_lower_id(self):
        index = BruteForceIndex(l2_space())
        index.add_many([dense([1.0]), dense([1.0]), dense([1.0])])
        hits = bf_search(index, dense([1.0]), 3)
        assert [h.internal_id for h in hits] == [0, 1, 2]

    def test_similarity_orientation(self):
        index = BruteForceIndex(Space("ip_sparse"))
        index.add_many([SparseVector.from_dict({1: 1.0}),
                        SparseVector.from_dict({1: 5.0})])
        hits = bf_search(index, SparseVector.from_dict({1: 1.0}), 2)
        assert [h.internal_id for h in hits] == [1, 0]


class TestAssignLevel:
    def test_u_one_gives_zero(self):
        assert assign_level(1.0, 0.5) == 0

    def test_hand_values(self):
        assert assign_level(1 / 16, 1 / math.log(16)) == 1
        assert assign_level(math.exp(-3), 1.0) == 3

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            assign_level(0.0, 1.0)
        with pytest.raises(ValueError):
            assign_level(0.5, 0.0)


class TestSelectNeighbors:
    def _pair_dist(self, points):
        def fn(i, ids):
            return np.array([abs(points[i] - points[j]) for j in ids])
        return fn

    def test_all_kept_when_few_and_spread(self):
        # base at 0; candidates at 1, -2, 4: mutually farther than from base
        points = {1: 1.0, 2: -2.0, 3: 4.0}
        cands = [(1.0, 1), (2.0, 2), (4.0, 3)]
        assert select_diverse_neighbors(cands, 5, self._pair_dist(points)) == [1, 2, 3]

    def test_coincident_candidate_pruned_then_refilled(self):
        # candidates 1 and 2 coincide at x=1; 3 sits at x=-3
        points = {1: 1.0, 2: 1.0, 3: -3.0}
        cands = [(1.0, 1), (1.0, 2), (3.0, 3)]
        assert select_diverse_neighbors(cands, 2, self._pair_dist(points)) == [1, 3]

    def test_m_one_takes_nearest(self):
        points = {1: 1.0, 2: 2.0}
        cands = [(1.0, 1), (2.0, 2)]
        assert select_diverse_neighbors(cands, 1, self._pair_dist(points)) == [1]

    def test_pruned_fill_when_too_few_survive(self):
        points = {1: 1.0, 2: 1.0, 3: 1.0}
        cands = [(1.0, 1), (1.0, 2), (1.0, 3)]
        assert select_diverse_neighbors(cands, 2, self._pair_dist(points)) == [1, 2]


def build_index(points, space=None, seed=0, **kw):
    index = HnswIndex(space or l2_space(), HnswParams(seed=seed, **kw))
    index.add_many(points)
    return index


class TestHnswConstruction:
    def test_first_insert_becomes_entry(self):
        index = HnswIndex(l2_space(), HnswParams(seed=1))
        nid = index.add(dense([1.0, 2.0]))
        assert index.entry_point == nid
        assert index.max_level == index.node_level(nid)

    def test_duplicate_vectors_get_distinct_ids(self):
        index = HnswIndex(l2_space())
        a = index.add(dense([1.0]))
        b = index.add(dense([1.0]))
        assert a != b
        hits = index.search(dense([1.0]), 2, ef=10)
        assert {h.internal_id for h in hits} == {a, b}

    def test_structural_invariants_after_inserts(self):
        rng = np.random.default_rng(5)
        params = HnswParams(M=8, Mmax0=16, ef_construction=50, seed=3)
        index = HnswIndex(l2_space(), params)
        index.add_many(dense(rng.normal(size=6)) for _ in range(200))
        for node in range(len(index)):
            level = index.node_level(node)
            for lvl in range(level + 1):
                nbrs = index.neighbors(node, lvl)
                cap = params.Mmax0 if lvl == 0 else params.M
                assert len(nbrs) <= cap
                assert len(set(nbrs)) == len(nbrs)
                assert all(0 <= n < len(index) for n in nbrs)
                # adjacency stays within-level
                assert all(index.node_level(n) >= lvl for n in nbrs)
        assert index.node_level(index.entry_point) == index.max_level
        # level 0 holds everyone and (with these params) stays connected
        reached = {index.entry_point}
        frontier = [index.entry_point]
        while frontier:
            nxt = []
            for n in frontier:
                for nb in index.neighbors(n, 0):
                    if nb not in reached:
                        reached.add(nb)
                        nxt.append(nb)
            frontier = nxt
        assert reached == set(range(len(index)))

    def test_frozen_index_rejects_inserts(self):
        index = build_index([dense([0.0])])
        index.freeze()
        with pytest.raises(RuntimeError):
            index.add(dense([1.0]))


class TestHnswSearch:
    def test_empty_index(self):
        assert HnswIndex(l2_space()).search(dense([1.0]), 3) == []

    def test_singleton(self):
        index = build_index([dense([7.0, 7.0])])
        hits = index.search(dense([0.0, 0.0]), 5)
        assert [h.internal_id for h in hits] == [0]

    def test_results_are_valid_and_sorted(self):
        rng = np.random.default_rng(9)
        index = build_index([dense(rng.normal(size=8)) for _ in range(300)], seed=2)
        for _ in range(20):
            hits = index.search(dense(rng.normal(size=8)), 10, ef=50)
            ids = [h.internal_id for h in hits]
            assert len(set(ids)) == len(ids)
            assert all(0 <= i < 300 for i in ids)
            scores = [h.score for h in hits]
            assert scores == sorted(scores)  # distance orientation: ascending

    def test_exact_on_200_points(self):
        # spec-pinned configuration: N=200, 16-d, M=16, ef=200, k=10
        rng = np.random.default_rng(1234)
        points = [dense(rng.normal(size=16)) for _ in range(200)]
        index = build_index(points, seed=7)
        bf = BruteForceIndex(l2_space())
        bf.add_many(points)
        for _ in range(20):
            q = dense(rng.normal(size=16))
            approx = {h.internal_id for h in index.search(q, 10, ef=200)}
            exact = {h.internal_id for h in bf.search(q, 10)}
            assert approx == exact

    def test_self_query_inner_product(self):
        rng = np.random.default_rng(21)
        space = Space("ip_dense")
        points = [dense(rng.normal(size=8)) for _ in range(100)]
        # give one point the largest self-dot so it must rank first for itself
        points[37] = dense(points[37] * 10.0)
        index = build_index(points, space=space, seed=4)
        bf = BruteForceIndex(space)
        bf.add_many(points)
        assert bf.search(points[37], 1)[0].internal_id == 37
        hits = index.search(points[37], 1, ef=100)
        assert hits[0].internal_id == 37

    def test_recall_monotone_in_ef(self):
        dims, n, k = 16, 800, 10
        recalls = {10: [], 100: []}
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            points = [dense(rng.normal(size=dims)) for _ in range(n)]
            index = build_index(points, seed=seed)
            bf = BruteForceIndex(l2_space())
            bf.add_many(points)
            for _ in range(10):
                q = dense(rng.normal(size=dims))
                exact = {h.internal_id for h in bf.search(q, k)}
                for ef in (10, 100):
                    got = {h.internal_id for h in index.search(q, k, ef=ef)}
                    recalls[ef].append(len(got & exact) / k)
        assert np.mean(recalls[100]) >= np.mean(recalls[10])

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(33)
        pts = [dense(rng.normal(size=8)) for _ in range(150)]
        a = build_index(pts, seed=11)
        b = build_index(pts, seed=11)
        assert a.entry_point == b.entry_point
        assert a.max_level == b.max_level
        assert a.links_snapshot() == b.links_snapshot()
        q = dense(rng.normal(size=8))
        assert a.search(q, 10, ef=60) == b.search(q, 10, ef=60)


class TestHnswSparse:
    def test_sparse_inner_product_space(self):
        rng = np.random.default_rng(17)
        space = Space("ip_sparse")
        docs = []
        for _ in range(120):
            ids = sorted(rng.choice(50, size=6, replace=False).tolist())
            docs.append(SparseVector.from_pairs(
                (i, float(rng.uniform(0.1, 2.0))) for i in ids))
        index = build_index(docs, space=space, seed=5)
        bf = BruteForceIndex(space)
        bf.add_many(docs)
        hit_rate = 0
        for _ in range(15):
            ids = sorted(rng.choice(50, size=4, replace=False).tolist())
            q = SparseVector.from_pairs((i, 1.0) for i in ids)
            exact = {h.internal_id for h in bf.search(q, 5)}
            got = {h.internal_id for h in index.search(q, 5, ef=120)}
            hit_rate += len(got & exact) / 5
        assert hit_rate / 15 >= 0.9


class TestPersistence:
    def test_hnsw_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        pts = [dense(rng.normal(size=8)) for _ in range(80)]
        index = build_index(pts, seed=6)
        path = str(tmp_path / "g.hnsw")
        index.save(path)
        loaded = HnswIndex.load(path)
        assert loaded.params == HnswParams(level_mult=index.params.resolved_mult(),
                                           seed=index.params.seed)
        assert loaded.links_snapshot() == index.links_snapshot()
        assert loaded.entry_point == index.entry_point
        q = dense(rng.normal(size=8))
        assert loaded.search(q, 5, ef=40) == index.search(q, 5, ef=40)

    def test_bruteforce_round_trip(self, tmp_path):
        index = BruteForceIndex(Space("ip_sparse"))
        index.add_many([SparseVector.from_dict({1: 2.0, 7: 1.5}),
                        SparseVector.from_dict({2: 1.0})])
        path = str(tmp_path / "b.ann")
        index.save(path)
        loaded = BruteForceIndex.load(path)
        assert loaded.space == index.space
        assert loaded.vectors == index.vectors

    def test_byte_identical_saves(self, tmp_path):
        rng = np.random.default_rng(8)
        pts = [dense(rng.normal(size=4)) for _ in range(40)]
        p1, p2 = str(tmp_path / "a"), str(tmp_path / "b")
        build_index(pts, seed=9).save(p1)
        build_index(pts, seed=9).save(p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "bad.hnsw"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            HnswIndex.load(str(path))
