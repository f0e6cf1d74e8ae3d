"""Entity encoder: frontier growth, locality, dense-reference oracle."""
import numpy as np
import pytest

import relgraph.autodiff as ad
from relgraph import build_rdg
from relgraph.autodiff import Tensor
from relgraph.entity_encoder import (entity_attention, init_entity_states,
                                     propagate, propagate_batch,
                                     propagate_mixed, score_candidates,
                                     score_tensor)
from relgraph.params import EntityEncoderParams, ModelParams
from relgraph.relation_encoder import encode_relations

from conftest import random_graph


def model_for(rng, d=8, heads=2, rel_layers=2, ent_layers=3, act="relu"):
    return ModelParams.init(rng, d, heads, rel_layers, ent_layers, act, act)


def bfs_hops(kg, e_q, hops):
    """Entities reachable from e_q in <= hops directed steps."""
    frontier, seen = {e_q}, {e_q}
    for _ in range(hops):
        nxt = set()
        for e in frontier:
            for _, _, t in kg.out_index(e):
                nxt.add(t)
        frontier = nxt - seen
        seen |= nxt
    return seen


def dense_reference(kg, rq, e_q, r_q, params):
    """Dense full-matrix recomputation of the frontier propagation."""
    n, d = kg.entity_count, params.d
    visited = np.zeros(n, dtype=bool)
    visited[e_q] = True
    h = np.zeros((n, d))
    h[e_q] = 1.0
    act = {"relu": lambda x: np.maximum(x, 0.0), "tanh": np.tanh,
           "idd": lambda x: x}[params.activation]
    for layer in range(params.layers):
        agg = np.zeros((n, d))
        new_visited = visited.copy()
        for hd, r, tl in zip(kg.heads, kg.relations, kg.tails):
            if not visited[hd]:
                continue
            new_visited[tl] = True
            src = h[hd]
            rel = rq[r]
            w = params.w_att[layer].data
            pre = np.concatenate([src, rel, rq[r_q]]) @ w.T
            gate = 1.0 / (1.0 + np.exp(-(np.maximum(pre, 0.0)
                                         @ params.v_att[layer].data[:, 0])))
            agg[tl] += gate * (src + rel)
        h = act(agg @ params.w[layer].data.T)
        visited = new_visited
    return h, visited


class TestInit:
    def test_indicator(self):
        s = init_entity_states(5, 3, 4)
        assert np.allclose(s.data[3], 1.0)
        assert np.allclose(np.delete(s.data, 3, axis=0), 0.0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            init_entity_states(5, 5, 4)


class TestLocality:
    def test_states_zero_beyond_bfs_frontier(self, rng):
        # criterion-3 property: zero states outside hop-limited BFS
        for _ in range(25):
            kg = random_graph(rng, 12, 4, 30)
            rdg = build_rdg(kg)
            params = model_for(rng, ent_layers=int(rng.integers(1, 4)))
            e_q = int(rng.integers(kg.entity_count))
            r_q = int(rng.integers(kg.relation_count))
            ctx = propagate(kg, rdg, params.relation, params.entity, e_q, r_q)
            reach = bfs_hops(kg, e_q, params.entity.layers)
            assert set(np.flatnonzero(ctx.visited_final)) == reach
            for e in range(kg.entity_count):
                if e not in reach:
                    assert np.allclose(ctx.states.data[e], 0.0)

    def test_visited_monotone(self, rng):
        kg = random_graph(rng, 12, 4, 30)
        rdg = build_rdg(kg)
        params = model_for(rng)
        ctx = propagate(kg, rdg, params.relation, params.entity, 0, 0)
        for earlier, later in zip(ctx.visited, ctx.visited[1:]):
            assert np.all(later[earlier])


class TestDenseOracle:
    def test_matches_dense_reference(self, rng):
        for _ in range(20):
            kg = random_graph(rng, 10, 3, 25)
            rdg = build_rdg(kg)
            params = model_for(rng, ent_layers=2,
                               act=["relu", "tanh", "idd"][int(rng.integers(3))])
            e_q = int(rng.integers(kg.entity_count))
            r_q = int(rng.integers(kg.relation_count))
            rq = encode_relations(rdg, r_q, params.relation).data
            ctx = propagate(kg, rdg, params.relation, params.entity, e_q, r_q)
            ref, ref_visited = dense_reference(kg, rq, e_q, r_q, params.entity)
            assert np.array_equal(ctx.visited_final, ref_visited)
            assert np.allclose(ctx.states.data, ref, rtol=1e-9, atol=1e-12)


class TestBatchEquivalence:
    def test_batch_equals_per_query(self, rng):
        for _ in range(10):
            kg = random_graph(rng, 10, 3, 30)
            rdg = build_rdg(kg)
            params = model_for(rng)
            r_q = int(rng.integers(kg.relation_count))
            eqs = [int(rng.integers(kg.entity_count)) for _ in range(4)]
            excl = [np.array([int(rng.integers(kg.fact_count))]) for _ in eqs]
            bctx = propagate_batch(kg, rdg, params.relation, params.entity,
                                   eqs, r_q, exclude_facts=excl)
            scores = score_tensor(bctx, params.entity).data[:, 0]
            for b, e in enumerate(eqs):
                ctx = propagate(kg, rdg, params.relation, params.entity, e, r_q,
                                exclude_facts=excl[b])
                sl = bctx.query_slice(b)
                assert np.array_equal(ctx.visited_final, bctx.visited[sl])
                own = score_tensor(ctx, params.entity).data[:, 0]
                assert np.allclose(own, scores[sl], atol=1e-12)


class TestMixedBatchEquivalence:
    def test_mixed_equals_per_query(self, rng):
        for _ in range(10):
            kg = random_graph(rng, 10, 3, 30)
            rdg = build_rdg(kg)
            params = model_for(rng)
            eqs = [int(rng.integers(kg.entity_count)) for _ in range(5)]
            rqs = [int(rng.integers(kg.relation_count)) for _ in eqs]
            excl = [np.array([int(rng.integers(kg.fact_count))]) for _ in eqs]
            mctx = propagate_mixed(kg, rdg, params.relation, params.entity,
                                   eqs, rqs, exclude_facts=excl)
            scores = score_tensor(mctx, params.entity).data[:, 0]
            for b, (e, r) in enumerate(zip(eqs, rqs)):
                ctx = propagate(kg, rdg, params.relation, params.entity, e, r,
                                exclude_facts=excl[b])
                sl = mctx.query_slice(b)
                assert np.array_equal(ctx.visited_final, mctx.visited[sl])
                own = score_tensor(ctx, params.entity).data[:, 0]
                assert np.allclose(own, scores[sl], atol=1e-12)

    def test_length_mismatch_rejected(self, rng):
        kg = random_graph(rng, 6, 2, 10)
        rdg = build_rdg(kg)
        params = model_for(rng)
        with pytest.raises(ValueError):
            propagate_mixed(kg, rdg, params.relation, params.entity, [0, 1], [0])


class TestScoring:
    def test_candidates_sorted_desc_then_id(self, rng):
        kg = random_graph(rng, 10, 3, 40)
        rdg = build_rdg(kg)
        params = model_for(rng)
        ctx = propagate(kg, rdg, params.relation, params.entity, 0, 0)
        ranked = score_candidates(ctx, params.entity)
        scores = [s for _, s in ranked]
        assert scores == sorted(scores, reverse=True)
        reached = set(np.flatnonzero(ctx.visited_final))
        assert {e for e, _ in ranked} == reached

    def test_excluded_fact_blocks_message(self, rng):
        # a single-edge graph: masking the only fact stops propagation
        from relgraph import Triple, build_graph
        kg = build_graph([Triple(0, 0, 1)], entity_count=2, relation_count=1)
        rdg = build_rdg(kg)
        params = model_for(rng, ent_layers=1)
        ctx = propagate(kg, rdg, params.relation, params.entity, 0, 0,
                        exclude_facts=np.array([0, 1]))
        assert not ctx.visited_final[1]
        assert np.allclose(ctx.states.data, 0.0)


class TestAttention:
    def test_gate_in_unit_interval(self, rng):
        params = EntityEncoderParams.init(rng, 6, 2)
        h = Tensor(rng.normal(size=(7, 6)))
        r = Tensor(rng.normal(size=(7, 6)))
        q = Tensor(rng.normal(size=(1, 6)))
        gate = entity_attention(h, r, q, params, 0).data
        assert gate.shape == (7, 1)
        assert np.all((gate > 0) & (gate < 1))
