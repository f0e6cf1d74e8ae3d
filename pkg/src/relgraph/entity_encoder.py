"""Query-anchored entity message passing over the fact graph.

Propagation starts from the query head entity and only follows facts
whose source is already visited, so each layer grows a frontier and the
states stay exactly zero beyond the current hop distance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, gather_rows, segment_sum, slice_rows
from .kg import KnowledgeGraph
from .params import EntityEncoderParams, RelationEncoderParams
from .rdg import RelationDependencyGraph
from .relation_encoder import encode_relations


@dataclass
class QueryContext:
    """Propagation state for a single (e_q, r_q) query."""

    e_q: int
    r_q: int
    rq_embeddings: Tensor = field(repr=False)     # (relation_count, d)
    visited: list[np.ndarray] = field(repr=False)  # boolean masks per layer
    states: Tensor = field(repr=False)             # (entity_count, d) current layer

    @property
    def visited_final(self) -> np.ndarray:
        return self.visited[-1]


def entity_attention(h_source: Tensor, h_rel: Tensor, h_query_rel: Tensor,
                     params: EntityEncoderParams, layer: int) -> Tensor:
    """Per-edge gate in (0, 1): sigmoid(v . relu(W [src || rel || qrel]))."""
    d = params.d
    w = params.w_att[layer]
    w_src = slice_rows(w.T, 0, d).T
    w_rel = slice_rows(w.T, d, 2 * d).T
    w_qr = slice_rows(w.T, 2 * d, 3 * d).T
    pre = h_source @ w_src.T + h_rel @ w_rel.T + h_query_rel @ w_qr.T
    return ad.sigmoid(ad.relu(pre) @ params.v_att[layer])


def init_entity_states(entity_count: int, e_q: int, d: int) -> Tensor:
    if not 0 <= e_q < entity_count:
        raise ValueError(f"query entity {e_q} out of range [0, {entity_count})")
    states = np.zeros((entity_count, d))
    states[e_q] = 1.0
    return Tensor(states)


def entity_layer(ctx: QueryContext, kg: KnowledgeGraph,
                 params: EntityEncoderParams, layer: int,
                 exclude_facts: np.ndarray | None = None) -> QueryContext:
    visited = ctx.visited[-1]
    usable = visited[kg.heads]
    if exclude_facts is not None and len(exclude_facts):
        usable = usable.copy()
        usable[exclude_facts] = False
    active = np.flatnonzero(usable)
    new_visited = visited.copy()
    if len(active) == 0:
        next_states = Tensor(np.zeros_like(ctx.states.data))
    else:
        heads = kg.heads[active]
        rels = kg.relations[active]
        tails = kg.tails[active]
        new_visited[tails] = True
        h_src = gather_rows(ctx.states, heads)
        h_rel = gather_rows(ctx.rq_embeddings, rels)
        h_qr = slice_rows(ctx.rq_embeddings, ctx.r_q, ctx.r_q + 1)  # (1, d) broadcast
        alpha = entity_attention(h_src, h_rel, h_qr, params, layer)
        msg = alpha * (h_src + h_rel)
        agg = segment_sum(msg, tails, kg.entity_count)
        act = ad.activation(params.activation)
        next_states = act(agg @ params.w[layer].T)
        ad.check_finite(next_states, f"entity layer {layer}")
    return QueryContext(ctx.e_q, ctx.r_q, ctx.rq_embeddings,
                        ctx.visited + [new_visited], next_states)


def propagate(kg: KnowledgeGraph, rdg: RelationDependencyGraph,
              rel_params: RelationEncoderParams, ent_params: EntityEncoderParams,
              e_q: int, r_q: int,
              rq_embeddings: Tensor | None = None,
              exclude_facts: np.ndarray | None = None) -> QueryContext:
    """Run the relation encoder then all entity layers for one query.

    `exclude_facts` hides those fact indices from message passing; the
    trainer uses it to mask each training query's own edge so the model
    cannot just read the answer off the graph.
    """
    if rq_embeddings is None:
        rq_embeddings = encode_relations(rdg, r_q, rel_params)
    visited = np.zeros(kg.entity_count, dtype=bool)
    visited[e_q] = True
    ctx = QueryContext(e_q, r_q, rq_embeddings, [visited],
                       init_entity_states(kg.entity_count, e_q, ent_params.d))
    for layer in range(ent_params.layers):
        ctx = entity_layer(ctx, kg, ent_params, layer, exclude_facts)
    return ctx


@dataclass
class BatchContext:
    """Propagation state for several queries sharing one r_q.

    The b-th query owns rows [b*N, (b+1)*N) of `states` and `visited`,
    a disjoint copy of the graph; results equal per-query `propagate`.
    """

    r_q: int
    query_entities: list[int]
    entity_count: int
    rq_embeddings: Tensor = field(repr=False)
    visited: np.ndarray = field(repr=False)   # (B*N,) bool, final layer
    states: Tensor = field(repr=False)        # (B*N, d)

    def query_slice(self, b: int) -> slice:
        return slice(b * self.entity_count, (b + 1) * self.entity_count)


def propagate_batch(kg: KnowledgeGraph, rdg: RelationDependencyGraph,
                    rel_params: RelationEncoderParams,
                    ent_params: EntityEncoderParams,
                    query_entities: list[int], r_q: int,
                    rq_embeddings: Tensor | None = None,
                    exclude_facts: list[np.ndarray] | None = None
                    ) -> BatchContext:
    """Vectorized `propagate` over B queries with the same r_q.

    Each query runs on its own disjoint copy of the fact arrays, so one
    round of gather/scatter serves the whole group.  `exclude_facts[b]`
    hides fact indices from query b only.
    """
    if rq_embeddings is None:
        rq_embeddings = encode_relations(rdg, r_q, rel_params)
    B, N, F = len(query_entities), kg.entity_count, kg.fact_count
    offsets = np.repeat(np.arange(B, dtype=np.intp) * N, F)
    heads_big = np.tile(kg.heads, B) + offsets
    tails_big = np.tile(kg.tails, B) + offsets
    rels_big = np.tile(kg.relations, B)

    excluded = np.zeros(B * F, dtype=bool)
    if exclude_facts is not None:
        for b, idxs in enumerate(exclude_facts):
            if idxs is not None and len(idxs):
                excluded[np.asarray(idxs, dtype=np.intp) + b * F] = True

    visited = np.zeros(B * N, dtype=bool)
    init = np.zeros((B * N, ent_params.d))
    for b, e_q in enumerate(query_entities):
        if not 0 <= e_q < N:
            raise ValueError(f"query entity {e_q} out of range [0, {N})")
        visited[b * N + e_q] = True
        init[b * N + e_q] = 1.0
    states = Tensor(init)
    h_qr = slice_rows(rq_embeddings, r_q, r_q + 1)
    act = ad.activation(ent_params.activation)
    for layer in range(ent_params.layers):
        usable = visited[heads_big] & ~excluded
        active = np.flatnonzero(usable)
        if len(active) == 0:
            states = Tensor(np.zeros_like(states.data))
            continue
        h_src = gather_rows(states, heads_big[active])
        h_rel = gather_rows(rq_embeddings, rels_big[active])
        alpha = entity_attention(h_src, h_rel, h_qr, ent_params, layer)
        agg = segment_sum(alpha * (h_src + h_rel), tails_big[active], B * N)
        states = act(agg @ ent_params.w[layer].T)
        ad.check_finite(states, f"entity layer {layer}")
        visited = visited.copy()
        visited[tails_big[active]] = True
    return BatchContext(r_q, list(query_entities), N, rq_embeddings,
                        visited, states)


@dataclass
class MixedBatchContext:
    """Propagation state for several queries with per-query relations.

    Same layout as BatchContext: query b owns rows [b*N, (b+1)*N).
    """

    query_relations: list[int]
    query_entities: list[int]
    entity_count: int
    visited: np.ndarray = field(repr=False)   # (B*N,) bool, final layer
    states: Tensor = field(repr=False)        # (B*N, d)

    def query_slice(self, b: int) -> slice:
        return slice(b * self.entity_count, (b + 1) * self.entity_count)


def propagate_mixed(kg: KnowledgeGraph, rdg: RelationDependencyGraph,
                    rel_params: RelationEncoderParams,
                    ent_params: EntityEncoderParams,
                    query_entities: list[int], query_relations: list[int],
                    exclude_facts: list[np.ndarray] | None = None
                    ) -> MixedBatchContext:
    """Vectorized `propagate` over B queries with differing relations.

    The relation encoder still runs once per distinct query relation;
    the per-r_q embedding tables are stacked so the entity layers run
    one gather/scatter round for the whole batch.  Results equal
    per-query `propagate`.
    """
    if len(query_entities) != len(query_relations):
        raise ValueError("query_entities and query_relations differ in length")
    uniq = sorted(set(query_relations))
    stacked = ad.concat_rows([encode_relations(rdg, u, rel_params)
                              for u in uniq])
    u_pos = {u: i for i, u in enumerate(uniq)}
    B, N, F = len(query_entities), kg.entity_count, kg.fact_count
    R = kg.relation_count
    offsets = np.repeat(np.arange(B, dtype=np.intp) * N, F)
    heads_big = np.tile(kg.heads, B) + offsets
    tails_big = np.tile(kg.tails, B) + offsets
    table_base = np.repeat(
        np.array([u_pos[r] * R for r in query_relations], dtype=np.intp), F)
    rels_big = np.tile(kg.relations, B) + table_base
    qr_big = np.repeat(
        np.array([u_pos[r] * R + r for r in query_relations], dtype=np.intp), F)

    excluded = np.zeros(B * F, dtype=bool)
    if exclude_facts is not None:
        for b, idxs in enumerate(exclude_facts):
            if idxs is not None and len(idxs):
                excluded[np.asarray(idxs, dtype=np.intp) + b * F] = True

    visited = np.zeros(B * N, dtype=bool)
    init = np.zeros((B * N, ent_params.d))
    for b, e_q in enumerate(query_entities):
        if not 0 <= e_q < N:
            raise ValueError(f"query entity {e_q} out of range [0, {N})")
        visited[b * N + e_q] = True
        init[b * N + e_q] = 1.0
    states = Tensor(init)
    act = ad.activation(ent_params.activation)
    for layer in range(ent_params.layers):
        usable = visited[heads_big] & ~excluded
        active = np.flatnonzero(usable)
        if len(active) == 0:
            states = Tensor(np.zeros_like(states.data))
            continue
        h_src = gather_rows(states, heads_big[active])
        h_rel = gather_rows(stacked, rels_big[active])
        h_qr = gather_rows(stacked, qr_big[active])
        alpha = entity_attention(h_src, h_rel, h_qr, ent_params, layer)
        agg = segment_sum(alpha * (h_src + h_rel), tails_big[active], B * N)
        states = act(agg @ ent_params.w[layer].T)
        ad.check_finite(states, f"entity layer {layer}")
        visited = visited.copy()
        visited[tails_big[active]] = True
    return MixedBatchContext(list(query_relations), list(query_entities), N,
                             visited, states)


def score_tensor(ctx: QueryContext, params: EntityEncoderParams) -> Tensor:
    """(entity_count, 1) scores; rows outside the visited set are meaningless."""
    return ctx.states @ params.w_score


def score_candidates(ctx: QueryContext, params: EntityEncoderParams):
    """Ranked (entity, score) pairs over the final visited set."""
    scores = score_tensor(ctx, params).data[:, 0]
    reached = np.flatnonzero(ctx.visited_final)
    order = sorted(reached, key=lambda e: (-scores[e], e))
    return [(int(e), float(scores[e])) for e in order]
