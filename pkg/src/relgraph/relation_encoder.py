"""Query-conditioned relation embeddings via attention over the RDG.

Starting from an indicator row for the query relation, each round mixes
every relation's state with its tau-preceding neighbors through a
multi-head softmax attention.  No bias terms anywhere, so relations
unreachable from the query keep exactly-zero rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, gather_rows, segment_sum, slice_rows
from .params import RelationEncoderParams
from .rdg import RelationDependencyGraph


@dataclass
class EdgeIndex:
    """Flat edge arrays: past edges first, then one self edge per node."""

    src: np.ndarray
    dst: np.ndarray
    past_count: int
    node_count: int

    @classmethod
    def from_rdg(cls, rdg: RelationDependencyGraph) -> "EdgeIndex":
        past_src = [u for v in range(rdg.relation_count)
                    for u in rdg.past_neighbors[v]]
        past_dst = [v for v in range(rdg.relation_count)
                    for _ in rdg.past_neighbors[v]]
        loops = np.arange(rdg.relation_count, dtype=np.intp)
        src = np.concatenate([np.asarray(past_src, dtype=np.intp), loops])
        dst = np.concatenate([np.asarray(past_dst, dtype=np.intp), loops])
        return cls(src, dst, len(past_src), rdg.relation_count)


def _edge_index(rdg: RelationDependencyGraph) -> EdgeIndex:
    idx = getattr(rdg, "_edge_index", None)
    if idx is None:
        idx = EdgeIndex.from_rdg(rdg)
        object.__setattr__(rdg, "_edge_index", idx)
    return idx


def init_relation_states(relation_count: int, r_q: int, d: int) -> Tensor:
    """Indicator initialization: all-ones row for r_q, zeros elsewhere."""
    if not 0 <= r_q < relation_count:
        raise ValueError(f"query relation {r_q} out of range [0, {relation_count})")
    states = np.zeros((relation_count, d))
    states[r_q] = 1.0
    return Tensor(states)


def _attention(states: Tensor, idx: EdgeIndex, w_att: Tensor, a: Tensor) -> Tensor:
    """Softmax over past(r_v) + {r_v} for every node; (E, 1) weights."""
    d = w_att.data.shape[0]
    proj = states @ w_att.T
    a_src, a_dst = slice_rows(a, 0, d), slice_rows(a, d, 2 * d)
    logits = gather_rows(proj, idx.src) @ a_src + gather_rows(proj, idx.dst) @ a_dst
    # per-segment max shift; constant w.r.t. the gradient
    seg_max = np.full(idx.node_count, -np.inf)
    np.maximum.at(seg_max, idx.dst, logits.data[:, 0])
    shifted = logits - Tensor(seg_max[idx.dst][:, None])
    e = ad.exp(shifted)
    denom = segment_sum(e, idx.dst, idx.node_count)
    return e / gather_rows(denom, idx.dst)


def relation_attention(states: Tensor, rdg: RelationDependencyGraph,
                       params: RelationEncoderParams, head: int):
    """Attention weights for one head: (src, dst, weights) arrays.

    Past edges come first, then the self edge of each relation; the
    weights over each destination's group sum to 1.
    """
    idx = _edge_index(rdg)
    alpha = _attention(states, idx, params.w_att[head], params.a)
    return idx.src.copy(), idx.dst.copy(), alpha.data[:, 0].copy()


def relation_layer(states: Tensor, rdg: RelationDependencyGraph,
                   params: RelationEncoderParams, layer: int,
                   attention_record: list | None = None) -> Tensor:
    idx = _edge_index(rdg)
    act = ad.activation(params.activation)
    total = None
    for h in range(params.heads):
        alpha = _attention(states, idx, params.w_att[h], params.a)
        alpha_past = slice_rows(alpha, 0, idx.past_count)
        alpha_self = slice_rows(alpha, idx.past_count, idx.past_count + idx.node_count)
        if attention_record is not None:
            attention_record.append((layer, h, alpha.data[:, 0].copy()))
        msg = alpha_past * gather_rows(states, idx.src[:idx.past_count])
        agg = segment_sum(msg, idx.dst[:idx.past_count], idx.node_count)
        head_out = agg @ params.w1[layer][h].T + (alpha_self * states) @ params.w2[layer][h].T
        total = head_out if total is None else total + head_out
    out = act(total * (1.0 / params.heads))
    ad.check_finite(out, f"relation layer {layer}")
    return out


def encode_relations(rdg: RelationDependencyGraph, r_q: int,
                     params: RelationEncoderParams,
                     attention_record: list | None = None) -> Tensor:
    """Final relation embedding matrix (relation_count, d) for query r_q."""
    states = init_relation_states(rdg.relation_count, r_q, params.d)
    for layer in range(params.layers):
        states = relation_layer(states, rdg, params, layer, attention_record)
    return states


def reachable_within(rdg: RelationDependencyGraph, r_q: int, hops: int) -> set[int]:
    """Relations reachable from r_q along retained edges in <= hops steps."""
    succ: list[list[int]] = [[] for _ in range(rdg.relation_count)]
    for v, past in enumerate(rdg.past_neighbors):
        for u in past:
            succ[u].append(v)
    frontier, seen = {r_q}, {r_q}
    for _ in range(hops):
        frontier = {v for u in frontier for v in succ[u]} - seen
        seen |= frontier
    return seen
