"""Filtered-ranking metrics, evaluation runs, and RDG edge perturbation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .entity_encoder import propagate_batch, score_tensor

# queries propagated per vectorized batch; bounds peak memory
_GROUP_LIMIT = 50
from .kg import DatasetSplits, Triple, inverse_relation
from .params import ModelParams
from .rdg import RelationDependencyGraph, build_rdg
from .relation_encoder import encode_relations


@dataclass
class EvalReport:
    ranks: list[float]
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    unreachable: int = 0
    tail_ranks: list[float] = field(default_factory=list, repr=False)
    head_ranks: list[float] = field(default_factory=list, repr=False)
    degenerate: bool = False

    def csv(self) -> str:
        return ("metric,value\n"
                f"queries,{len(self.ranks)}\n"
                f"mrr,{self.mrr:.6f}\nhits@1,{self.hits1:.6f}\n"
                f"hits@3,{self.hits3:.6f}\nhits@10,{self.hits10:.6f}\n"
                f"unreachable,{self.unreachable}\n")

    def table(self) -> str:
        return (f"queries     {len(self.ranks)}\n"
                f"MRR         {self.mrr:.4f}\n"
                f"Hits@1      {self.hits1:.4f}\n"
                f"Hits@3      {self.hits3:.4f}\n"
                f"Hits@10     {self.hits10:.4f}\n"
                f"unreachable {self.unreachable}\n")


def filtered_rank(query: Triple, scores: dict[int, float],
                  known_true: dict[tuple[int, int], set[int]],
                  entity_count: int) -> float:
    """Average-tie filtered rank of the query's answer.

    `scores` maps reached entities to scores.  Known-true tails other
    than the answer are removed; unreached candidates tie at the bottom.
    """
    answer = query.tail
    if not 0 <= answer < entity_count:
        raise ValueError(f"answer entity {answer} out of range")
    filtered = known_true.get((query.head, query.relation), set()) - {answer}
    if answer in scores:
        s = scores[answer]
        greater = equal = 0
        for e, v in scores.items():
            if e == answer or e in filtered:
                continue
            if v > s:
                greater += 1
            elif v == s:
                equal += 1
        return 1.0 + greater + equal / 2.0
    reached = sum(1 for e in scores if e not in filtered)
    unreached = entity_count - len(scores) - len(filtered - set(scores))
    return reached + (unreached + 1) / 2.0


def compute_metrics(ranks, tail_ranks=(), head_ranks=(),
                    unreachable: int = 0) -> EvalReport:
    ranks = list(ranks)
    if not ranks:
        return EvalReport([], 0.0, 0.0, 0.0, 0.0, unreachable)
    arr = np.asarray(ranks, dtype=float)
    return EvalReport(ranks, float(np.mean(1.0 / arr)),
                      float(np.mean(arr <= 1)), float(np.mean(arr <= 3)),
                      float(np.mean(arr <= 10)), unreachable,
                      list(tail_ranks), list(head_ranks))


def _query_directions(queries, inverse_offset):
    """Each triple evaluated as tail prediction in both directions."""
    for q in queries:
        yield Triple(q.head, q.relation, q.tail)
        if inverse_offset:
            yield Triple(q.tail, inverse_relation(q.relation, inverse_offset), q.head)


def evaluate(params: ModelParams, splits: DatasetSplits,
             queries=None, rdg: RelationDependencyGraph | None = None) -> EvalReport:
    """Filtered ranking over `queries` (default: test split, both directions)."""
    kg = splits.train
    if rdg is None:
        rdg = build_rdg(kg)
    if queries is None:
        queries = splits.test_queries
    directed = list(_query_directions(queries, kg.inverse_offset))
    groups: dict[int, list[int]] = {}
    for i, q in enumerate(directed):
        groups.setdefault(q.relation, []).append(i)
    ranks = [0.0] * len(directed)
    is_tail = [i % 2 == 0 for i in range(len(directed))]
    unreachable = 0
    n = kg.entity_count
    for r_q, members in groups.items():
        for start in range(0, len(members), _GROUP_LIMIT):
            chunk = members[start:start + _GROUP_LIMIT]
            bctx = propagate_batch(kg, rdg, params.relation, params.entity,
                                   [directed[i].head for i in chunk], r_q)
            values = score_tensor(bctx, params.entity).data[:, 0]
            for b, i in enumerate(chunk):
                q = directed[i]
                sl = bctx.query_slice(b)
                reached = np.flatnonzero(bctx.visited[sl])
                scores = {int(e): float(values[b * n + e]) for e in reached}
                if q.tail not in scores:
                    unreachable += 1
                ranks[i] = filtered_rank(q, scores, splits.known_true, n)
    tail_ranks = [r for r, t in zip(ranks, is_tail) if t]
    head_ranks = [r for r, t in zip(ranks, is_tail) if not t]
    return compute_metrics(ranks, tail_ranks, head_ranks, unreachable)


@dataclass
class EdgeImportanceTable:
    """Mean attention weight per retained RDG edge over sampled queries."""

    importance: dict[tuple[int, int], float]
    samples: int

    def ordered(self, ascending: bool = False) -> list[tuple[int, int]]:
        return sorted(self.importance,
                      key=lambda e: ((self.importance[e], e) if ascending
                                     else (-self.importance[e], e)))


def edge_importance(params: ModelParams, rdg: RelationDependencyGraph,
                    sample: int, rng: np.random.Generator) -> EdgeImportanceTable:
    """Average attention weights over `sample` random query relations."""
    retained = rdg.retained_edges()
    if not retained:
        return EdgeImportanceTable({}, 0)
    relations = rng.choice(rdg.relation_count, size=min(sample, rdg.relation_count),
                           replace=False)
    sums = {e: 0.0 for e in retained}
    counts = {e: 0 for e in retained}
    edge_order = [(u, v) for v in range(rdg.relation_count)
                  for u in rdg.past_neighbors[v]]
    for r_q in sorted(int(r) for r in relations):
        record: list = []
        encode_relations(rdg, r_q, params.relation, attention_record=record)
        for _, _, alpha in record:
            for pos, edge in enumerate(edge_order):
                sums[edge] += alpha[pos]
                counts[edge] += 1
    importance = {e: (sums[e] / counts[e] if counts[e] else 0.0) for e in retained}
    return EdgeImportanceTable(importance, len(relations))


def perturbed_evaluate(params: ModelParams, splits: DatasetSplits,
                       mode: str, k: int, rng: np.random.Generator,
                       sample: int = 16, queries=None) -> EvalReport:
    """Evaluate with k RDG edges disabled (top/bottom by importance, or random)."""
    rdg = build_rdg(splits.train)
    retained = rdg.retained_edges()
    degenerate = k >= len(retained)
    if mode in ("top", "bottom"):
        table = edge_importance(params, rdg, sample, rng)
        removed = table.ordered(ascending=(mode == "bottom"))[:k]
    elif mode == "random":
        order = sorted(retained)
        picks = rng.choice(len(order), size=min(k, len(order)), replace=False)
        removed = [order[i] for i in picks]
    else:
        raise ValueError(f"unknown perturbation mode: {mode!r}")
    pruned = rdg.without_edges(removed)
    report = evaluate(params, splits, queries=queries, rdg=pruned)
    report.degenerate = degenerate
    return report
