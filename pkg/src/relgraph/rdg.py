"""Relation-dependency graph construction and comparison meta-graphs.

A directed edge (r_u -> r_v) records that some fact with relation r_u
chains into a fact with relation r_v through a shared middle entity.
Message passing later keeps only edges that increase the precedence
order tau, which makes the retained graph acyclic.
"""
from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .kg import KnowledgeGraph


@dataclass
class MetaGraphStats:
    method: str
    relation_count: int
    edge_count: int
    typed_counts: dict[str, int] | None = None

    def csv_row(self, dataset: str) -> str:
        row = f"{dataset},{self.method},{self.relation_count},{self.edge_count}"
        if self.typed_counts is not None:
            row += "," + ",".join(str(self.typed_counts[k])
                                  for k in ("h2h", "h2t", "t2h", "t2t"))
        return row


@dataclass
class RelationDependencyGraph:
    relation_count: int
    edges: dict[tuple[int, int], int]          # (r_u, r_v) -> support count
    tau: np.ndarray                            # rank per relation id
    past_neighbors: list[list[int]] = field(repr=False)

    def retained_edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v, past in enumerate(self.past_neighbors) for u in past]

    def without_edges(self, removed) -> "RelationDependencyGraph":
        removed = set(removed)
        pruned = [[u for u in past if (u, v) not in removed]
                  for v, past in enumerate(self.past_neighbors)]
        return RelationDependencyGraph(self.relation_count, self.edges,
                                       self.tau, pruned)


def relation_adjacency(kg: KnowledgeGraph) -> dict[tuple[int, int], int]:
    """Directed relation pairs witnessed by 2-hop fact chains, with counts.

    (r_i, r_j) is present iff facts (e, r_i, e') and (e', r_j, e'') both
    exist; support counts witnessing fact pairs.  Self-pairs included.
    """
    incoming: dict[int, Counter] = {}
    outgoing: dict[int, Counter] = {}
    for h, r, t in zip(kg.heads, kg.relations, kg.tails):
        outgoing.setdefault(int(h), Counter())[int(r)] += 1
        incoming.setdefault(int(t), Counter())[int(r)] += 1
    support: Counter = Counter()
    for e, in_rels in incoming.items():
        out_rels = outgoing.get(e)
        if not out_rels:
            continue
        for ri, ci in in_rels.items():
            for rj, cj in out_rels.items():
                support[(ri, rj)] += ci * cj
    return dict(support)


def compute_tau(pairs, relation_freq, relation_count: int) -> np.ndarray:
    """Strict total order over relations.

    Strongly-connected components of the pair digraph are ranked in
    topological order of the condensation; within a component (and
    between incomparable components) relations sort by descending
    frequency, ties by ascending id.  Returns rank per relation id.
    """
    relation_freq = np.asarray(relation_freq)
    edge_list = sorted((u, v) for (u, v) in pairs if u != v)
    if edge_list:
        rows = np.array([u for u, _ in edge_list], dtype=np.intp)
        cols = np.array([v for _, v in edge_list], dtype=np.intp)
    else:
        rows = cols = np.empty(0, dtype=np.intp)
    adj = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                     shape=(relation_count, relation_count))
    n_comp, labels = connected_components(adj, directed=True, connection="strong")

    members: list[list[int]] = [[] for _ in range(n_comp)]
    for r in range(relation_count):
        members[labels[r]].append(r)
    comp_succ: list[set[int]] = [set() for _ in range(n_comp)]
    indeg = np.zeros(n_comp, dtype=np.intp)
    for u, v in edge_list:
        cu, cv = labels[u], labels[v]
        if cu != cv and cv not in comp_succ[cu]:
            comp_succ[cu].add(cv)
            indeg[cv] += 1

    def comp_key(c: int):
        # incomparable components: larger max-frequency first, then smallest id
        return (-max(relation_freq[r] for r in members[c]),
                min(members[c]))

    ready = [(comp_key(c), c) for c in range(n_comp) if indeg[c] == 0]
    heapq.heapify(ready)
    tau = np.empty(relation_count, dtype=np.intp)
    rank = 0
    while ready:
        _, c = heapq.heappop(ready)
        for r in sorted(members[c], key=lambda r: (-relation_freq[r], r)):
            tau[r] = rank
            rank += 1
        for nxt in sorted(comp_succ[c]):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, (comp_key(nxt), nxt))
    assert rank == relation_count
    return tau


def build_rdg(kg: KnowledgeGraph) -> RelationDependencyGraph:
    """Adjacency + tau, keeping only tau-increasing edges for messages.

    Self-pairs are recorded in `edges` but never enter past_neighbors;
    the update rule's explicit self-term covers self-influence.
    """
    edges = relation_adjacency(kg)
    tau = compute_tau(edges, kg.relation_freq, kg.relation_count)
    past: list[list[int]] = [[] for _ in range(kg.relation_count)]
    for (u, v) in edges:
        if u != v and tau[u] < tau[v]:
            past[v].append(u)
    for lst in past:
        lst.sort()
    return RelationDependencyGraph(kg.relation_count, edges, tau, past)


def _incidence_sets(kg: KnowledgeGraph):
    heads_of: list[set] = [set() for _ in range(kg.relation_count)]
    tails_of: list[set] = [set() for _ in range(kg.relation_count)]
    for h, r, t in zip(kg.heads, kg.relations, kg.tails):
        heads_of[r].add(int(h))
        tails_of[r].add(int(t))
    return heads_of, tails_of


def build_ingram_graph(kg: KnowledgeGraph, return_edges: bool = False):
    """Undirected relation pairs sharing any incident entity."""
    heads_of, tails_of = _incidence_sets(kg)
    incident = [heads_of[r] | tails_of[r] for r in range(kg.relation_count)]
    edges = []
    for i in range(kg.relation_count):
        for j in range(i + 1, kg.relation_count):
            if incident[i] & incident[j]:
                edges.append((i, j))
    stats = MetaGraphStats("ingram", kg.relation_count, len(edges))
    return (stats, edges) if return_edges else stats


def build_ultra_metagraph(kg: KnowledgeGraph, return_edges: bool = False):
    """Directed typed relation pairs: h2h, h2t, t2h, t2t (i != j)."""
    heads_of, tails_of = _incidence_sets(kg)
    typed = {"h2h": 0, "h2t": 0, "t2h": 0, "t2t": 0}
    edges = []
    for i in range(kg.relation_count):
        for j in range(kg.relation_count):
            if i == j:
                continue
            for kind, (a, b) in (("h2h", (heads_of, heads_of)),
                                 ("h2t", (heads_of, tails_of)),
                                 ("t2h", (tails_of, heads_of)),
                                 ("t2t", (tails_of, tails_of))):
                if a[i] & b[j]:
                    typed[kind] += 1
                    edges.append((i, j, kind))
    stats = MetaGraphStats("ultra", kg.relation_count, sum(typed.values()), typed)
    return (stats, edges) if return_edges else stats


def rdg_stats(rdg: RelationDependencyGraph) -> MetaGraphStats:
    """Edge count of the tau-filtered (message-carrying) edge set."""
    return MetaGraphStats("rdg", rdg.relation_count, len(rdg.retained_edges()))


def dump_rdg(rdg: RelationDependencyGraph) -> tuple[str, str]:
    """(edge TSV `r_u\\tr_v\\tsupport`, tau TSV `relation\\trank`)."""
    edge_lines = "".join(f"{u}\t{v}\t{rdg.edges[(u, v)]}\n"
                         for (u, v) in sorted(rdg.retained_edges()))
    tau_lines = "".join(f"{r}\t{int(rdg.tau[r])}\n"
                        for r in range(rdg.relation_count))
    return edge_lines, tau_lines
