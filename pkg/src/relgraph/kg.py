"""Immutable indexed triple stores and their train/valid/test splits.

Triple files are 3-column TSV (`head\\trelation\\ttail`), UTF-8, LF or
CRLF line endings; lines starting with '#' are ignored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np


class ParseError(ValueError):
    """Malformed triple line, carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class ResolutionError(KeyError):
    """Unknown entity/relation name against a frozen vocabulary."""


class GraphConstructionError(ValueError):
    """Triple ids inconsistent with the declared vocabulary sizes."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class VocabMap:
    """Bijective name<->id maps for entities and relations.

    Ids are dense and assigned in first-seen order.  When inverse
    augmentation is applied, relation id ``r < inverse_offset`` pairs
    with inverse id ``r + inverse_offset``.
    """

    def __init__(self):
        self.entity_names: list[str] = []
        self.relation_names: list[str] = []
        self._entity_ids: dict[str, int] = {}
        self._relation_ids: dict[str, int] = {}
        self.inverse_offset: int = 0

    @property
    def entity_count(self):
        return len(self.entity_names)

    @property
    def relation_count(self):
        return len(self.relation_names)

    def entity_id(self, name: str, frozen: bool = False) -> int:
        eid = self._entity_ids.get(name)
        if eid is None:
            if frozen:
                raise ResolutionError(f"unknown entity: {name!r}")
            eid = len(self.entity_names)
            self._entity_ids[name] = eid
            self.entity_names.append(name)
        return eid

    def relation_id(self, name: str, frozen: bool = False) -> int:
        rid = self._relation_ids.get(name)
        if rid is None:
            if frozen:
                raise ResolutionError(f"unknown relation: {name!r}")
            rid = len(self.relation_names)
            self._relation_ids[name] = rid
            self.relation_names.append(name)
        return rid

    def relation_display_name(self, rid: int) -> str:
        if self.inverse_offset and rid >= self.inverse_offset:
            return self.relation_names[rid - self.inverse_offset] + "^-1"
        return self.relation_names[rid]


def parse_triples(lines: Iterable[str], vocab: VocabMap | None = None,
                  frozen: bool = False) -> tuple[list[Triple], VocabMap]:
    """Parse TSV triple lines, assigning ids in first-seen order.

    Duplicate lines are preserved; deduplication is a separate step.
    """
    vocab = vocab if vocab is not None else VocabMap()
    triples: list[Triple] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}",
                             line_no)
        h, r, t = fields
        triples.append(Triple(vocab.entity_id(h, frozen),
                              vocab.relation_id(r, frozen),
                              vocab.entity_id(t, frozen)))
    return triples, vocab


class KnowledgeGraph:
    """Immutable triple store with a CSR out-edge index by head entity."""

    def __init__(self, entity_count: int, relation_count: int,
                 heads: np.ndarray, relations: np.ndarray, tails: np.ndarray,
                 inverse_offset: int = 0):
        self.entity_count = int(entity_count)
        self.relation_count = int(relation_count)
        self.heads = heads
        self.relations = relations
        self.tails = tails
        self.inverse_offset = int(inverse_offset)
        if len(heads) and (heads.min() < 0 or heads.max() >= entity_count
                           or tails.min() < 0 or tails.max() >= entity_count
                           or relations.min() < 0 or relations.max() >= relation_count):
            raise GraphConstructionError("triple id out of range")
        # CSR by head: facts sorted by head (stable, preserves file order within a head)
        order = np.argsort(heads, kind="stable")
        self._order = order
        self._indptr = np.zeros(entity_count + 1, dtype=np.intp)
        np.add.at(self._indptr, heads + 1, 1)
        np.cumsum(self._indptr, out=self._indptr)
        self.relation_freq = np.zeros(relation_count, dtype=np.intp)
        np.add.at(self.relation_freq, relations, 1)
        for arr in (self.heads, self.relations, self.tails, self._order,
                    self._indptr, self.relation_freq):
            arr.setflags(write=False)

    @property
    def fact_count(self):
        return len(self.heads)

    @property
    def facts(self) -> list[Triple]:
        return [Triple(int(h), int(r), int(t))
                for h, r, t in zip(self.heads, self.relations, self.tails)]

    def out_index(self, entity: int) -> list[Triple]:
        """Facts whose head is `entity`, in original fact order."""
        idx = self._order[self._indptr[entity]:self._indptr[entity + 1]]
        return [Triple(int(self.heads[i]), int(self.relations[i]), int(self.tails[i]))
                for i in sorted(idx)]

    def out_fact_indices(self, entity: int) -> np.ndarray:
        return self._order[self._indptr[entity]:self._indptr[entity + 1]]


def build_graph(triples: list[Triple], add_inverses: bool = True,
                entity_count: int | None = None,
                relation_count: int | None = None) -> KnowledgeGraph:
    """Build an immutable graph; optionally append inverse facts.

    With inverses, every (h, r, t) gains (t, r + offset, h) where offset
    is the base relation count, and relation_count doubles.
    """
    heads = np.fromiter((t.head for t in triples), dtype=np.intp, count=len(triples))
    rels = np.fromiter((t.relation for t in triples), dtype=np.intp, count=len(triples))
    tails = np.fromiter((t.tail for t in triples), dtype=np.intp, count=len(triples))
    if entity_count is None:
        entity_count = int(max(heads.max(initial=-1), tails.max(initial=-1))) + 1
    if relation_count is None:
        relation_count = int(rels.max(initial=-1)) + 1
    if add_inverses:
        offset = relation_count
        heads, tails = np.concatenate([heads, tails]), np.concatenate([tails, heads])
        rels = np.concatenate([rels, rels + offset])
        relation_count *= 2
    else:
        offset = 0
    return KnowledgeGraph(entity_count, relation_count, heads, rels, tails,
                          inverse_offset=offset)


def augment_inverses(kg: KnowledgeGraph) -> KnowledgeGraph:
    if kg.inverse_offset:
        raise GraphConstructionError("graph already carries inverse relations")
    base = [Triple(int(h), int(r), int(t))
            for h, r, t in zip(kg.heads, kg.relations, kg.tails)]
    return build_graph(base, add_inverses=True,
                       entity_count=kg.entity_count, relation_count=kg.relation_count)


def inverse_relation(r: int, inverse_offset: int) -> int:
    if not inverse_offset:
        raise ValueError("graph has no inverse relations")
    return r - inverse_offset if r >= inverse_offset else r + inverse_offset


@dataclass
class DatasetSplits:
    """Train graph plus held-out queries and the filtered-ranking lookup."""

    train: KnowledgeGraph
    valid_queries: list[Triple]
    test_queries: list[Triple]
    known_true: dict[tuple[int, int], set[int]]
    vocab: VocabMap = field(default=None, repr=False)
    train_queries: list[Triple] = field(default_factory=list, repr=False)


def _register(known: dict, h: int, r: int, t: int, offset: int):
    known.setdefault((h, r), set()).add(t)
    if offset:
        known.setdefault((t, inverse_relation(r, offset)), set()).add(h)


def load_splits(train_lines, valid_lines=(), test_lines=(),
                add_inverses: bool = True,
                vocab: VocabMap | None = None) -> DatasetSplits:
    """Parse the three streams and assemble a DatasetSplits.

    Train triples are deduplicated (first occurrence kept) before the
    graph is built; known_true registers every triple of every split in
    both directions when inverse augmentation is on.
    """
    train_triples, vocab = parse_triples(train_lines, vocab)
    valid_triples, vocab = parse_triples(valid_lines, vocab)
    test_triples, vocab = parse_triples(test_lines, vocab)
    deduped = list(dict.fromkeys(train_triples))
    kg = build_graph(deduped, add_inverses=add_inverses,
                     entity_count=vocab.entity_count,
                     relation_count=vocab.relation_count)
    vocab.inverse_offset = kg.inverse_offset
    known: dict[tuple[int, int], set[int]] = {}
    for trip in deduped + valid_triples + test_triples:
        _register(known, trip.head, trip.relation, trip.tail, kg.inverse_offset)
    return DatasetSplits(train=kg, valid_queries=valid_triples,
                         test_queries=test_triples, known_true=known,
                         vocab=vocab, train_queries=deduped)


# -- serialization -----------------------------------------------------

def dump_triples(triples: Iterable[Triple], vocab: VocabMap) -> str:
    lines = []
    for h, r, t in triples:
        lines.append(f"{vocab.entity_names[h]}\t{vocab.relation_names[r]}\t"
                     f"{vocab.entity_names[t]}")
    return "\n".join(lines) + ("\n" if lines else "")


def dump_vocab(names: list[str]) -> str:
    return "".join(f"{name}\t{i}\n" for i, name in enumerate(names))
