"""Shared test helpers: random graph generators and the synthetic
compositional dataset used by the end-to-end criteria."""
from __future__ import annotations

import numpy as np
import pytest

from relgraph import DatasetSplits, Triple, build_graph, load_splits


def random_kg_lines(rng, n_entities=10, n_relations=4, n_facts=30):
    lines = []
    for _ in range(n_facts):
        lines.append(f"e{rng.integers(n_entities)}\tr{rng.integers(n_relations)}"
                     f"\te{rng.integers(n_entities)}")
    return lines


def random_graph(rng, n_entities=10, n_relations=4, n_facts=30,
                 add_inverses=True):
    """A random KnowledgeGraph with ids drawn directly (no vocab)."""
    triples = list(dict.fromkeys(
        Triple(int(rng.integers(n_entities)), int(rng.integers(n_relations)),
               int(rng.integers(n_entities)))
        for _ in range(n_facts)))
    return build_graph(triples, add_inverses=add_inverses,
                       entity_count=n_entities, relation_count=n_relations)


def composition_lines(seed=0, n=50, k=2):
    """r3(a, c) holds iff some b has r1(a, b) and r2(b, c).

    r1 and r2 share a pair set built from k random permutations of the
    entities, so every relation stays predictable when the query's own
    edge is masked during training: an r1 or r2 query can follow the
    parallel edge of the sibling relation, and an r3 query can follow
    the two-hop composition path.  Returns (train_lines, valid_lines,
    test_lines) with all r1/r2 facts in train and the r3 facts split
    80/10/10.
    """
    rng = np.random.default_rng(seed)
    pairs = sorted({(int(a), int(perm[a]))
                    for _ in range(k) for perm in [rng.permutation(n)]
                    for a in range(n)})
    by_head: dict[int, list[int]] = {}
    for b, c in pairs:
        by_head.setdefault(b, []).append(c)
    r3 = sorted({(a, c) for a, b in pairs for c in by_head.get(b, [])})
    rng.shuffle(r3)
    k1, k2 = int(0.8 * len(r3)), int(0.9 * len(r3))

    def lines(seq, rel):
        return [f"e{a}\t{rel}\te{b}" for a, b in seq]

    train = lines(pairs, "r1") + lines(pairs, "r2") + lines(r3[:k1], "r3")
    return train, lines(r3[k1:k2], "r3"), lines(r3[k2:], "r3")


def composition_splits(seed=0, n=50, k=2) -> DatasetSplits:
    """Compositional dataset whose prediction task is the composed
    relation: r1/r2 facts stay in the train graph as context, and the
    training/evaluation queries are the r3 facts."""
    train, valid, test = composition_lines(seed, n, k)
    splits = load_splits(train, valid, test)
    r3 = splits.vocab.relation_id("r3", frozen=True)
    splits.train_queries = [q for q in splits.train_queries
                            if q.relation == r3]
    return splits


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed after the run so the
# verdicts are visible even with captured stdout.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
