"""Canonicalization, pruning quotas, partitioning, split validation."""
import math

import pytest

from relgraph import (PreprocessError, PrunePartitionConfig, canonicalize,
                      prune_partition, validate_inductive_split)
from relgraph.preprocess import (normalized_degrees, prune_relation_balanced,
                                 triple_importance)


class TestCanonicalize:
    def test_hand_trace(self):
        # relations {r0}; one interaction line "u i1 i2" expands to two
        # triples with the new relation id 1; KG contributes one more.
        out = canonicalize(["r0"], ["u i1 i2"], [("i1", "r0", "i2")], [])
        assert out.relations == ["r0", "interacts_with"]
        assert out.interaction_relation_id == 1
        assert set(out.triples) == {("u", "interacts_with", "i1"),
                                    ("u", "interacts_with", "i2"),
                                    ("i1", "r0", "i2")}
        # dense lexicographic entity ids over train + test vocab
        assert out.entity_ids == {"i1": 0, "i2": 1, "u": 2}
        assert out.skipped_lines == 0

    def test_short_lines_skipped_and_counted(self):
        out = canonicalize([], ["solo", "", "   ", "a b"], [], [])
        assert out.skipped_lines == 1
        assert out.triples == [("a", "interacts_with", "b")]

    def test_test_interactions_extend_entity_vocab(self):
        out = canonicalize([], ["a b"], [], ["z q"])
        assert set(out.entity_ids) == {"a", "b", "z", "q"}
        ids = sorted(out.entity_ids.values())
        assert ids == list(range(len(ids)))

    def test_duplicate_interaction_relation_rejected(self):
        with pytest.raises(PreprocessError):
            canonicalize(["interacts_with"], [], [], [])

    def test_union_deduplicates(self):
        out = canonicalize([], ["a b"], [("a", "interacts_with", "b")], [])
        assert out.triples == [("a", "interacts_with", "b")]


class TestDegreesAndImportance:
    def test_max_degree_is_one(self):
        triples = [("a", "r", "b"), ("a", "r", "c"), ("b", "r", "c")]
        deg = normalized_degrees(triples)
        assert deg["a"] == 1.0 and deg["b"] == 1.0 and deg["c"] == 1.0

    def test_importance_is_mean_of_endpoint_degrees(self):
        triples = [("a", "r", "b"), ("a", "r", "c"), ("a", "r", "d")]
        deg = normalized_degrees(triples)  # a: 1.0, others 1/3
        scores = triple_importance(triples, weight=2.0, degrees=deg)
        assert scores[0] == pytest.approx(2.0 * (1.0 + 1 / 3) / 2)


class TestPrune:
    def test_quota_exact_per_relation(self):
        # 3 relations x 10 triples, rho = 0.5 -> exactly 5 kept each
        triples = [(f"e{i}", f"r{r}", f"e{i + 1}")
                   for r in range(3) for i in range(10)]
        kept = prune_relation_balanced(triples, PrunePartitionConfig(rho=0.5))
        per = {}
        for _, r, _ in kept:
            per[r] = per.get(r, 0) + 1
        assert per == {"r0": 5, "r1": 5, "r2": 5}

    def test_rho_one_keeps_everything(self):
        triples = [("a", "r", "b"), ("b", "r", "c")]
        assert prune_relation_balanced(
            triples, PrunePartitionConfig(rho=1.0)) == triples

    def test_ceil_quota(self):
        # 3 triples, rho = 0.4 -> ceil(1.2) = 2 kept
        triples = [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d")]
        kept = prune_relation_balanced(triples, PrunePartitionConfig(rho=0.4))
        assert len(kept) == 2

    def test_highest_importance_survives(self):
        # hub entity h makes its triples the most important
        triples = ([("h", "r", f"x{i}") for i in range(5)]
                   + [("a", "r", "b"), ("c", "r", "d")])
        kept = prune_relation_balanced(triples, PrunePartitionConfig(rho=0.5))
        assert all(h == "h" for h, _, _ in kept)


class TestPrunePartition:
    def _random_triples(self, n=200, seed=7):
        import numpy as np
        rng = np.random.default_rng(seed)
        return list(dict.fromkeys(
            (f"e{rng.integers(40)}", f"r{rng.integers(5)}",
             f"e{rng.integers(40)}") for _ in range(n)))

    def test_recount_oracle_200_triples(self):
        triples = self._random_triples()
        cfg = PrunePartitionConfig(rho=0.3, seed=3)
        res = prune_partition(triples, cfg)
        # [DERIVED] quota recount: per-relation ceil(rho * |T_r|)
        per_rel = {}
        for _, r, _ in triples:
            per_rel[r] = per_rel.get(r, 0) + 1
        expected = sum(math.ceil(0.3 * c) for c in per_rel.values())
        assert res.metadata["kept_triples"] == expected
        assert len(res.train) + len(res.valid) + len(res.test) == expected

    def test_split_sizes_near_alpha(self):
        triples = self._random_triples()
        cfg = PrunePartitionConfig(rho=0.5, alpha=(0.8, 0.1, 0.1), seed=3)
        res = prune_partition(triples, cfg)
        kept = res.metadata["kept_triples"]
        assert abs(len(res.train) - round(0.8 * kept)) <= 1

    def test_disjoint_and_complete(self):
        triples = self._random_triples()
        res = prune_partition(triples, PrunePartitionConfig(rho=0.5, seed=1))
        tr, va, te = set(res.train), set(res.valid), set(res.test)
        assert not (tr & va) and not (tr & te) and not (va & te)
        assert len(tr) + len(va) + len(te) == res.metadata["kept_triples"]

    def test_bit_identical_rerun(self):
        triples = self._random_triples()
        cfg = PrunePartitionConfig(rho=0.4, seed=11)
        a = prune_partition(triples, cfg)
        b = prune_partition(triples, cfg)
        assert a.train == b.train and a.valid == b.valid and a.test == b.test
        assert a.metadata == b.metadata

    def test_config_validation(self):
        with pytest.raises(PreprocessError):
            PrunePartitionConfig(rho=0.0).validate()
        with pytest.raises(PreprocessError):
            PrunePartitionConfig(theta=1.0).validate()
        with pytest.raises(PreprocessError):
            PrunePartitionConfig(alpha=(0.5, 0.5, 0.5)).validate()

    def test_violations_counted_not_dropped(self):
        triples = self._random_triples()
        res = prune_partition(triples, PrunePartitionConfig(rho=0.9, seed=0))
        v = res.metadata["unseen_guarantee_violations"]
        manual = sum(1 for t in res.valid + res.test
                     if t[0] in res.seen_entities and t[2] in res.seen_entities
                     and t[1] in res.seen_relations)
        assert v == manual


class TestValidateSplit:
    def test_transductive(self):
        v = validate_inductive_split([("a", "r", "b")], [("b", "r", "a")], [])
        assert v.classification == "transductive"
        assert not v.new_entities and not v.new_relations

    def test_entity_inductive(self):
        v = validate_inductive_split([("a", "r", "b")], [("c", "r", "d")], [])
        assert v.classification == "entity-inductive"
        assert v.new_entities == {"c", "d"}

    def test_relation_inductive(self):
        v = validate_inductive_split([("a", "r", "b")], [], [("a", "s", "b")])
        assert v.classification == "relation-inductive"
        assert v.new_relations == {"s"}

    def test_fully_inductive(self):
        v = validate_inductive_split([("a", "r", "b")], [("c", "s", "d")], [])
        assert v.classification == "fully-inductive"

    def test_duplicates_listed(self):
        v = validate_inductive_split([("a", "r", "b")], [("a", "r", "b")],
                                     [("a", "r", "b")])
        assert v.duplicate_triples == [("a", "r", "b")]

    def test_table_mentions_classification(self):
        v = validate_inductive_split([("a", "r", "b")], [], [])
        assert "transductive" in v.table()
