"""Dataset preparation: canonicalization, relation-balanced pruning,
visibility partitioning, and inductive-split validation.

These tools operate on raw string triples, before numeric id assignment,
so they can be run on arbitrary TSV inputs.  Every function is
deterministic given its seed.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

StrTriple = tuple[str, str, str]


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class PrunePartitionConfig:
    rho: float = 0.075        # fraction of each relation's triples to keep
    theta: float = 0.7        # fraction of entities/relations marked seen
    alpha: tuple[float, float, float] = (0.8, 0.1, 0.1)
    weight: float = 1.0       # global importance weight w
    seed: int = 0

    def validate(self):
        if not 0 < self.rho <= 1:
            raise PreprocessError("rho must be in (0, 1]")
        if not 0 < self.theta < 1:
            raise PreprocessError("theta must be in (0, 1)")
        if len(self.alpha) != 3 or any(a < 0 for a in self.alpha):
            raise PreprocessError("alpha must be three non-negative ratios")
        if abs(sum(self.alpha) - 1.0) > 1e-9:
            raise PreprocessError("alpha ratios must sum to 1")


@dataclass
class CanonicalizationOutput:
    relations: list[str]                 # extended relation list
    interaction_relation: str
    interaction_relation_id: int         # = previous max relation id + 1
    triples: list[StrTriple]             # enriched triple set (deduplicated)
    entity_ids: dict[str, int]           # dense, 0-based, lexicographic
    skipped_lines: int = 0


def canonicalize(relations: list[str], train_interactions: list[str],
                 kg_triples: list[StrTriple], test_interactions: list[str],
                 interaction_relation: str = "interacts_with",
                 ) -> CanonicalizationOutput:
    """Extend the relation set with an interaction relation, expand
    interaction lines into triples, union with the KG, and assign dense
    entity ids.

    Interaction lines are whitespace-separated entity tokens with the
    first token as the user; lines with fewer than two tokens are
    skipped and counted.
    """
    extended = list(relations)
    if interaction_relation in extended:
        raise PreprocessError(
            f"interaction relation {interaction_relation!r} already present")
    interaction_id = len(extended)
    extended.append(interaction_relation)

    skipped = 0
    triples: dict[StrTriple, None] = {}
    for line in train_interactions:
        tokens = line.split()
        if len(tokens) < 2:
            if tokens or line.strip():
                skipped += 1
            continue
        user, items = tokens[0], tokens[1:]
        for item in items:
            triples.setdefault((user, interaction_relation, item), None)
    for h, r, t in kg_triples:
        triples.setdefault((h, r, t), None)

    entities: set[str] = set()
    for h, _, t in triples:
        entities.update((h, t))
    for line in test_interactions:
        entities.update(line.split())
    entity_ids = {name: i for i, name in enumerate(sorted(entities))}
    return CanonicalizationOutput(extended, interaction_relation,
                                  interaction_id, list(triples),
                                  entity_ids, skipped)


@dataclass
class PartitionResult:
    train: list[StrTriple]
    valid: list[StrTriple]
    test: list[StrTriple]
    seen_entities: set[str] = field(repr=False, default_factory=set)
    seen_relations: set[str] = field(repr=False, default_factory=set)
    metadata: dict = field(default_factory=dict)


def normalized_degrees(triples: list[StrTriple]) -> dict[str, float]:
    """Degree (in + out incidences) scaled so the max-degree entity is 1."""
    degree: Counter[str] = Counter()
    for h, _, t in triples:
        degree[h] += 1
        degree[t] += 1
    if not degree:
        return {}
    top = max(degree.values())
    return {e: d / top for e, d in degree.items()}


def triple_importance(triples: list[StrTriple], weight: float = 1.0,
                      degrees: dict[str, float] | None = None) -> list[float]:
    if degrees is None:
        degrees = normalized_degrees(triples)
    return [weight * (degrees[h] + degrees[t]) / 2.0 for h, _, t in triples]


def prune_relation_balanced(triples: list[StrTriple],
                            config: PrunePartitionConfig) -> list[StrTriple]:
    """Keep the top ceil(rho * |T_r|) triples of each relation by
    importance, ties broken by ascending input position."""
    degrees = normalized_degrees(triples)
    scores = triple_importance(triples, config.weight, degrees)
    by_relation: dict[str, list[int]] = defaultdict(list)
    for i, (_, r, _) in enumerate(triples):
        by_relation[r].append(i)
    kept: list[int] = []
    for r in by_relation:
        idxs = by_relation[r]
        quota = math.ceil(config.rho * len(idxs))
        ranked = sorted(idxs, key=lambda i: (-scores[i], i))
        kept.extend(ranked[:quota])
    kept.sort()
    return [triples[i] for i in kept]


def _all_seen(triple: StrTriple, seen_e: set[str], seen_r: set[str]) -> bool:
    h, r, t = triple
    return h in seen_e and t in seen_e and r in seen_r


def prune_partition(triples: list[StrTriple],
                    config: PrunePartitionConfig) -> PartitionResult:
    """Relation-balanced pruning followed by visibility partitioning.

    Entities and relations are split into seen/unseen by theta; train is
    the all-seen triples, moved toward the alpha[0] target by uniform
    random swaps (capped at 10x the kept size); the remainder is split
    alpha[1]:alpha[2].  Triples in valid/test whose elements are all
    seen after enforcement are counted as guarantee violations in the
    metadata rather than silently dropped.
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    unique = list(dict.fromkeys(triples))
    kept = prune_relation_balanced(unique, config)

    entities = sorted({e for h, _, t in kept for e in (h, t)})
    relations = sorted({r for _, r, _ in kept})
    n_seen_e = max(1, round(config.theta * len(entities))) if entities else 0
    n_seen_r = max(1, round(config.theta * len(relations))) if relations else 0
    seen_e = set(rng.permutation(entities)[:n_seen_e]) if entities else set()
    seen_r = set(rng.permutation(relations)[:n_seen_r]) if relations else set()

    train = [t for t in kept if _all_seen(t, seen_e, seen_r)]
    pool = [t for t in kept if not _all_seen(t, seen_e, seen_r)]

    target = round(config.alpha[0] * len(kept))
    attempts = 0
    cap = 10 * max(len(kept), 1)
    while abs(len(train) - target) > 0 and attempts < cap:
        attempts += 1
        if len(train) > target:
            i = int(rng.integers(len(train)))
            pool.append(train.pop(i))
        elif pool:
            i = int(rng.integers(len(pool)))
            train.append(pool.pop(i))
        else:
            break

    rest = config.alpha[1] + config.alpha[2]
    n_valid = round(len(pool) * (config.alpha[1] / rest)) if rest > 0 else 0
    order = rng.permutation(len(pool))
    valid = [pool[i] for i in order[:n_valid]]
    test = [pool[i] for i in order[n_valid:]]

    violations = sum(1 for t in valid + test if _all_seen(t, seen_e, seen_r))
    meta = {
        "input_triples": len(unique),
        "kept_triples": len(kept),
        "train": len(train), "valid": len(valid), "test": len(test),
        "target_train": target,
        "achieved_alpha": [
            len(s) / len(kept) if kept else 0.0 for s in (train, valid, test)],
        "enforcement_moves": attempts,
        "seen_entities": len(seen_e), "seen_relations": len(seen_r),
        "unseen_guarantee_violations": violations,
    }
    return PartitionResult(train, valid, test, seen_e, seen_r, meta)


@dataclass
class SplitValidation:
    classification: str                  # transductive | entity-inductive |
                                         # relation-inductive | fully-inductive
    new_entities: set[str] = field(repr=False, default_factory=set)
    new_relations: set[str] = field(repr=False, default_factory=set)
    shared_entities: int = 0
    shared_relations: int = 0
    duplicate_triples: list[StrTriple] = field(repr=False, default_factory=list)

    def table(self) -> str:
        return (f"classification      {self.classification}\n"
                f"new entities        {len(self.new_entities)}\n"
                f"new relations       {len(self.new_relations)}\n"
                f"shared entities     {self.shared_entities}\n"
                f"shared relations    {self.shared_relations}\n"
                f"duplicate triples   {len(self.duplicate_triples)}\n")


def validate_inductive_split(train: list[StrTriple], valid: list[StrTriple],
                             test: list[StrTriple]) -> SplitValidation:
    """Classify the split by which inference vocabulary is new, and list
    triples duplicated across splits."""
    train_e = {e for h, _, t in train for e in (h, t)}
    train_r = {r for _, r, _ in train}
    inference = list(valid) + list(test)
    inf_e = {e for h, _, t in inference for e in (h, t)}
    inf_r = {r for _, r, _ in inference}
    new_e = inf_e - train_e
    new_r = inf_r - train_r
    if new_e and new_r:
        kind = "fully-inductive"
    elif new_e:
        kind = "entity-inductive"
    elif new_r:
        kind = "relation-inductive"
    else:
        kind = "transductive"
    train_set = set(train)
    valid_set = set(valid)
    dupes = sorted({t for t in valid if t in train_set}
                   | {t for t in test if t in train_set or t in valid_set})
    return SplitValidation(kind, new_e, new_r,
                           len(inf_e & train_e), len(inf_r & train_r), dupes)
