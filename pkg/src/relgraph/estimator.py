"""Scikit-learn style facade over the training and inference pipeline.

`X` is a sequence of (head, relation, tail) string triples.  The fitted
model stores no per-id embeddings, so `predict` and `score` accept
triples over a completely different vocabulary than `fit` saw.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .evaluation import evaluate
from .kg import DatasetSplits, Triple, VocabMap, build_graph, inverse_relation
from .entity_encoder import propagate, score_candidates
from .rdg import build_rdg
from .relation_encoder import encode_relations
from .training import TrainConfig, train


def _check_triples(X):
    triples = list(X)
    for i, row in enumerate(triples):
        if len(row) != 3:
            raise ValueError(f"row {i}: expected (head, relation, tail), got {row!r}")
    return [(str(h), str(r), str(t)) for h, r, t in triples]


def _to_splits(train_triples, valid_triples, test_triples) -> DatasetSplits:
    from .kg import load_splits

    def lines(rows):
        return [f"{h}\t{r}\t{t}" for h, r, t in rows]

    return load_splits(lines(train_triples), lines(valid_triples),
                       lines(test_triples))


class RelationalGraphPredictor(BaseEstimator):
    """Link predictor trained on one graph, applicable to any graph.

    Parameters mirror TrainConfig; see that dataclass for semantics.
    """

    def __init__(self, d=32, heads=4, relation_layers=2, entity_layers=3,
                 relation_activation="relu", entity_activation="relu",
                 learning_rate=1e-3, weight_decay=1e-5, lr_decay=1.0,
                 negatives=16, batch_size=16, max_epochs=100, patience=10,
                 seed=0):
        self.d = d
        self.heads = heads
        self.relation_layers = relation_layers
        self.entity_layers = entity_layers
        self.relation_activation = relation_activation
        self.entity_activation = entity_activation
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.lr_decay = lr_decay
        self.negatives = negatives
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(d=self.d, heads=self.heads,
                           relation_layers=self.relation_layers,
                           entity_layers=self.entity_layers,
                           relation_activation=self.relation_activation,
                           entity_activation=self.entity_activation,
                           learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay,
                           lr_decay=self.lr_decay, negatives=self.negatives,
                           batch_size=self.batch_size,
                           max_epochs=self.max_epochs, patience=self.patience,
                           seed=self.seed)

    def fit(self, X, y=None, valid=None):
        """Train on string triples X; `valid` drives early stopping."""
        train_triples = _check_triples(X)
        valid_triples = _check_triples(valid) if valid is not None else []
        splits = _to_splits(train_triples, valid_triples, [])
        self.checkpoint_, self.log_ = train(splits, self._config())
        self.params_ = self.checkpoint_.to_params()
        return self

    def _inference_state(self, context_triples):
        triples = _check_triples(context_triples)
        vocab = VocabMap()
        ids = [Triple(vocab.entity_id(h), vocab.relation_id(r), vocab.entity_id(t))
               for h, r, t in dict.fromkeys(triples)]
        kg = build_graph(ids, add_inverses=True,
                         entity_count=vocab.entity_count,
                         relation_count=vocab.relation_count)
        vocab.inverse_offset = kg.inverse_offset
        return kg, build_rdg(kg), vocab

    def predict(self, X, context=None, top_k=1):
        """Top-k tail entities for each (head, relation, ?) query.

        `context` is the fact graph to reason over; it defaults to the
        training triples implied by `fit` being on the same graph, so
        pass it explicitly for zero-shot use on a new graph.
        """
        if not hasattr(self, "params_"):
            raise RuntimeError("call fit before predict")
        if context is None:
            raise ValueError("predict requires context triples to reason over")
        kg, rdg, vocab = self._inference_state(context)
        results = []
        rq_cache: dict[int, object] = {}
        for row in X:
            h, r = str(row[0]), str(row[1])
            e_q = vocab.entity_id(h, frozen=True)
            r_q = vocab.relation_id(r, frozen=True)
            if r_q not in rq_cache:
                rq_cache[r_q] = encode_relations(rdg, r_q, self.params_.relation)
            ctx = propagate(kg, rdg, self.params_.relation, self.params_.entity,
                            e_q, r_q, rq_embeddings=rq_cache[r_q])
            ranked = score_candidates(ctx, self.params_.entity)
            results.append([vocab.entity_names[e] for e, _ in ranked[:top_k]])
        return [r[0] if r else None for r in results] if top_k == 1 else results

    def score(self, X, y=None, context=None):
        """Filtered MRR of the triples in X over the context graph."""
        if not hasattr(self, "params_"):
            raise RuntimeError("call fit before score")
        if context is None:
            raise ValueError("score requires context triples to reason over")
        context_triples = _check_triples(context)
        eval_triples = _check_triples(X)
        splits = _to_splits(context_triples, [], eval_triples)
        return evaluate(self.params_, splits).mrr
