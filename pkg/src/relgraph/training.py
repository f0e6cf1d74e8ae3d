"""Contrastive training: negative sampling, exact gradients, AdamW loop.

Randomness flows from a single seed, expanded in a fixed order:
stream 0 = parameter init, stream 1 = query shuffling, stream 2 =
negative sampling.  Fixed seed and thread count give identical logs.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tensor
from .checkpoint import Checkpoint
from .entity_encoder import propagate_mixed, score_tensor
from .evaluation import evaluate
from .kg import DatasetSplits, Triple, inverse_relation
from .params import ModelParams
from .rdg import build_rdg
from .relation_encoder import encode_relations


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    d: int = 32
    heads: int = 4
    relation_layers: int = 2
    entity_layers: int = 3
    relation_activation: str = "relu"
    entity_activation: str = "relu"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    lr_decay: float = 1.0
    negatives: int = 16
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    freeze_policy: str = "none"       # "none" | "final-layer"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.freeze_policy not in ("none", "final-layer"):
            raise ConfigError(f"unknown freeze_policy: {self.freeze_policy!r}")


@dataclass
class LogRow:
    epoch: int
    train_loss: float
    val_mrr: float
    val_h1: float
    val_h10: float
    lr: float
    skipped_queries: int

    def csv(self) -> str:
        return (f"{self.epoch},{self.train_loss:.6f},{self.val_mrr:.6f},"
                f"{self.val_h1:.6f},{self.val_h10:.6f},{self.lr:.8f},"
                f"{self.skipped_queries}")

    @staticmethod
    def header() -> str:
        return "epoch,train_loss,val_mrr,val_h1,val_h10,lr,skipped_queries"


def loss(positive_score: Tensor, negative_scores: Tensor | None) -> Tensor:
    """-log sigmoid(s+) - sum log(1 - sigmoid(s-)), softplus-stabilized."""
    total = ad.softplus(-positive_score).sum()
    if negative_scores is not None and negative_scores.data.size:
        total = total + ad.softplus(negative_scores).sum()
    return total


def sample_negatives(query: Triple, known_true, visited_mask: np.ndarray,
                     n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw without replacement from reached non-answers."""
    positives = known_true.get((query.head, query.relation), {query.tail})
    pool = np.flatnonzero(visited_mask)
    pool = pool[~np.isin(pool, np.fromiter(positives, dtype=np.intp,
                                           count=len(positives)))]
    if len(pool) <= n:
        return rng.permutation(pool)
    return rng.choice(pool, size=n, replace=False)


class AdamW:
    """Adaptive moments with bias correction and decoupled weight decay."""

    def __init__(self, names):
        self.m = {n: None for n in names}
        self.v = {n: None for n in names}
        self.t = 0

    def step(self, tensors: dict[str, Tensor], grads: dict[str, np.ndarray],
             lr: float, weight_decay: float, beta1=0.9, beta2=0.999,
             eps=1e-8, frozen: set[str] = frozenset()):
        self.t += 1
        for name, tensor in tensors.items():
            if name in frozen:
                continue
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(tensor.data)
            if self.m[name] is None:
                self.m[name] = np.zeros_like(tensor.data)
                self.v[name] = np.zeros_like(tensor.data)
            self.m[name] = beta1 * self.m[name] + (1 - beta1) * g
            self.v[name] = beta2 * self.v[name] + (1 - beta2) * g * g
            m_hat = self.m[name] / (1 - beta1 ** self.t)
            v_hat = self.v[name] / (1 - beta2 ** self.t)
            tensor.data = (tensor.data
                           - lr * m_hat / (np.sqrt(v_hat) + eps)
                           - lr * weight_decay * tensor.data)


def frozen_names(params: ModelParams, freeze_policy: str) -> set[str]:
    if freeze_policy == "none":
        return set()
    final = params.entity.final_layer_names()
    return set(params.tensors()) - final


def fact_index(kg) -> dict[Triple, list[int]]:
    """Positions of every (possibly duplicated) fact in the graph arrays."""
    index: dict[Triple, list[int]] = {}
    for i, (h, r, t) in enumerate(zip(kg.heads, kg.relations, kg.tails)):
        index.setdefault(Triple(int(h), int(r), int(t)), []).append(i)
    return index


def _query_exclusions(q: Triple, kg, index: dict) -> np.ndarray:
    """Indices of the query's own edge and its inverse, if present."""
    hits = list(index.get(q, ()))
    if kg.inverse_offset:
        inv = Triple(q.tail, inverse_relation(q.relation, kg.inverse_offset), q.head)
        hits += index.get(inv, ())
    return np.asarray(hits, dtype=np.intp)


def batch_gradients(batch, splits: DatasetSplits, rdg, params: ModelParams,
                    config: TrainConfig, rng: np.random.Generator,
                    l2: float = 0.0, frozen: set[str] = frozenset(),
                    index: dict | None = None):
    """Forward/backward over a batch of queries.

    Returns (mean loss, grads by tensor name, skipped count).  Queries
    whose answer is unreachable within the entity layers are skipped.
    Each query's own edge (and its inverse) is hidden from message
    passing so the target cannot be copied from the graph.
    With `l2` > 0 the gradient of l2 * ||theta||^2 is added.
    """
    kg = splits.train
    if index is None:
        index = fact_index(kg)
    tensors = params.tensors()
    params.zero_grads()
    total_loss = None
    used = 0
    skipped = 0
    bctx = propagate_mixed(
        kg, rdg, params.relation, params.entity,
        [q.head for q in batch], [q.relation for q in batch],
        exclude_facts=[_query_exclusions(q, kg, index) for q in batch])
    scores = score_tensor(bctx, params.entity)
    n = kg.entity_count
    for b, q in enumerate(batch):
        if not bctx.visited[b * n + q.tail]:
            skipped += 1
            continue
        pos = ad.slice_rows(scores, b * n + q.tail, b * n + q.tail + 1)
        negs = sample_negatives(q, splits.known_true,
                                bctx.visited[bctx.query_slice(b)],
                                config.negatives, rng)
        neg = ad.gather_rows(scores, negs + b * n) if len(negs) else None
        sample_loss = loss(pos, neg)
        total_loss = (sample_loss if total_loss is None
                      else total_loss + sample_loss)
        used += 1
    if total_loss is None:
        return 0.0, {name: np.zeros_like(t.data) for name, t in tensors.items()}, skipped
    mean_loss = total_loss * (1.0 / used)
    mean_loss.backward()
    grads = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if l2:
            g = g + 2.0 * l2 * t.data
        if name in frozen:
            g = np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in tensor {name}")
        grads[name] = g
    return float(mean_loss.data), grads, skipped


def _training_queries(splits: DatasetSplits) -> list[Triple]:
    """Both prediction directions of every deduplicated train triple."""
    offset = splits.train.inverse_offset
    queries = list(splits.train_queries)
    if offset:
        queries += [Triple(q.tail, inverse_relation(q.relation, offset), q.head)
                    for q in splits.train_queries]
    return queries


def train(splits: DatasetSplits, config: TrainConfig,
          params: ModelParams | None = None,
          log_sink=None) -> tuple[Checkpoint, list[LogRow]]:
    """Epoch loop with early stopping on validation MRR."""
    config.validate()
    if not splits.train_queries:
        raise ConfigError("empty training set")
    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence(config.seed).spawn(3)]
    init_rng, shuffle_rng, neg_rng = streams
    if params is None:
        params = ModelParams.init(init_rng, config.d, config.heads,
                                  config.relation_layers, config.entity_layers,
                                  config.relation_activation,
                                  config.entity_activation)
    rdg = build_rdg(splits.train)
    index = fact_index(splits.train)
    frozen = frozen_names(params, config.freeze_policy)
    opt = AdamW(params.tensors().keys())
    queries = _training_queries(splits)
    eval_queries = splits.valid_queries or splits.train_queries

    lr = config.learning_rate
    best_params = params.copy()
    best_mrr = -np.inf
    best_epoch = 0
    since_best = 0
    log: list[LogRow] = []
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(queries))
        epoch_loss = 0.0
        skipped = 0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [queries[i] for i in order[start:start + config.batch_size]]
            batch_loss, grads, batch_skipped = batch_gradients(
                batch, splits, rdg, params, config, neg_rng, frozen=frozen,
                index=index)
            opt.step(params.tensors(), grads, lr, config.weight_decay,
                     config.beta1, config.beta2, config.eps, frozen)
            epoch_loss += batch_loss
            skipped += batch_skipped
            n_batches += 1
        report = evaluate(params, splits, queries=eval_queries, rdg=rdg)
        row = LogRow(epoch, epoch_loss / max(n_batches, 1), report.mrr,
                     report.hits1, report.hits10, lr, skipped)
        log.append(row)
        if log_sink is not None:
            log_sink(row)
        if report.mrr > best_mrr:
            best_mrr = report.mrr
            best_params = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
        lr *= config.lr_decay
    ckpt = Checkpoint.from_params(best_params, epoch=best_epoch,
                                  best_val_mrr=None if best_mrr < 0 else best_mrr)
    return ckpt, log


def pretrain_sequence(stages: list[tuple[DatasetSplits, TrainConfig]],
                      log_sink=None) -> tuple[Checkpoint, list[list[LogRow]]]:
    """Train on each dataset in order, rolling all parameters forward."""
    params = None
    logs = []
    ckpt = None
    for splits, config in stages:
        ckpt, log = train(splits, config, params=params, log_sink=log_sink)
        params = ckpt.to_params()
        logs.append(log)
    if ckpt is None:
        raise ConfigError("pretrain_sequence requires at least one stage")
    return ckpt, logs


def finetune(ckpt: Checkpoint, splits: DatasetSplits, config: TrainConfig,
             log_sink=None) -> tuple[Checkpoint, list[LogRow]]:
    """Update only the final entity layer and scorer; everything else frozen."""
    config = replace(config, freeze_policy="final-layer",
                     d=ckpt.d, heads=ckpt.heads,
                     relation_layers=ckpt.relation_layers,
                     entity_layers=ckpt.entity_layers,
                     relation_activation=ckpt.relation_activation,
                     entity_activation=ckpt.entity_activation)
    if config.max_epochs == 0:
        return ckpt, []
    params = ckpt.to_params()
    return train(splits, config, params=params, log_sink=log_sink)
