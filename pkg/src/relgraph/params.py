"""Learnable parameter containers for the two encoders and the scorer.

All tensors are dimension-only (no vocabulary-sized embeddings), which
is what lets a trained model transfer to graphs with different entity
and relation vocabularies.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class RelationEncoderParams:
    """Per-layer, per-head weights for relation-level message passing."""

    d: int
    heads: int
    layers: int
    activation: str
    w1: list = field(repr=False)        # [layer][head] (d, d) past-message transform
    w2: list = field(repr=False)        # [layer][head] (d, d) self-message transform
    w_att: list = field(repr=False)     # [head] (d, d) attention projection, layer-shared
    a: Tensor = field(repr=False)       # (2d, 1) attention vector, shared across heads

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, heads: int, layers: int,
             activation: str = "relu") -> "RelationEncoderParams":
        mk = lambda: Tensor(_xavier(rng, d, d), requires_grad=True)
        w1 = [[mk() for _ in range(heads)] for _ in range(layers)]
        w2 = [[mk() for _ in range(heads)] for _ in range(layers)]
        w_att = [mk() for _ in range(heads)]
        a = Tensor(rng.normal(0.0, 0.1, size=(2 * d, 1)), requires_grad=True)
        return cls(d, heads, layers, activation, w1, w2, w_att, a)

    def tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for l in range(self.layers):
            for h in range(self.heads):
                out[f"rel.w1.l{l}.h{h}"] = self.w1[l][h]
                out[f"rel.w2.l{l}.h{h}"] = self.w2[l][h]
        for h in range(self.heads):
            out[f"rel.watt.h{h}"] = self.w_att[h]
        out["rel.a"] = self.a
        return out


@dataclass
class EntityEncoderParams:
    """Per-layer weights for entity-level message passing plus the scorer."""

    d: int
    layers: int
    activation: str
    w: list = field(repr=False)         # [layer] (d, d) update transform
    w_att: list = field(repr=False)     # [layer] (d, 3d) attention input projection
    v_att: list = field(repr=False)     # [layer] (d, 1) attention output vector
    w_score: Tensor = field(repr=False) # (d, 1) scoring vector

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, layers: int,
             activation: str = "relu") -> "EntityEncoderParams":
        w = [Tensor(_xavier(rng, d, d), requires_grad=True) for _ in range(layers)]
        w_att = [Tensor(_xavier(rng, d, 3 * d), requires_grad=True)
                 for _ in range(layers)]
        v_att = [Tensor(rng.normal(0.0, 0.1, size=(d, 1)), requires_grad=True)
                 for _ in range(layers)]
        w_score = Tensor(rng.normal(0.0, 0.1, size=(d, 1)), requires_grad=True)
        return cls(d, layers, activation, w, w_att, v_att, w_score)

    def tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for l in range(self.layers):
            out[f"ent.w.l{l}"] = self.w[l]
            out[f"ent.watt.l{l}"] = self.w_att[l]
            out[f"ent.vatt.l{l}"] = self.v_att[l]
        out["ent.wscore"] = self.w_score
        return out

    def final_layer_names(self) -> set[str]:
        l = self.layers - 1
        return {f"ent.w.l{l}", f"ent.watt.l{l}", f"ent.vatt.l{l}", "ent.wscore"}


@dataclass
class ModelParams:
    relation: RelationEncoderParams
    entity: EntityEncoderParams

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, heads: int,
             relation_layers: int, entity_layers: int,
             relation_activation: str = "relu",
             entity_activation: str = "relu") -> "ModelParams":
        return cls(RelationEncoderParams.init(rng, d, heads, relation_layers,
                                              relation_activation),
                   EntityEncoderParams.init(rng, d, entity_layers,
                                            entity_activation))

    def tensors(self) -> dict[str, Tensor]:
        out = self.relation.tensors()
        out.update(self.entity.tensors())
        return out

    def copy(self) -> "ModelParams":
        import copy as _copy
        new = _copy.deepcopy(self)
        for t in new.tensors().values():
            t.grad = None
        return new

    def zero_grads(self):
        for t in self.tensors().values():
            t.grad = None

    @property
    def d(self):
        return self.relation.d
