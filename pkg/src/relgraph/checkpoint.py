"""Binary checkpoint format.

Layout (all little-endian):
  magic "GORC1" | u32 format version | u32 d, H, L_r, L_e
  | relation activation tag | entity activation tag
  | u64 tensor count | tensors: name, u32 ndim, u64 dims..., float32 payload
  | u8 has_meta | (u64 epoch, f64 best_val_mrr)
Strings are u64 length-prefixed UTF-8.  Round trips are bit-exact.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .params import EntityEncoderParams, ModelParams, RelationEncoderParams

MAGIC = b"GORC1"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    d: int
    heads: int
    relation_layers: int
    entity_layers: int
    relation_activation: str
    entity_activation: str
    tensors: dict[str, np.ndarray] = field(repr=False)  # float32, declared order
    epoch: int | None = None
    best_val_mrr: float | None = None

    @classmethod
    def from_params(cls, params: ModelParams, epoch=None,
                    best_val_mrr=None) -> "Checkpoint":
        tensors = {name: t.data.astype(np.float32)
                   for name, t in params.tensors().items()}
        return cls(params.d, params.relation.heads, params.relation.layers,
                   params.entity.layers, params.relation.activation,
                   params.entity.activation, tensors, epoch, best_val_mrr)

    def to_params(self) -> ModelParams:
        rel = RelationEncoderParams.init(np.random.default_rng(0), self.d,
                                         self.heads, self.relation_layers,
                                         self.relation_activation)
        ent = EntityEncoderParams.init(np.random.default_rng(0), self.d,
                                       self.entity_layers, self.entity_activation)
        params = ModelParams(rel, ent)
        slots = params.tensors()
        if set(slots) != set(self.tensors):
            raise CheckpointError("tensor names do not match model dimensions")
        for name, t in slots.items():
            stored = self.tensors[name]
            if stored.shape != t.data.shape:
                raise CheckpointError(
                    f"tensor {name}: shape {stored.shape} != expected {t.data.shape}")
            slots[name].data = stored.astype(t.data.dtype)
        return params


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<Q", len(raw)) + raw


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def string(self) -> str:
        (n,) = self.unpack("Q")
        return self.take(n).decode("utf-8")


def serialize(ckpt: Checkpoint) -> bytes:
    out = [MAGIC,
           struct.pack("<5I", VERSION, ckpt.d, ckpt.heads,
                       ckpt.relation_layers, ckpt.entity_layers),
           _pack_str(ckpt.relation_activation),
           _pack_str(ckpt.entity_activation),
           struct.pack("<Q", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        out.append(_pack_str(name))
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.astype("<f4").tobytes())
    if ckpt.epoch is None:
        out.append(struct.pack("<B", 0))
    else:
        out.append(struct.pack("<B", 1))
        out.append(struct.pack("<Qd", ckpt.epoch,
                               -1.0 if ckpt.best_val_mrr is None else ckpt.best_val_mrr))
    return b"".join(out)


def deserialize(blob: bytes) -> Checkpoint:
    rd = _Reader(blob)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, d, heads, l_r, l_e = rd.unpack("5I")
    if version != VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    rel_act = rd.string()
    ent_act = rd.string()
    (count,) = rd.unpack("Q")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = rd.string()
        (ndim,) = rd.unpack("I")
        shape = rd.unpack(f"{ndim}Q") if ndim else ()
        n_items = int(np.prod(shape)) if shape else 1
        payload = rd.take(4 * n_items)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    (has_meta,) = rd.unpack("B")
    epoch = best = None
    if has_meta:
        epoch, best = rd.unpack("Qd")
        best = None if best < 0 else best
    if rd.pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(d, heads, l_r, l_e, rel_act, ent_act, tensors, epoch, best)


def save_checkpoint(path, ckpt: Checkpoint):
    with open(path, "wb") as fh:
        fh.write(serialize(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
