"""Knowledge-graph link prediction with query-conditioned relation
embeddings computed over a relation-dependency graph.

The model stores no per-entity or per-relation vectors, so a trained
checkpoint applies unchanged to graphs with entirely new vocabularies.
"""

__version__ = "1.0.0"

from .autodiff import NumericError, Tensor
from .checkpoint import (Checkpoint, CheckpointError, deserialize,
                         load_checkpoint, save_checkpoint, serialize)
from .config import load_config, load_preset, preset_names
from .entity_encoder import propagate, score_candidates
from .estimator import RelationalGraphPredictor
from .evaluation import (EvalReport, edge_importance, evaluate, filtered_rank,
                         perturbed_evaluate)
from .kg import (DatasetSplits, KnowledgeGraph, ParseError, ResolutionError,
                 Triple, VocabMap, augment_inverses, build_graph,
                 inverse_relation, load_splits, parse_triples)
from .params import EntityEncoderParams, ModelParams, RelationEncoderParams
from .preprocess import (CanonicalizationOutput, PartitionResult,
                         PreprocessError, PrunePartitionConfig, canonicalize,
                         prune_partition, validate_inductive_split)
from .rdg import (MetaGraphStats, RelationDependencyGraph, build_ingram_graph,
                  build_rdg, build_ultra_metagraph, compute_tau,
                  relation_adjacency, rdg_stats)
from .relation_encoder import encode_relations, relation_attention
from .training import (AdamW, ConfigError, LogRow, TrainConfig, finetune,
                       pretrain_sequence, sample_negatives, train)

__all__ = [
    "AdamW", "CanonicalizationOutput", "Checkpoint", "CheckpointError",
    "ConfigError", "DatasetSplits", "EntityEncoderParams", "EvalReport",
    "KnowledgeGraph", "LogRow", "MetaGraphStats", "ModelParams",
    "NumericError", "ParseError", "PartitionResult", "PreprocessError",
    "PrunePartitionConfig", "RelationDependencyGraph",
    "RelationEncoderParams", "RelationalGraphPredictor", "ResolutionError",
    "Tensor", "TrainConfig", "Triple", "VocabMap", "augment_inverses",
    "build_graph", "build_ingram_graph", "build_rdg", "build_ultra_metagraph",
    "canonicalize", "compute_tau", "deserialize", "edge_importance",
    "encode_relations", "evaluate", "filtered_rank", "finetune",
    "inverse_relation", "load_checkpoint", "load_config", "load_preset",
    "load_splits", "parse_triples", "preset_names",
    "perturbed_evaluate", "pretrain_sequence", "propagate", "prune_partition",
    "rdg_stats", "relation_adjacency", "relation_attention",
    "sample_negatives", "save_checkpoint", "score_candidates", "serialize",
    "train", "validate_inductive_split",
]
