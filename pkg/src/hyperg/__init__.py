"""Desk-scale hypergraph table learning.

Pipeline: parse and augment a sparse table, build its semantics hypergraph,
embed cells/edges/inquiry, propagate with prompt-attentive hypergraph
attention, project the table-edge readout into token space, splice it into
the prompt, and score with small trainable answer heads.
"""

from .corpus import CorpusSpec, ExperimentRecord, TaskKind, gen_corpus
from .hypergraph import SemanticHypergraph, build_hypergraph, incidence, permute
from .model import HypergModel, ModelConfig
from .table import AugmentedTable, Table, augment, detect_sparse_cells
from .training import TrainConfig, evaluate, train

__all__ = [
    "AugmentedTable",
    "CorpusSpec",
    "ExperimentRecord",
    "HypergModel",
    "ModelConfig",
    "SemanticHypergraph",
    "Table",
    "TaskKind",
    "TrainConfig",
    "augment",
    "build_hypergraph",
    "detect_sparse_cells",
    "evaluate",
    "gen_corpus",
    "incidence",
    "permute",
    "train",
]
