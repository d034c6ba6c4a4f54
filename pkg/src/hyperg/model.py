"""Full pipeline model: embedder + propagation network + projector + heads.

Parameters live in one flat name -> array dict so the optimizer and the
checkpoint format can treat them uniformly.  Records are "prepared" once
(augmentation, graph construction, tokenization) and the prepared form is
what forward passes consume; preparation is deterministic, so caching it
never changes results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import ExperimentRecord, TaskKind
from .embedding import EmbeddingConfig, SemanticEmbedder, init_embedding_params
from .hypergraph import SemanticHypergraph, build_hypergraph
from .integrate import (
    DEFAULT_TEMPLATE,
    SourceTag,
    classify_tfv,
    init_head_params,
    init_projector_params,
    project,
    render_prompt,
    score_cells,
    select_answer_cell,
    splice,
    split_at_marker,
)
from .phl import GraphIndex, PHLConfig, PHLOutput, graph_index, init_phl_params, phl_forward
from .table import augment


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    heads: int = 12
    layers: int = 2
    vocab_size: int = 32768
    dropout_rate: float = 0.1
    token_dim: int | None = None  # d'; defaults to dim
    ff_hidden: int | None = None
    leaky_slope: float = 0.01
    phl_init: str = "random"
    template: str = DEFAULT_TEMPLATE
    seed: int = 0

    @property
    def embedding(self) -> EmbeddingConfig:
        return EmbeddingConfig(dim=self.dim, dropout_rate=self.dropout_rate,
                               vocab_size=self.vocab_size, seed=self.seed)

    @property
    def phl(self) -> PHLConfig:
        return PHLConfig(heads=self.heads, layers=self.layers, dim=self.dim,
                         leaky_slope=self.leaky_slope, ff_hidden=self.ff_hidden,
                         dropout_rate=self.dropout_rate,
                         init_scheme=self.phl_init)

    @property
    def token_dim_resolved(self) -> int:
        return self.token_dim if self.token_dim is not None else self.dim


@dataclass
class PreparedRecord:
    record: ExperimentRecord
    graph: SemanticHypergraph
    gi: GraphIndex
    node_tokens: list[list[int]]
    edge_tokens: list[list[int]]
    inquiry_tokens: list[int]
    prefix_ids: list[int]
    suffix_ids: list[int]


@dataclass
class ForwardResult:
    logits: ad.Tensor | None  # TFV: 2 logits
    cell_scores: ad.Tensor | None  # TQA-lite: |V| scores
    phl_out: PHLOutput
    h_omega: ad.Tensor
    prepared: PreparedRecord

    def prediction(self) -> str:
        """"yes"/"no" for TFV; selected cell text for TQA-lite."""
        if self.logits is not None:
            return "yes" if int(np.argmax(self.logits.value)) == 1 else "no"
        idx = select_answer_cell(self.cell_scores.value,
                                 self.prepared.graph.node_text)
        return self.prepared.graph.node_text[idx]

    def predicted_node(self) -> int:
        return select_answer_cell(self.cell_scores.value,
                                  self.prepared.graph.node_text)


class HypergModel:
    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.embedder = SemanticEmbedder(cfg.embedding)
        if params is None:
            params = {}
            params.update(init_embedding_params(cfg.embedding))
            params.update(init_phl_params(cfg.phl, seed=cfg.seed))
            params.update(init_projector_params(cfg.dim, cfg.token_dim_resolved, seed=cfg.seed))
            params.update(init_head_params(cfg.dim, cfg.token_dim_resolved, seed=cfg.seed))
        self.params = params

    def wrap(self, tape: ad.Tape, trainable: bool = True) -> dict[str, ad.Tensor]:
        return {name: ad.Tensor(arr, requires_grad=trainable, tape=tape)
                for name, arr in self.params.items()}

    def prepare(self, record: ExperimentRecord, augmenter=None,
                graph: SemanticHypergraph | None = None) -> PreparedRecord:
        if graph is None:
            graph = build_hypergraph(augment(record.table, augmenter))
        tok = self.embedder.tokenizer
        rendered, span = render_prompt(self.cfg.template, record.table, record.inquiry)
        prefix_text, suffix_text = split_at_marker(rendered, span)
        return PreparedRecord(
            record=record,
            graph=graph,
            gi=graph_index(graph),
            node_tokens=[tok.tokenize(t) for t in graph.node_text],
            edge_tokens=[tok.tokenize(t) for t in graph.edge_text],
            inquiry_tokens=tok.tokenize(record.inquiry),
            prefix_ids=tok.tokenize(prefix_text) if prefix_text.strip() else [],
            suffix_ids=tok.tokenize(suffix_text) if suffix_text.strip() else [],
        )

    def forward(self, prep: PreparedRecord, params: dict[str, ad.Tensor],
                train: bool = False, rng: np.random.Generator | None = None,
                log_attention: bool = False, no_phl: bool = False,
                no_inquiry: bool = False) -> ForwardResult:
        emb = self.embedder
        node_e = emb.embed_token_lists(params, prep.node_tokens, train, rng)
        edge_e = emb.embed_token_lists(params, prep.edge_tokens, train, rng)
        h_omega = ad.reshape(
            emb.embed_token_lists(params, [prep.inquiry_tokens], train, rng),
            (self.cfg.dim,))
        out = phl_forward(self.cfg.phl, params, prep.gi, node_e, edge_e, h_omega,
                          train=train, rng=rng, log_attention=log_attention,
                          no_phl=no_phl, no_inquiry=no_inquiry)
        if prep.record.task is TaskKind.TFV:
            table_vec = project(params, out.table_embed)
            prompt_ids = prep.prefix_ids + prep.suffix_ids
            prompt_vecs = emb.embed_token_ids(params, prompt_ids, train, rng)
            tags = (SourceTag.PROMPT_TOKEN,) * len(prompt_ids)
            spliced = splice(prompt_vecs, tags, table_vec, len(prep.prefix_ids))
            logits = classify_tfv(params, spliced, h_omega)
            return ForwardResult(logits, None, out, h_omega, prep)
        scores = score_cells(params, out.node_h, h_omega)
        return ForwardResult(None, scores, out, h_omega, prep)

    def run(self, record: ExperimentRecord, train: bool = False,
            rng: np.random.Generator | None = None, log_attention: bool = False,
            no_phl: bool = False, no_inquiry: bool = False,
            augmenter=None) -> ForwardResult:
        """Prepare + forward on a fresh tape (eval-style convenience)."""
        tape = ad.Tape()
        params = self.wrap(tape, trainable=train)
        prep = self.prepare(record, augmenter=augmenter)
        return self.forward(prep, params, train=train, rng=rng,
                            log_attention=log_attention, no_phl=no_phl,
                            no_inquiry=no_inquiry)


def target_index(prep: PreparedRecord) -> int:
    """Training target: class index for TFV, gold node id for TQA-lite."""
    record = prep.record
    if record.task is TaskKind.TFV:
        return 1 if record.gold == "yes" else 0
    row, col, _ = record.gold
    return row * prep.graph.col_count + col
