"""Deterministic hashing tokenizer and the trainable semantic embedder.

Text is lowercased, split at whitespace/punctuation boundaries, and each
token is hashed (FNV-1a 64-bit) into a fixed vocabulary.  Embedding a text
mean-pools its token vectors, layer-normalizes, and (in train mode) applies
inverted dropout.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .hypergraph import SemanticHypergraph
from .rng import stream_rng

PAD_ID = 0
EMPTY_ID = 1
UNK_ID = 2
_NUM_SPECIALS = 3

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class HashTokenizer:
    vocab_size: int = 32768

    def tokenize(self, text: str) -> list[int]:
        """Deterministic token ids in [0, vocab_size); empty text -> [EMPTY]."""
        words = _TOKEN_RE.findall(text.lower())
        if not words:
            return [EMPTY_ID]
        span = self.vocab_size - _NUM_SPECIALS
        return [fnv1a_64(w.encode("utf-8")) % span + _NUM_SPECIALS for w in words]


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 64
    dropout_rate: float = 0.1
    vocab_size: int = 32768
    seed: int = 0
    ln_eps: float = 1e-5

    def __post_init__(self) -> None:
        assert self.dim >= 1
        assert 0.0 <= self.dropout_rate < 1.0


def init_embedding_params(cfg: EmbeddingConfig) -> dict[str, np.ndarray]:
    rng = stream_rng(cfg.seed, "embedding")
    bound = 1.0 / math.sqrt(cfg.dim)
    return {
        "emb/table": rng.uniform(-bound, bound, size=(cfg.vocab_size, cfg.dim)),
        "emb/ln_g": np.ones(cfg.dim),
        "emb/ln_b": np.zeros(cfg.dim),
    }


class SemanticEmbedder:
    """Embed texts via hash tokens -> mean pool -> layer norm -> dropout.

    One embedding table is shared by node texts, hyperedge descriptions,
    the inquiry, and the prompt tokens.
    """

    def __init__(self, cfg: EmbeddingConfig):
        self.cfg = cfg
        self.tokenizer = HashTokenizer(cfg.vocab_size)

    def embed_token_lists(self, params: dict[str, ad.Tensor],
                          token_lists: list[list[int]], train: bool = False,
                          rng: np.random.Generator | None = None) -> ad.Tensor:
        """One pooled d-vector per token list, stacked into an (n, d) Tensor."""
        flat = [tid for ids in token_lists for tid in ids]
        seg = np.repeat(np.arange(len(token_lists)), [len(ids) for ids in token_lists])
        counts = np.array([len(ids) for ids in token_lists], dtype=np.float64)
        rows = ad.gather_rows(params["emb/table"], flat)
        sums = ad.segment_sum(rows, seg, len(token_lists))
        pooled = ad.mul(sums, ad.Tensor((1.0 / counts)[:, None]))
        normed = ad.layer_norm(pooled, params["emb/ln_g"], params["emb/ln_b"], self.cfg.ln_eps)
        return ad.dropout(normed, self.cfg.dropout_rate, train, rng)

    def embed_texts(self, params: dict[str, ad.Tensor], texts: list[str],
                    train: bool = False, rng: np.random.Generator | None = None) -> ad.Tensor:
        return self.embed_token_lists(params, [self.tokenizer.tokenize(t) for t in texts],
                                      train=train, rng=rng)

    def embed_text(self, params: dict[str, ad.Tensor], text: str,
                   train: bool = False, rng: np.random.Generator | None = None) -> ad.Tensor:
        """A single d-vector for one text."""
        stacked = self.embed_texts(params, [text], train=train, rng=rng)
        return ad.reshape(stacked, (self.cfg.dim,))

    def embed_token_ids(self, params: dict[str, ad.Tensor], ids: list[int],
                        train: bool = False, rng: np.random.Generator | None = None) -> ad.Tensor:
        """Per-token vectors (no pooling): gather -> layer norm -> dropout."""
        rows = ad.gather_rows(params["emb/table"], ids)
        normed = ad.layer_norm(rows, params["emb/ln_g"], params["emb/ln_b"], self.cfg.ln_eps)
        return ad.dropout(normed, self.cfg.dropout_rate, train, rng)

    def embed_hypergraph(self, params: dict[str, ad.Tensor], g: SemanticHypergraph,
                         inquiry: str, train: bool = False,
                         rng: np.random.Generator | None = None
                         ) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
        """Return (node_embeds |V| x d, edge_embeds |E| x d, inquiry vector)."""
        node_embeds = self.embed_texts(params, list(g.node_text), train=train, rng=rng)
        edge_embeds = self.embed_texts(params, list(g.edge_text), train=train, rng=rng)
        h_omega = self.embed_text(params, inquiry, train=train, rng=rng)
        return node_embeds, edge_embeds, h_omega
