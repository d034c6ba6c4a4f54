"""Projection into token space, placeholder splicing, and answer heads.

The final table-edge state (2d) is projected through a two-layer ReLU MLP
into token space (d'), spliced into the prompt's token-embedding sequence
at the placeholder marker, and consumed by small trainable heads standing
in for an LLM decoder: a two-class fact-verification head and a per-cell
scorer for lookup answers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .errors import DuplicateMarker, MissingMarker
from .rng import stream_rng
from .table import Table, serialize_markdown

TABLE_MARKER = "<TABLE_HYPEREDGE>"
INQUIRY_MARKER = "<INQUIRY>"
TABLE_MD_MARKER = "<TABLE_MD>"

DEFAULT_TEMPLATE = (
    "Verify against the table. Claim: <INQUIRY>\n"
    "<TABLE_MD>\n"
    "Structured knowledge: <TABLE_HYPEREDGE>\n"
    "Answer yes or no."
)


class SourceTag(Enum):
    PROMPT_TOKEN = "prompt"
    TABLE_EMBED = "table"


@dataclass(frozen=True)
class TokenSequence:
    """Embedded token vectors with a per-position source tag."""

    vectors: ad.Tensor  # (length, d')
    tags: tuple[SourceTag, ...]

    def __post_init__(self) -> None:
        assert self.vectors.shape[0] == len(self.tags)

    def __len__(self) -> int:
        return len(self.tags)


def init_projector_params(dim: int, token_dim: int | None = None,
                          seed: int = 0) -> dict[str, np.ndarray]:
    """Two linear layers 2d -> d' -> d' with ReLU in between."""
    d_out = token_dim if token_dim is not None else dim
    rng = stream_rng(seed, "projector")

    def glorot(fi, fo):
        b = math.sqrt(6.0 / (fi + fo))
        return rng.uniform(-b, b, size=(fi, fo))

    return {
        "proj/w1": glorot(2 * dim, d_out),
        "proj/b1": np.zeros(d_out),
        "proj/w2": glorot(d_out, d_out),
        "proj/b2": np.zeros(d_out),
    }


def project(p: dict[str, ad.Tensor], table_embed: ad.Tensor) -> ad.Tensor:
    """linear2(ReLU(linear1(x))): 2d -> d'."""
    hidden = ad.relu(ad.linear(table_embed, p["proj/w1"], p["proj/b1"]))
    return ad.linear(hidden, p["proj/w2"], p["proj/b2"])


def render_prompt(template: str, table: Table, inquiry: str) -> tuple[str, tuple[int, int]]:
    """Fill the inquiry and table slots; report the placeholder char span."""
    count = template.count(TABLE_MARKER)
    if count == 0:
        raise MissingMarker(f"template lacks {TABLE_MARKER}")
    if count > 1:
        raise DuplicateMarker(f"template contains {TABLE_MARKER} more than once")
    rendered = template.replace(INQUIRY_MARKER, inquiry)
    rendered = rendered.replace(TABLE_MD_MARKER, serialize_markdown(table))
    start = rendered.index(TABLE_MARKER)
    return rendered, (start, start + len(TABLE_MARKER))


def split_at_marker(rendered: str, span: tuple[int, int]) -> tuple[str, str]:
    return rendered[: span[0]], rendered[span[1]:]


def splice(prompt_vectors: ad.Tensor, tags: tuple[SourceTag, ...],
           table_vec: ad.Tensor, position: int) -> TokenSequence:
    """Insert the projected table vector at `position` in the sequence."""
    length = prompt_vectors.shape[0]
    if not 0 <= position <= length:
        raise IndexError(f"splice position {position} out of range for length {length}")
    d = table_vec.shape[0]
    table_row = ad.reshape(table_vec, (1, d))
    if position == 0:
        vectors = ad.concat([table_row, prompt_vectors], axis=0)
    elif position == length:
        vectors = ad.concat([prompt_vectors, table_row], axis=0)
    else:
        prefix = ad.gather_rows(prompt_vectors, np.arange(position))
        suffix = ad.gather_rows(prompt_vectors, np.arange(position, length))
        vectors = ad.concat([prefix, table_row, suffix], axis=0)
    new_tags = tags[:position] + (SourceTag.TABLE_EMBED,) + tags[position:]
    return TokenSequence(vectors, new_tags)


def init_head_params(dim: int, token_dim: int | None = None,
                     seed: int = 0) -> dict[str, np.ndarray]:
    d_tok = token_dim if token_dim is not None else dim
    rng = stream_rng(seed, "answer_heads")

    def glorot(fi, fo):
        b = math.sqrt(6.0 / (fi + fo))
        return rng.uniform(-b, b, size=(fi, fo))

    return {
        # TFV: linear over concat(pooled sequence mean, projected inquiry).
        "head/tfv_omega_w": glorot(dim, d_tok),
        "head/tfv_omega_b": np.zeros(d_tok),
        "head/tfv_w": glorot(2 * d_tok, 2),
        "head/tfv_b": np.zeros(2),
        # TQA-lite: score_i = (node_h[i] @ W_s) . mlp(h_omega).
        "head/tqa_ws": glorot(dim, dim),
        "head/tqa_q_w": glorot(dim, dim),
        "head/tqa_q_b": np.zeros(dim),
    }


def classify_tfv(p: dict[str, ad.Tensor], spliced: TokenSequence,
                 h_omega: ad.Tensor) -> ad.Tensor:
    """Two logits (no=0, yes=1) from the pooled sequence and the inquiry.

    Mean pooling over the token vectors keeps the logits exactly invariant
    under row/column shuffles of the source table, because shuffling only
    permutes the multiset of prompt tokens.
    """
    pooled = ad.mean(spliced.vectors, axis=0)
    omega_proj = ad.linear(h_omega, p["head/tfv_omega_w"], p["head/tfv_omega_b"])
    feats = ad.concat([pooled, omega_proj], axis=0)
    return ad.linear(feats, p["head/tfv_w"], p["head/tfv_b"])


def score_cells(p: dict[str, ad.Tensor], node_h: ad.Tensor,
                h_omega: ad.Tensor) -> ad.Tensor:
    """Per-node answer scores for the lookup-QA head: shape (|V|,)."""
    query = ad.linear(h_omega, p["head/tqa_q_w"], p["head/tqa_q_b"])
    return ad.matmul(ad.matmul(node_h, p["head/tqa_ws"]), query)


def select_answer_cell(scores: np.ndarray, node_text: tuple[str, ...]) -> int:
    """Argmax node; ties break on (cell text, node id) so the selected
    *content* is stable under row/column relabeling."""
    best = scores.max()
    candidates = [i for i, s in enumerate(scores) if s == best]
    return min(candidates, key=lambda i: (node_text[i], i))


def load_template(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()
