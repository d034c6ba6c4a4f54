"""Semantics hypergraph built from an augmented table.

Every cell becomes a node (row-major ids), and there are M row hyperedges,
N column hyperedges, and one table hyperedge, in that canonical order.
Each node therefore belongs to exactly three hyperedges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import NotAPermutation
from .table import AugmentedTable


class EdgeKind(Enum):
    ROW = "row"
    COLUMN = "col"
    TABLE = "table"


@dataclass(frozen=True)
class Hyperedge:
    kind: EdgeKind
    index: int | None  # row/column index; None for the table edge
    members: tuple[int, ...]  # node ids, ascending
    text: str


@dataclass(frozen=True)
class SemanticHypergraph:
    row_count: int
    col_count: int
    node_text: tuple[str, ...]  # node id = m * N + n
    edges: tuple[Hyperedge, ...]  # rows, then columns, then the table edge

    @property
    def node_count(self) -> int:
        return len(self.node_text)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def edge_text(self) -> tuple[str, ...]:
        return tuple(e.text for e in self.edges)

    @property
    def table_edge_id(self) -> int:
        return self.edge_count - 1

    def edge_members(self, edge_id: int) -> tuple[int, ...]:
        if not 0 <= edge_id < self.edge_count:
            raise IndexError(f"edge id {edge_id} out of range")
        return self.edges[edge_id].members

    def node_edges(self, node_id: int) -> tuple[int, ...]:
        if not 0 <= node_id < self.node_count:
            raise IndexError(f"node id {node_id} out of range")
        m, n = divmod(node_id, self.col_count)
        return (m, self.row_count + n, self.table_edge_id)


def build_hypergraph(at: AugmentedTable) -> SemanticHypergraph:
    """Construct the hypergraph with canonical node and edge ordering."""
    t = at.base
    m_rows, n_cols = t.row_count, t.col_count
    node_text = tuple(t.cell(m, n) for m in range(m_rows) for n in range(n_cols))
    edges: list[Hyperedge] = []
    for m in range(m_rows):
        members = tuple(m * n_cols + n for n in range(n_cols))
        edges.append(Hyperedge(EdgeKind.ROW, m, members, at.row_descriptions[m]))
    for n in range(n_cols):
        members = tuple(m * n_cols + n for m in range(m_rows))
        edges.append(Hyperedge(EdgeKind.COLUMN, n, members, at.col_descriptions[n]))
    edges.append(Hyperedge(EdgeKind.TABLE, None, tuple(range(m_rows * n_cols)), at.aug_caption))
    return SemanticHypergraph(m_rows, n_cols, node_text, tuple(edges))


def incidence(g: SemanticHypergraph) -> np.ndarray:
    """Dense 0/1 incidence matrix of shape |V| x |E|."""
    h = np.zeros((g.node_count, g.edge_count), dtype=np.int8)
    for j, edge in enumerate(g.edges):
        h[list(edge.members), j] = 1
    return h


def _check_perm(perm: Sequence[int], size: int, what: str) -> None:
    if sorted(perm) != list(range(size)):
        raise NotAPermutation(f"{what} permutation {perm!r} is not a permutation of [0,{size})")


def permute(g: SemanticHypergraph, row_perm: Sequence[int], col_perm: Sequence[int]) -> SemanticHypergraph:
    """Relabel rows/columns; perm[i] = source index for new position i."""
    _check_perm(row_perm, g.row_count, "row")
    _check_perm(col_perm, g.col_count, "column")
    m_rows, n_cols = g.row_count, g.col_count
    node_text = tuple(
        g.node_text[row_perm[m] * n_cols + col_perm[n]]
        for m in range(m_rows)
        for n in range(n_cols)
    )
    edges: list[Hyperedge] = []
    for m in range(m_rows):
        members = tuple(m * n_cols + n for n in range(n_cols))
        edges.append(Hyperedge(EdgeKind.ROW, m, members, g.edges[row_perm[m]].text))
    for n in range(n_cols):
        members = tuple(mm * n_cols + n for mm in range(m_rows))
        edges.append(Hyperedge(EdgeKind.COLUMN, n, members, g.edges[m_rows + col_perm[n]].text))
    edges.append(Hyperedge(EdgeKind.TABLE, None, tuple(range(m_rows * n_cols)), g.edges[-1].text))
    return SemanticHypergraph(m_rows, n_cols, node_text, tuple(edges))


def to_exchange_json(g: SemanticHypergraph) -> str:
    """Hypergraph exchange format used by the `build-graph` CLI command."""
    return json.dumps(
        {
            "nodes": list(g.node_text),
            "edges": [
                {
                    "kind": e.kind.value,
                    "index": e.index,
                    "members": list(e.members),
                    "text": e.text,
                }
                for e in g.edges
            ],
        },
        ensure_ascii=False,
    )
