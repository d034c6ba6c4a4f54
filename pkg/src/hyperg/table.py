"""Table parsing, validation, serialization, and contextual augmentation.

A table is a caption, N headers, and an M x N grid of text cells.  Sparse
cells (empty / "n/a" style placeholders) are detected here, and the
augmentation step produces one natural-language description per row, per
column, and for the caption.  The rule-based augmenter is deterministic and
content-only; a remote augmenter can delegate to any hosted chat-completion
endpoint and falls back to the rules when unreachable.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import requests

from .errors import (
    AugmenterUnavailable,
    EmptyCompletion,
    EmptyTable,
    MalformedCsv,
    MalformedJson,
    RaggedRows,
)

SPARSE_TOKENS = frozenset({"", "n/a", "na", "none", "-", "--", "null", "nan"})

_WS_RUN = re.compile(r"\s+")


def normalize_cell(text: str) -> str:
    """Trim surrounding whitespace and collapse internal runs to one space."""
    return _WS_RUN.sub(" ", text.strip())


class Provenance(Enum):
    RULE_BASED = "rule"
    REMOTE = "remote"


class DescriptionKind(Enum):
    CAPTION = "caption"
    ROW = "row"
    COLUMN = "column"


@dataclass(frozen=True)
class Table:
    """An M x N grid of text cells with a caption and N column headers."""

    caption: str
    headers: tuple[str, ...]
    cells: tuple[tuple[str, ...], ...]  # row-major

    @property
    def row_count(self) -> int:
        return len(self.cells)

    @property
    def col_count(self) -> int:
        return len(self.headers)

    def __post_init__(self) -> None:
        if len(self.headers) == 0 or len(self.cells) == 0:
            raise EmptyTable("table must have at least one row and one column")
        n = len(self.headers)
        for i, row in enumerate(self.cells):
            if len(row) != n:
                raise RaggedRows(f"row {i} has {len(row)} cells, expected {n}")

    def cell(self, m: int, n: int) -> str:
        return self.cells[m][n]

    def column(self, n: int) -> tuple[str, ...]:
        return tuple(row[n] for row in self.cells)


@dataclass(frozen=True)
class SparsityReport:
    sparse_cells: frozenset[tuple[int, int]]
    sparse_fraction: float


@dataclass(frozen=True)
class AugmentedTable:
    """A table plus one description per row, per column, and the caption."""

    base: Table
    aug_caption: str
    row_descriptions: tuple[str, ...]
    col_descriptions: tuple[str, ...]
    provenance: Provenance

    def __post_init__(self) -> None:
        assert len(self.row_descriptions) == self.base.row_count
        assert len(self.col_descriptions) == self.base.col_count
        assert self.aug_caption
        assert all(self.row_descriptions) and all(self.col_descriptions)


def _make_table(caption: str, headers: Sequence[str], rows: Sequence[Sequence[str]]) -> Table:
    if len(headers) == 0 or len(rows) == 0:
        raise EmptyTable("table must have at least one row and one column")
    return Table(
        caption=normalize_cell(str(caption)),
        headers=tuple(normalize_cell(str(h)) for h in headers),
        cells=tuple(tuple(normalize_cell(str(c)) for c in row) for row in rows),
    )


def parse_table_json(data: bytes | str) -> Table:
    """Parse the table exchange JSON: {"caption", "headers", "rows"}."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    if not isinstance(obj, dict) or not {"caption", "headers", "rows"} <= set(obj):
        raise MalformedJson("expected object with caption/headers/rows")
    headers = obj["headers"]
    rows = obj["rows"]
    if not isinstance(headers, list) or not isinstance(rows, list):
        raise MalformedJson("headers and rows must be arrays")
    return _make_table(obj["caption"], headers, rows)


def emit_json(t: Table) -> str:
    """Inverse of parse_table_json for valid tables."""
    return json.dumps(
        {"caption": t.caption, "headers": list(t.headers), "rows": [list(r) for r in t.cells]},
        ensure_ascii=False,
    )


def parse_table_csv(data: bytes | str, caption: str) -> Table:
    """Parse RFC-4180-style CSV; the first record is the header row."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedCsv(str(exc)) from exc
    try:
        records = list(csv.reader(io.StringIO(data)))
    except csv.Error as exc:
        raise MalformedCsv(str(exc)) from exc
    records = [r for r in records if r]
    if not records:
        raise EmptyTable("no records in CSV input")
    header, *rows = records
    if not rows:
        raise EmptyTable("CSV has a header but no data rows")
    n = len(header)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise RaggedRows(f"record {i + 1} has {len(row)} fields, expected {n}")
    return _make_table(caption, header, rows)


def serialize_markdown(t: Table) -> str:
    """Deterministic pipe-delimited rendering: caption, header, separator, rows."""

    def esc(s: str) -> str:
        return s.replace("|", "\\|")

    lines = [t.caption]
    lines.append("| " + " | ".join(esc(h) for h in t.headers) + " |")
    lines.append("| " + " | ".join("---" for _ in t.headers) + " |")
    for row in t.cells:
        lines.append("| " + " | ".join(esc(c) for c in row) + " |")
    return "\n".join(lines)


def is_sparse(cell: str) -> bool:
    return cell.strip().lower() in SPARSE_TOKENS


def detect_sparse_cells(t: Table) -> SparsityReport:
    """Flag cells whose trimmed, lowercased text is a known missing-value token."""
    sparse = frozenset(
        (m, n)
        for m in range(t.row_count)
        for n in range(t.col_count)
        if is_sparse(t.cell(m, n))
    )
    return SparsityReport(sparse, len(sparse) / (t.row_count * t.col_count))


# --- Augmenters ------------------------------------------------------------


class RuleBasedAugmenter:
    """Deterministic template augmenter.

    Output depends only on the supplied content, never on the position of a
    row/column among its siblings; this is what makes shuffled tables
    produce identical description multisets.
    """

    def describe(self, kind: DescriptionKind, caption: str,
                 headers: Sequence[str], cells: Sequence[str]) -> str:
        if kind is DescriptionKind.CAPTION:
            return f"Table: {caption}. Columns: {', '.join(headers)}."
        if kind is DescriptionKind.ROW:
            parts = [f"{h}: {self._value(c)}" for h, c in zip(headers, cells)]
            return "Row with " + "; ".join(parts) + "."
        # Column: `headers` is the single header of that column.
        header = headers[0]
        values = ", ".join(self._value(c) for c in cells)
        return f"Column {header}: {values}."

    @staticmethod
    def _value(cell: str) -> str:
        return "(unknown)" if is_sparse(cell) else cell


@dataclass
class RemoteAugmenterConfig:
    url: str = field(default_factory=lambda: os.environ.get("HYPERG_AUGMENT_URL", ""))
    model: str = "default"
    timeout: float = 10.0
    max_retries: int = 2
    fallback: bool = True


_P0 = (
    "You are given a table caption and its headers. "
    "{task} so that it reflects the table content."
)
_P0_TASKS = {
    DescriptionKind.CAPTION: "Enhance the caption",
    DescriptionKind.ROW: "Describe the given row",
    DescriptionKind.COLUMN: "Describe the given column",
}


def remote_augment_request(kind: DescriptionKind, caption: str,
                           headers: Sequence[str], cells: Sequence[str],
                           config: RemoteAugmenterConfig,
                           session: requests.Session | None = None) -> str:
    """POST one description request; retry on timeout/status/empty completion.

    Returns the first non-empty line of the completion, capped at 512 chars.
    """
    prompt = _P0.format(task=_P0_TASKS[kind])
    context = {
        "caption": caption,
        "headers": list(headers),
        "cells": list(cells),
        "kind": kind.value,
    }
    body = {"model": config.model, "prompt": prompt + "\n" + json.dumps(context, ensure_ascii=False)}
    sess = session or requests
    last_error: Exception | None = None
    for _ in range(config.max_retries + 1):
        try:
            resp = sess.post(config.url, json=body, timeout=config.timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if resp.status_code != 200:
            last_error = AugmenterUnavailable(f"HTTP {resp.status_code}")
            continue
        text = resp.json().get("text", "")
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            last_error = EmptyCompletion("remote augmenter returned no text")
            continue
        return lines[0][:512]
    raise last_error if last_error is not None else AugmenterUnavailable("no attempts made")


class RemoteAugmenter:
    """LLM-backed augmenter over a generic JSON completion endpoint."""

    def __init__(self, config: RemoteAugmenterConfig | None = None,
                 session: requests.Session | None = None):
        self.config = config or RemoteAugmenterConfig()
        self.session = session
        self._fallback = RuleBasedAugmenter()

    def describe(self, kind: DescriptionKind, caption: str,
                 headers: Sequence[str], cells: Sequence[str]) -> str:
        try:
            return remote_augment_request(kind, caption, headers, cells,
                                          self.config, self.session)
        except Exception as exc:
            if self.config.fallback:
                return self._fallback.describe(kind, caption, headers, cells)
            raise AugmenterUnavailable(str(exc)) from exc


def augment(t: Table, augmenter=None) -> AugmentedTable:
    """Produce all M + N + 1 descriptions for a table.

    Results are assembled by index, so a concurrent augmenter implementation
    may answer out of order without changing the output.
    """
    aug = augmenter if augmenter is not None else RuleBasedAugmenter()
    provenance = Provenance.REMOTE if isinstance(aug, RemoteAugmenter) else Provenance.RULE_BASED
    caption_desc = aug.describe(DescriptionKind.CAPTION, t.caption, t.headers, ())
    rows = tuple(
        aug.describe(DescriptionKind.ROW, t.caption, t.headers, t.cells[m])
        for m in range(t.row_count)
    )
    cols = tuple(
        aug.describe(DescriptionKind.COLUMN, t.caption, (t.headers[n],), t.column(n))
        for n in range(t.col_count)
    )
    return AugmentedTable(
        base=t,
        aug_caption=caption_desc or t.caption,
        row_descriptions=rows,
        col_descriptions=cols,
        provenance=provenance,
    )
