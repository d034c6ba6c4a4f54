"""Synthetic experiment corpora with mechanically verifiable gold labels.

Records pair a table with an inquiry: a lookup claim ("the <attr> of
<entity> is <value>") or superlative claim for fact verification, or a
lookup question for cell-selection QA.  Negative claims perturb exactly one
value to one absent from the table, so an independent checker can re-read
the table and re-derive every gold label.  Sparsity is injected per cell at
a requested rate, never into the entity column or the queried cell.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import EmptyCorpus, InvalidSpec
from .rng import stream_rng
from .table import Table, is_sparse

_ENTITIES = [
    "arlington", "bristol", "camden", "dalton", "everett", "fairfield",
    "granville", "hartley", "ingram", "jefferson", "kingsley", "lakewood",
    "madison", "norwood", "oakdale", "preston", "quincy", "riverton",
    "stanton", "thornton", "underwood", "vernon", "westbrook", "yardley",
]
_ATTRIBUTES = [
    "population", "elevation", "budget", "ranking", "capacity", "attendance",
    "founded", "area", "score", "output", "tenure", "margin",
]
_VALUES = [
    "amber", "basalt", "cedar", "denim", "ebony", "fern", "garnet", "hazel",
    "indigo", "jade", "khaki", "lilac", "maroon", "navy", "ochre", "pearl",
    "quartz", "russet", "sienna", "teal", "umber", "violet", "wheat", "zinc",
    "cobalt", "coral", "ivory", "mauve", "olive", "plum", "saffron", "slate",
]
_SPARSE_FILL = ["n/a", "none", "-", "null"]


class TaskKind(Enum):
    TFV = "tfv"
    TQA_LITE = "tqa"


@dataclass(frozen=True)
class ExperimentRecord:
    record_id: int
    table: Table
    inquiry: str
    task: TaskKind
    gold: str | tuple[int, int, str]  # "yes"/"no", or (row, col, text)
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CorpusSpec:
    count: int
    m_range: tuple[int, int] = (2, 4)
    n_range: tuple[int, int] = (2, 4)
    entities: tuple[str, ...] = tuple(_ENTITIES)
    attributes: tuple[str, ...] = tuple(_ATTRIBUTES)
    values: tuple[str, ...] = tuple(_VALUES)
    sparsity: float = 0.0
    task: TaskKind = TaskKind.TFV
    superlative_fraction: float = 0.0  # remaining records use lookup claims
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise InvalidSpec("count must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            raise InvalidSpec("sparsity must be in [0,1)")
        if not 0.0 <= self.superlative_fraction <= 1.0:
            raise InvalidSpec("superlative_fraction must be in [0,1]")
        lo_m, hi_m = self.m_range
        lo_n, hi_n = self.n_range
        if lo_m < 1 or lo_m > hi_m or lo_n < 2 or lo_n > hi_n:
            raise InvalidSpec("invalid m_range/n_range (need >=1 row, >=2 columns)")
        if hi_m > len(self.entities):
            raise InvalidSpec("m_range exceeds the entity vocabulary")
        if hi_n - 1 > len(self.attributes):
            raise InvalidSpec("n_range exceeds the attribute vocabulary")


def spec_from_json(data: bytes | str) -> CorpusSpec:
    obj = json.loads(data)
    kwargs = dict(obj)
    if "task" in kwargs:
        kwargs["task"] = TaskKind(kwargs["task"])
    for key in ("m_range", "n_range", "entities", "attributes", "values"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return CorpusSpec(**kwargs)
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from exc


def _gen_record(spec: CorpusSpec, idx: int) -> ExperimentRecord:
    rng = stream_rng(spec.seed, f"corpus/record{idx}")
    m = int(rng.integers(spec.m_range[0], spec.m_range[1] + 1))
    n = int(rng.integers(spec.n_range[0], spec.n_range[1] + 1))
    entities = list(rng.choice(spec.entities, size=m, replace=False))
    attrs = list(rng.choice(spec.attributes, size=n - 1, replace=False))
    headers = ["name"] + attrs

    superlative = spec.superlative_fraction > 0 and rng.random() < spec.superlative_fraction
    if superlative:
        # Numeric columns sampled without replacement per column, so every
        # column has a unique maximum and "highest" claims never tie.
        cols = [rng.choice(np.arange(100, 100 + 50 * m), size=m, replace=False)
                for _ in range(n - 1)]
        grid = [[entities[r]] + [str(int(col[r])) for col in cols]
                for r in range(m)]
    else:
        grid = [[entities[r]] + list(rng.choice(spec.values, size=n - 1))
                for r in range(m)]

    q_row = int(rng.integers(0, m))
    q_col = int(rng.integers(1, n))
    caption = f"{attrs[0]} records by name"
    label_yes = idx % 2 == 0  # alternating labels keep the balance exact

    # Sparsity: eligible cells exclude the name column and the queried cell;
    # superlative claims additionally keep their whole column intact so the
    # gold label stays derivable from the table text.
    eligible = 0
    injected = 0
    for r in range(m):
        for c in range(1, n):
            if (r, c) == (q_row, q_col) or (superlative and c == q_col):
                continue
            eligible += 1
            if rng.random() < spec.sparsity:
                grid[r][c] = _SPARSE_FILL[int(rng.integers(0, len(_SPARSE_FILL)))]
                injected += 1

    table = Table(caption=caption, headers=tuple(headers),
                  cells=tuple(tuple(row) for row in grid))
    entity = entities[q_row]
    attr = headers[q_col]
    true_value = grid[q_row][q_col]
    meta = {
        "seed": spec.seed,
        "template": "superlative" if superlative else "lookup",
        "eligible_cells": eligible,
        "sparse_injected": injected,
    }

    if spec.task is TaskKind.TQA_LITE:
        inquiry = f"what is the {attr} of {entity}?"
        node_id = q_row * n + q_col
        return ExperimentRecord(idx, table, inquiry, TaskKind.TQA_LITE,
                                (q_row, q_col, true_value), {**meta, "node_id": node_id})

    if superlative:
        col_vals = [int(grid[r][q_col]) for r in range(m)]
        best_row = int(np.argmax(col_vals))
        if label_yes:
            subject = entities[best_row]
        else:
            others = [e for i, e in enumerate(entities) if i != best_row]
            subject = others[int(rng.integers(0, len(others)))]
        inquiry = f"the highest {attr} is at {subject}"
        return ExperimentRecord(idx, table, inquiry, TaskKind.TFV,
                                "yes" if label_yes else "no", meta)

    if label_yes:
        value = true_value
    else:
        present = {cell for row in grid for cell in row}
        absent = [v for v in spec.values if v not in present]
        if not absent:
            raise InvalidSpec("value vocabulary too small to pick an absent value")
        value = absent[int(rng.integers(0, len(absent)))]
    inquiry = f"the {attr} of {entity} is {value}"
    return ExperimentRecord(idx, table, inquiry, TaskKind.TFV,
                            "yes" if label_yes else "no", meta)


def gen_corpus(spec: CorpusSpec) -> list[ExperimentRecord]:
    return [_gen_record(spec, i) for i in range(spec.count)]


# --- Independent claim checker --------------------------------------------

_LOOKUP_RE = re.compile(r"^the (\w+) of (\w+) is (\w+)$")
_SUPERLATIVE_RE = re.compile(r"^the highest (\w+) is at (\w+)$")
_QUESTION_RE = re.compile(r"^what is the (\w+) of (\w+)\?$")


def check_record(record: ExperimentRecord) -> bool:
    """Re-evaluate the claim/question against the table text alone."""
    t = record.table
    if record.task is TaskKind.TQA_LITE:
        match = _QUESTION_RE.match(record.inquiry)
        if not match:
            return False
        attr, entity = match.groups()
        row, col, text = record.gold
        return (t.headers[col] == attr and t.cell(row, 0) == entity
                and t.cell(row, col) == text)
    match = _SUPERLATIVE_RE.match(record.inquiry)
    if match:
        attr, entity = match.groups()
        if attr not in t.headers:
            return False
        col = t.headers.index(attr)
        numeric = []
        for r in range(t.row_count):
            cell = t.cell(r, col)
            numeric.append(int(cell) if not is_sparse(cell) else None)
        known = [v for v in numeric if v is not None]
        if not known:
            return False
        best_rows = [r for r, v in enumerate(numeric) if v == max(known)]
        verdict = any(t.cell(r, 0) == entity for r in best_rows)
        return ("yes" if verdict else "no") == record.gold
    match = _LOOKUP_RE.match(record.inquiry)
    if not match:
        return False
    attr, entity, value = match.groups()
    if attr not in t.headers:
        return False
    col = t.headers.index(attr)
    rows = [r for r in range(t.row_count) if t.cell(r, 0) == entity]
    if len(rows) != 1:
        return False
    verdict = t.cell(rows[0], col) == value
    return ("yes" if verdict else "no") == record.gold


# --- JSONL round trip ------------------------------------------------------


def record_to_json(record: ExperimentRecord) -> str:
    gold = record.gold
    if record.task is TaskKind.TQA_LITE:
        gold = {"row": gold[0], "col": gold[1], "text": gold[2]}
    return json.dumps(
        {
            "id": record.record_id,
            "task": record.task.value,
            "table": {
                "caption": record.table.caption,
                "headers": list(record.table.headers),
                "rows": [list(r) for r in record.table.cells],
            },
            "inquiry": record.inquiry,
            "gold": gold,
            "meta": record.meta,
        },
        ensure_ascii=False,
    )


def record_from_json(line: str) -> ExperimentRecord:
    obj = json.loads(line)
    task = TaskKind(obj["task"])
    gold = obj["gold"]
    if task is TaskKind.TQA_LITE:
        gold = (gold["row"], gold["col"], gold["text"])
    table = Table(
        caption=obj["table"]["caption"],
        headers=tuple(obj["table"]["headers"]),
        cells=tuple(tuple(r) for r in obj["table"]["rows"]),
    )
    return ExperimentRecord(obj["id"], table, obj["inquiry"], task, gold, obj.get("meta", {}))


def write_jsonl(records: Iterable[ExperimentRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_json(record) + "\n")


def read_jsonl(path: str) -> list[ExperimentRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        records = [record_from_json(line) for line in fh if line.strip()]
    if not records:
        raise EmptyCorpus(f"no records in {path}")
    return records
