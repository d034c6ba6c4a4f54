"""Numerical verification harnesses used by tests and the CLI."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .corpus import ExperimentRecord, TaskKind
from .model import HypergModel, ModelConfig, target_index
from .table import Table
from .training import sequence_nll


def tiny_record(seed: int = 0) -> ExperimentRecord:
    table = Table(
        caption="fixture scores",
        headers=("name", "score"),
        cells=(("alpha", "red"), ("beta", "blue")),
    )
    return ExperimentRecord(0, table, "the score of alpha is red", TaskKind.TFV, "yes")


def full_loss_grad_check(dim: int = 4, heads: int = 2, layers: int = 1,
                         seed: int = 0, h: float = 1e-5,
                         vocab_size: int = 64) -> float:
    """Central-difference check of the end-to-end loss over every parameter
    tensor on a 2x2 table.  Small vocabulary keeps the sweep tractable."""
    cfg = ModelConfig(dim=dim, heads=heads, layers=layers, vocab_size=vocab_size,
                      dropout_rate=0.0, seed=seed)
    model = HypergModel(cfg)
    record = tiny_record(seed)
    prep = model.prepare(record)
    target = target_index(prep)

    def build(params: dict[str, ad.Tensor], tape: ad.Tape) -> ad.Tensor:
        result = model.forward(prep, params, train=False)
        return sequence_nll([result.logits], [target])

    return ad.grad_check(build, model.params, h=h)
