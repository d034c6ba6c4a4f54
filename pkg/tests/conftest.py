import pytest

from hyperg.corpus import ExperimentRecord, TaskKind
from hyperg.model import ModelConfig
from hyperg.table import Table


@pytest.fixture
def small_table() -> Table:
    return Table(
        caption="city records",
        headers=("name", "score", "rank"),
        cells=(
            ("arlington", "amber", "teal"),
            ("bristol", "n/a", "jade"),
        ),
    )


@pytest.fixture
def small_record(small_table) -> ExperimentRecord:
    return ExperimentRecord(
        record_id=0,
        table=small_table,
        inquiry="the score of arlington is amber",
        task=TaskKind.TFV,
        gold="yes",
    )


@pytest.fixture
def small_config() -> ModelConfig:
    # Tiny dimensions keep forward passes fast; semantics are unchanged.
    return ModelConfig(dim=8, heads=2, layers=1, vocab_size=512,
                       dropout_rate=0.0, seed=0)
