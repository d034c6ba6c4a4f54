"""Experiment harnesses: single-record pipeline runs, the order-invariance
shuffle study, and attention-weight dumps.

Report paths write delimited output (CSV/JSON) and render matplotlib
figures next to it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .corpus import ExperimentRecord, TaskKind
from .errors import EmptyCorpus, LogNotEnabled
from .model import HypergModel
from .phl import AttentionLog, head_averaged_alpha, head_averaged_beta
from .rng import stream_rng
from .table import Table
from .training import compute_metrics


def run_pipeline(model: HypergModel, record: ExperimentRecord,
                 no_phl: bool = False, no_inquiry: bool = False,
                 log_attention: bool = False) -> dict:
    """Full augment -> graph -> embed -> propagate -> project -> head run."""
    result = model.run(record, no_phl=no_phl, no_inquiry=no_inquiry,
                       log_attention=log_attention)
    out = {
        "id": record.record_id,
        "task": record.task.value,
        "prediction": result.prediction(),
        "gold": record.gold if isinstance(record.gold, str) else list(record.gold),
    }
    if log_attention and result.phl_out.attention is not None:
        out["attention"] = attention_to_dict(result.phl_out.attention)
    return out


def shuffle_table(table: Table, rng: np.random.Generator,
                  axis: str) -> tuple[Table, list[int], list[int]]:
    """Fully shuffle rows or columns; returns the maps new_index -> old_index."""
    row_map = list(range(table.row_count))
    col_map = list(range(table.col_count))
    if axis == "rows":
        row_map = list(rng.permutation(table.row_count))
    elif axis == "cols":
        col_map = list(rng.permutation(table.col_count))
    else:
        raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")
    shuffled = Table(
        caption=table.caption,
        headers=tuple(table.headers[c] for c in col_map),
        cells=tuple(tuple(table.cells[r][c] for c in col_map) for r in row_map),
    )
    return shuffled, row_map, col_map


def _shuffle_record(record: ExperimentRecord, rng: np.random.Generator,
                    axis: str) -> ExperimentRecord:
    shuffled, row_map, col_map = shuffle_table(record.table, rng, axis)
    gold = record.gold
    if record.task is TaskKind.TQA_LITE:
        old_r, old_c, text = gold
        gold = (row_map.index(old_r), col_map.index(old_c), text)
    return ExperimentRecord(record.record_id, shuffled, record.inquiry,
                            record.task, gold, record.meta)


@dataclass
class ShuffleReport:
    axis: str
    rows: list[dict]  # one per ratio: metrics + flip count
    accuracy_variance: float
    total_flips: int


def shuffle_experiment(model: HypergModel, records: list[ExperimentRecord],
                       ratios: list[float], axis: str, seed: int = 0,
                       no_phl: bool = False, no_inquiry: bool = False) -> ShuffleReport:
    """Re-evaluate with a seeded fraction of tables fully shuffled.

    `ratio` is the fraction of sampled tables whose rows/columns are
    shuffled; metrics are reported per ratio along with prediction flips
    against the unshuffled baseline.
    """
    if not records:
        raise EmptyCorpus("shuffle experiment needs a nonempty corpus")
    from .training import predict  # local import to avoid a cycle at import time

    baseline = predict(model, records, no_phl=no_phl, no_inquiry=no_inquiry)
    gold = [r.gold if isinstance(r.gold, str) else r.gold[2] for r in records]
    report_rows = []
    total_flips = 0
    for ratio in ratios:
        rng = stream_rng(seed, f"shuffle/{axis}/{ratio}")
        n_shuffled = int(round(ratio * len(records)))
        chosen = set(rng.choice(len(records), size=n_shuffled, replace=False).tolist())
        perturbed = [
            _shuffle_record(r, rng, axis) if i in chosen else r
            for i, r in enumerate(records)
        ]
        preds = predict(model, perturbed, no_phl=no_phl, no_inquiry=no_inquiry)
        flips = sum(1 for b, p in zip(baseline, preds) if b != p)
        total_flips += flips
        metrics = compute_metrics(gold, preds)
        report_rows.append({
            "ratio": ratio,
            "accuracy": metrics.accuracy,
            "weighted_precision": metrics.weighted_precision,
            "weighted_f1": metrics.weighted_f1,
            "flips": flips,
        })
    accs = [row["accuracy"] for row in report_rows]
    return ShuffleReport(axis=axis, rows=report_rows,
                         accuracy_variance=float(np.var(accs)),
                         total_flips=total_flips)


def write_shuffle_csv(report: ShuffleReport, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["ratio", "accuracy",
                                                "weighted_precision",
                                                "weighted_f1", "flips"])
        writer.writeheader()
        writer.writerows(report.rows)


def plot_shuffle_report(report: ShuffleReport, path: str) -> None:
    """Metric curves against the sampling ratio."""
    ratios = [row["ratio"] for row in report.rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, label in [("accuracy", "Accuracy"),
                       ("weighted_precision", "Precision (weighted)"),
                       ("weighted_f1", "F1 (weighted)")]:
        ax.plot(ratios, [row[key] for row in report.rows], marker="o", label=label)
    ax.set_xlabel("Sampling ratio")
    ax.set_ylabel("Score")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"Shuffle {report.axis} (var={report.accuracy_variance:.2e})")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# --- Attention dumps -------------------------------------------------------


def attention_to_dict(log: AttentionLog) -> dict:
    """Schema: {"layers":[{"alpha":{edge:[{node,weight}...]},
    "beta":{node:[{edge,weight}...]}, "head_avg":...}...]}."""
    gi = log.gi
    layers = []
    for layer in log.layers:
        alpha_avg = np.mean(np.stack(layer["alpha"]), axis=0)
        beta_avg = np.mean(np.stack(layer["beta"]), axis=0)
        alpha_map: dict[str, list[dict]] = {}
        for pos, (node, edge) in enumerate(zip(gi.member_node, gi.member_edge)):
            alpha_map.setdefault(str(int(edge)), []).append(
                {"node": int(node), "weight": float(alpha_avg[pos])})
        beta_map: dict[str, list[dict]] = {}
        for pos, (node, edge) in enumerate(zip(gi.pair_node, gi.pair_edge)):
            beta_map.setdefault(str(int(node)), []).append(
                {"edge": int(edge), "weight": float(beta_avg[pos])})
        layers.append({
            "alpha": alpha_map,
            "beta": beta_map,
            "head_avg": {
                "alpha": alpha_avg.tolist(),
                "beta": beta_avg.tolist(),
            },
        })
    return {"layers": layers}


@dataclass
class AttentionSummary:
    node_column: np.ndarray  # M x N: beta weight of each node on its column edge
    node_table: np.ndarray  # M x N: beta weight on the table edge
    column_weight_variance: float
    table_weight_variance: float


def summarize_attention(log: AttentionLog, row_count: int, col_count: int) -> AttentionSummary:
    """Head-averaged final-layer beta maps between cells and their
    column/table hyperedges, with smoothness statistics."""
    beta = head_averaged_beta(log, layer=-1)  # |V| x 3 (row, col, table)
    node_column = beta[:, 1].reshape(row_count, col_count)
    node_table = beta[:, 2].reshape(row_count, col_count)
    return AttentionSummary(
        node_column=node_column,
        node_table=node_table,
        column_weight_variance=float(np.var(node_column)),
        table_weight_variance=float(np.var(node_table)),
    )


def dump_attention(model: HypergModel, record: ExperimentRecord, out_path: str,
                   figure_path: str | None = None) -> dict:
    """Run with logging and write the attention JSON (+ optional heatmaps)."""
    result = model.run(record, log_attention=True)
    log = result.phl_out.attention
    if log is None:
        raise LogNotEnabled("attention logging did not produce a record")
    payload = attention_to_dict(log)
    t = record.table
    summary = summarize_attention(log, t.row_count, t.col_count)
    payload["summary"] = {
        "node_column": summary.node_column.tolist(),
        "node_table": summary.node_table.tolist(),
        "column_weight_variance": summary.column_weight_variance,
        "table_weight_variance": summary.table_weight_variance,
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    if figure_path is not None:
        plot_attention_summary(summary, t, figure_path)
    return payload


def plot_attention_summary(summary: AttentionSummary, table: Table, path: str) -> None:
    """Heatmaps of cell-vs-column-edge and cell-vs-table-edge weights."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    for ax, matrix, title in [
        (axes[0], summary.node_column, "Cell vs column hyperedge"),
        (axes[1], summary.node_table, "Cell vs table hyperedge"),
    ]:
        im = ax.imshow(matrix, cmap="viridis")
        ax.set_title(title, fontsize=9)
        ax.set_xticks(range(table.col_count))
        ax.set_xticklabels(table.headers, rotation=45, fontsize=7, ha="right")
        ax.set_yticks(range(table.row_count))
        ax.set_yticklabels([f"row {m}" for m in range(table.row_count)], fontsize=7)
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_history(history: list[dict], path: str) -> None:
    """Loss and validation accuracy per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, ax1 = plt.subplots(figsize=(5, 3.5))
    ax1.plot(epochs, [h["train_loss"] for h in history], color="tab:blue",
             marker="o", label="train loss")
    ax1.set_xlabel("Epoch")
    ax1.set_ylabel("Train loss", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [h["val_accuracy"] for h in history], color="tab:orange",
             marker="s", label="val accuracy")
    ax2.set_ylabel("Val accuracy", color="tab:orange")
    ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
