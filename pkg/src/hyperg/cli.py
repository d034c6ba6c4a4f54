"""Command line interface: corpus generation, graph building, training,
evaluation, the shuffle experiment, attention dumps, and gradient checks."""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import autodiff as ad
from .corpus import (
    CorpusSpec,
    check_record,
    gen_corpus,
    read_jsonl,
    spec_from_json,
    write_jsonl,
)
from .experiments import (
    dump_attention,
    plot_history,
    plot_shuffle_report,
    run_pipeline,
    shuffle_experiment,
    write_shuffle_csv,
)
from .hypergraph import build_hypergraph, to_exchange_json
from .model import HypergModel, ModelConfig
from .table import RemoteAugmenter, augment, parse_table_json
from .training import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train


@click.group()
def main() -> None:
    """Desk-scale hypergraph table learning toolkit."""


def _model_options(fn):
    for opt in reversed([
        click.option("--dim", default=64, show_default=True),
        click.option("--heads", default=12, show_default=True),
        click.option("--layers", default=2, show_default=True),
        click.option("--vocab-size", default=32768, show_default=True),
        click.option("--phl-init", default="random", show_default=True,
                     type=click.Choice(["random", "overlap"])),
        click.option("--seed", default=0, show_default=True),
    ]):
        fn = opt(fn)
    return fn


def _augmenter(kind: str):
    return RemoteAugmenter() if kind == "remote" else None


@main.command("gen-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def gen_data(spec_path: str, out_path: str) -> None:
    """Generate a synthetic corpus (JSONL) from a spec file."""
    with open(spec_path, "r", encoding="utf-8") as fh:
        spec = spec_from_json(fh.read())
    records = gen_corpus(spec)
    bad = [r.record_id for r in records if not check_record(r)]
    if bad:
        raise click.ClickException(f"gold-label checker failed for records {bad[:5]}")
    write_jsonl(records, out_path)
    click.echo(f"wrote {len(records)} records to {out_path}")


@main.command("build-graph")
@click.option("--table", "table_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--augmenter", "augmenter_kind", default="rule",
              type=click.Choice(["rule", "remote"]), show_default=True)
def build_graph(table_path: str, out_path: str, augmenter_kind: str) -> None:
    """Build the semantics hypergraph for one table JSON file."""
    with open(table_path, "rb") as fh:
        table = parse_table_json(fh.read())
    graph = build_hypergraph(augment(table, _augmenter(augmenter_kind)))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(to_exchange_json(graph))
    click.echo(f"|V|={graph.node_count} |E|={graph.edge_count} -> {out_path}")


@main.command("train")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--lr", default=5e-5, show_default=True)
@click.option("--lr-scale", default=20.0, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--epochs", default=4, show_default=True)
@click.option("--patience", default=3, show_default=True)
@click.option("--no-phl", is_flag=True)
@click.option("--no-inquiry", is_flag=True)
@_model_options
def train_cmd(corpus_path: str, out_dir: str, config_path: str | None,
              lr: float, lr_scale: float, batch_size: int, epochs: int,
              patience: int, no_phl: bool, no_inquiry: bool,
              dim: int, heads: int, layers: int, vocab_size: int,
              phl_init: str, seed: int) -> None:
    """Train on a JSONL corpus and write a checkpoint directory."""
    records = read_jsonl(corpus_path)
    overrides = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
    model_cfg = ModelConfig(dim=dim, heads=heads, layers=layers,
                            vocab_size=vocab_size, phl_init=phl_init, seed=seed,
                            **overrides.get("model", {}))
    train_cfg = TrainConfig(lr=lr, module_lr_scale=lr_scale, batch_size=batch_size,
                            max_epochs=epochs, patience=patience, seed=seed,
                            no_phl=no_phl, no_inquiry=no_inquiry,
                            **overrides.get("train", {}))
    model = HypergModel(model_cfg)
    result = train(model, records, train_cfg, quiet=False)
    save_checkpoint(out_dir, result.model, result.opt_state,
                    extra={"history": result.history, "best_epoch": result.best_epoch})
    plot_history(result.history, os.path.join(out_dir, "history.png"))
    with open(os.path.join(out_dir, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(result.history, fh, indent=1)
    click.echo(f"checkpoint saved to {out_dir} (best epoch {result.best_epoch})")


@main.command("eval")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--no-phl", is_flag=True)
@click.option("--no-inquiry", is_flag=True)
def eval_cmd(corpus_path: str, ckpt_dir: str, no_phl: bool, no_inquiry: bool) -> None:
    """Evaluate a checkpoint on a JSONL corpus."""
    records = read_jsonl(corpus_path)
    model, _, _ = load_checkpoint(ckpt_dir)
    metrics = evaluate(model, records, no_phl=no_phl, no_inquiry=no_inquiry)
    click.echo(json.dumps(metrics.as_dict(), indent=1))


@main.command("run")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--record", "record_id", default=0, show_default=True)
@click.option("--no-phl", is_flag=True)
@click.option("--no-inquiry", is_flag=True)
def run_cmd(corpus_path: str, ckpt_dir: str, record_id: int,
            no_phl: bool, no_inquiry: bool) -> None:
    """Run the full pipeline on one record and print the prediction."""
    records = read_jsonl(corpus_path)
    record = next((r for r in records if r.record_id == record_id), None)
    if record is None:
        raise click.ClickException(f"record {record_id} not found")
    model, _, _ = load_checkpoint(ckpt_dir)
    out = run_pipeline(model, record, no_phl=no_phl, no_inquiry=no_inquiry)
    click.echo(json.dumps(out, indent=1))


@main.command("shuffle-eval")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--axis", default="rows", type=click.Choice(["rows", "cols"]),
              show_default=True)
@click.option("--ratios", default="0.2,0.4,0.6,0.8,1.0", show_default=True)
@click.option("--out", "out_csv", default="shuffle_report.csv", show_default=True)
@click.option("--seed", default=0, show_default=True)
def shuffle_eval(corpus_path: str, ckpt_dir: str, axis: str, ratios: str,
                 out_csv: str, seed: int) -> None:
    """Order-invariance experiment: shuffle sampled tables and re-evaluate."""
    records = read_jsonl(corpus_path)
    model, _, _ = load_checkpoint(ckpt_dir)
    ratio_list = [float(r) for r in ratios.split(",") if r]
    report = shuffle_experiment(model, records, ratio_list, axis, seed=seed)
    write_shuffle_csv(report, out_csv)
    plot_shuffle_report(report, os.path.splitext(out_csv)[0] + ".png")
    click.echo(f"accuracy variance across ratios: {report.accuracy_variance:.3e}; "
               f"prediction flips: {report.total_flips}")


@main.command("dump-attention")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--record", "record_id", default=0, show_default=True)
@click.option("--out", "out_path", default="attention.json", show_default=True)
def dump_attention_cmd(corpus_path: str, ckpt_dir: str, record_id: int,
                       out_path: str) -> None:
    """Dump per-layer attention weights for one record (JSON + heatmaps)."""
    records = read_jsonl(corpus_path)
    record = next((r for r in records if r.record_id == record_id), None)
    if record is None:
        raise click.ClickException(f"record {record_id} not found")
    model, _, _ = load_checkpoint(ckpt_dir)
    figure = os.path.splitext(out_path)[0] + ".png"
    payload = dump_attention(model, record, out_path, figure_path=figure)
    click.echo(f"wrote {out_path} and {figure} "
               f"(table-edge weight variance "
               f"{payload['summary']['table_weight_variance']:.3e})")


@main.command("grad-check")
@click.option("--dim", default=4, show_default=True)
@click.option("--heads", default=2, show_default=True)
@click.option("--layers", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--step", default=1e-5, show_default=True)
def grad_check_cmd(dim: int, heads: int, layers: int, seed: int, step: float) -> None:
    """Finite-difference check of the full loss gradient on a tiny table."""
    from .verification import full_loss_grad_check

    err = full_loss_grad_check(dim=dim, heads=heads, layers=layers, seed=seed, h=step)
    click.echo(f"max relative gradient error: {err:.3e}")
    if err >= 1e-4:
        sys.exit(1)


if __name__ == "__main__":
    main()
