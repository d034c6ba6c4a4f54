"""Acceptance suite: one test (and one printed pass/fail line) per criterion.

Run with `pytest -v tests/test_acceptance.py`.  The desk-scale learning
criterion trains two full models and takes several minutes; everything else
is property-based and fast.
"""

import time

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

import hyperg.autodiff as ad
from hyperg.corpus import CorpusSpec, ExperimentRecord, check_record, gen_corpus
from hyperg.experiments import shuffle_experiment
from hyperg.hypergraph import build_hypergraph, incidence, permute
from hyperg.model import HypergModel, ModelConfig
from hyperg.phl import graph_index, phl_forward
from hyperg.rng import stream_rng
from hyperg.table import Table, augment
from hyperg.training import TrainConfig, evaluate, load_checkpoint, predict, save_checkpoint, train
from hyperg.verification import full_loss_grad_check


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def _table(m: int, n: int, tag: str = "t") -> Table:
    return Table(caption=f"{tag} caption",
                 headers=tuple(f"h{j}" for j in range(n)),
                 cells=tuple(tuple(f"{tag}c{i}x{j}" for j in range(n)) for i in range(m)))


def test_criterion_1_structural_suite():
    """|V|=M*N, |E|=M+N+1, node degree 3, edge sizes (N, M, M*N); < 5 s."""
    start = time.time()
    for m in range(1, 13):
        for n in range(1, 13):
            g = build_hypergraph(augment(_table(m, n)))
            assert g.node_count == m * n
            assert g.edge_count == m + n + 1
            h = incidence(g)
            assert np.all(h.sum(axis=1) == 3)
            sizes = h.sum(axis=0)
            assert np.all(sizes[:m] == n) and np.all(sizes[m:m + n] == m)
            assert sizes[-1] == m * n
    elapsed = time.time() - start
    _report("criterion 1 structural suite", elapsed < 5.0, f"{elapsed:.2f}s for 144 graphs")


def test_criterion_2_attention_distributions():
    """On 100 random graphs every alpha per-edge sum and beta per-node sum
    lies in [1 - 1e-9, 1 + 1e-9]."""
    model = HypergModel(ModelConfig(dim=8, heads=2, layers=2, vocab_size=512,
                                    dropout_rate=0.0, seed=0))
    rng = stream_rng(0, "acceptance/graphs")
    worst = 0.0
    for i in range(100):
        m = int(rng.integers(1, 7))
        n = int(rng.integers(1, 7))
        g = build_hypergraph(augment(_table(m, n, tag=f"g{i}")))
        gi = graph_index(g)
        tape = ad.Tape()
        params = model.wrap(tape, trainable=False)
        h_v, h_e, h_w = model.embedder.embed_hypergraph(params, g, f"inquiry {i}")
        out = phl_forward(model.cfg.phl, params, gi, h_v, h_e, h_w, log_attention=True)
        for layer in out.attention.layers:
            for alpha in layer["alpha"]:
                sums = np.bincount(gi.member_edge, weights=alpha)
                worst = max(worst, float(np.max(np.abs(sums - 1.0))))
            for beta in layer["beta"]:
                sums = np.bincount(gi.pair_node, weights=beta)
                worst = max(worst, float(np.max(np.abs(sums - 1.0))))
    _report("criterion 2 attention distributions", worst <= 1e-9,
            f"max |sum - 1| = {worst:.2e} over 100 graphs")


def test_criterion_3_permutation_invariance():
    """Row+column permutations: table readout diff <= 1e-9, zero prediction
    flips, zero shuffle-experiment accuracy variance."""
    model = HypergModel(ModelConfig(dim=8, heads=2, layers=2, vocab_size=2048,
                                    dropout_rate=0.0, seed=0))
    records = gen_corpus(CorpusSpec(count=50, m_range=(2, 4), n_range=(2, 4),
                                    sparsity=0.2, seed=5))
    rng = stream_rng(0, "acceptance/perms")
    max_diff = 0.0
    flips = 0
    for record in records:
        base = model.run(record)
        t = record.table
        row_perm = list(rng.permutation(t.row_count))
        col_perm = list(rng.permutation(t.col_count))
        shuffled = Table(
            caption=t.caption,
            headers=tuple(t.headers[c] for c in col_perm),
            cells=tuple(tuple(t.cells[r][c] for c in col_perm) for r in row_perm),
        )
        perm_rec = ExperimentRecord(record.record_id, shuffled, record.inquiry,
                                    record.task, record.gold, record.meta)
        other = model.run(perm_rec)
        max_diff = max(max_diff, float(np.max(np.abs(
            base.phl_out.table_embed.value - other.phl_out.table_embed.value))))
        flips += base.prediction() != other.prediction()
    report = shuffle_experiment(model, records[:20], [0.0, 0.5, 1.0], "rows", seed=1)
    ok = max_diff <= 1e-9 and flips == 0 and report.accuracy_variance == 0.0
    _report("criterion 3 permutation invariance", ok,
            f"max diff {max_diff:.2e}, flips {flips}, "
            f"shuffle variance {report.accuracy_variance}")


def test_criterion_4_gradient_correctness():
    """Full-loss grad check (2x2 table, d=4, K=2, L=1): rel err < 1e-4, < 60 s."""
    start = time.time()
    err = full_loss_grad_check(dim=4, heads=2, layers=1, seed=0, h=1e-5)
    elapsed = time.time() - start
    _report("criterion 4 gradient correctness", err < 1e-4 and elapsed < 60.0,
            f"max rel err {err:.2e} in {elapsed:.1f}s")


def _learning_corpus():
    recs = gen_corpus(CorpusSpec(count=600, m_range=(2, 3), n_range=(2, 2),
                                 sparsity=0.2, seed=7))
    return recs[:500], recs[500:]


def test_criterion_5_desk_scale_learning():
    """500/100 lookup corpus (seed 7, p=0.2), lr 5e-5 x 20, batch 16,
    <= 20 epochs: test accuracy >= 0.85 and the propagation-disabled
    ablation at least 5 points lower."""
    train_recs, test_recs = _learning_corpus()

    # Separability oracle first: logistic regression on the gold-feature
    # indicator (claimed value present in the queried row) must solve the task.
    X = np.array([[1.0 if check_record(ExperimentRecord(
        r.record_id, r.table, r.inquiry, r.task, "yes")) else 0.0]
        for r in train_recs + test_recs])
    y = np.array([1 if r.gold == "yes" else 0 for r in train_recs + test_recs])
    oracle = LogisticRegression().fit(X[:500], y[:500])
    oracle_acc = oracle.score(X[500:], y[500:])
    assert oracle_acc >= 0.99, f"oracle separability only {oracle_acc}"

    mcfg = ModelConfig(dim=64, heads=4, layers=2, vocab_size=32768,
                       phl_init="overlap", seed=7)
    tcfg = TrainConfig(lr=5e-5, module_lr_scale=20.0, batch_size=16,
                       max_epochs=20, patience=20, seed=7)
    res = train(HypergModel(mcfg), train_recs, tcfg)
    acc = evaluate(res.model, test_recs).accuracy

    ablation_cfg = TrainConfig(lr=5e-5, module_lr_scale=20.0, batch_size=16,
                               max_epochs=20, patience=20, seed=7, no_phl=True)
    res_np = train(HypergModel(mcfg), train_recs, ablation_cfg)
    acc_np = evaluate(res_np.model, test_recs, no_phl=True).accuracy

    ok = acc >= 0.85 and acc_np <= acc - 0.05
    _report("criterion 5 desk-scale learning", ok,
            f"oracle {oracle_acc:.2f}, test acc {acc:.3f}, "
            f"propagation-disabled {acc_np:.3f}")


def test_criterion_6_ablation_switches():
    """Both switches run end-to-end (train + eval) and change outputs."""
    records = gen_corpus(CorpusSpec(count=8, m_range=(2, 2), n_range=(2, 2), seed=3))
    cfg = ModelConfig(dim=8, heads=2, layers=2, vocab_size=512,
                      dropout_rate=0.0, seed=0)
    model = HypergModel(cfg)
    base = model.run(records[0]).logits.value
    no_phl = model.run(records[0], no_phl=True).logits.value
    no_inq = model.run(records[0], no_inquiry=True).logits.value
    changed = not np.array_equal(base, no_phl) and not np.array_equal(base, no_inq)
    for flag in ({"no_phl": True}, {"no_inquiry": True}):
        res = train(HypergModel(cfg), records,
                    TrainConfig(lr=1e-4, batch_size=4, max_epochs=1, seed=0, **flag))
        evaluate(res.model, records, **flag)
    _report("criterion 6 ablation switches", changed,
            "both switches trained/evaluated and perturb the logits")


def test_criterion_7_determinism_and_persistence(tmp_path):
    """Identical (seed, config, corpus) -> bit-identical history; reload ->
    bit-identical eval outputs."""
    records = gen_corpus(CorpusSpec(count=12, m_range=(2, 2), n_range=(2, 2), seed=2))
    cfg = ModelConfig(dim=8, heads=2, layers=1, vocab_size=512, seed=1)
    tcfg = TrainConfig(lr=1e-4, batch_size=4, max_epochs=2, patience=2, seed=1)
    res_a = train(HypergModel(cfg), records, tcfg)
    res_b = train(HypergModel(cfg), records, tcfg)
    identical_history = res_a.history == res_b.history

    path = str(tmp_path / "ckpt")
    save_checkpoint(path, res_a.model, res_a.opt_state)
    loaded, _, _ = load_checkpoint(path)
    logits_same = all(
        np.array_equal(res_a.model.run(r).logits.value, loaded.run(r).logits.value)
        for r in records
    ) and predict(loaded, records) == predict(res_a.model, records)
    _report("criterion 7 determinism & persistence",
            identical_history and logits_same,
            "bit-identical history and reloaded eval outputs")


def test_criterion_8_corpus_integrity():
    """Independent checker validates 100% of gold labels; sparsity injection
    rate within +-0.03 of p over >= 10k eligible cells."""
    spec = CorpusSpec(count=2500, m_range=(2, 4), n_range=(2, 4), sparsity=0.2,
                      superlative_fraction=0.3, seed=11)
    records = gen_corpus(spec)
    bad = sum(0 if check_record(r) else 1 for r in records)
    eligible = sum(r.meta["eligible_cells"] for r in records)
    injected = sum(r.meta["sparse_injected"] for r in records)
    rate = injected / eligible
    ok = bad == 0 and eligible >= 10_000 and abs(rate - 0.2) <= 0.03
    _report("criterion 8 corpus integrity", ok,
            f"{bad} checker failures, rate {rate:.4f} over {eligible} eligible cells")
