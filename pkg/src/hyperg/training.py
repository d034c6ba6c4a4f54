"""Loss, Adam optimizer, train/eval loops, metrics, and checkpoints.

The propagation network, projector, and answer heads train at the base
learning rate times `module_lr_scale`; everything else (the embedder) uses
the base rate.  Checkpoints are a JSON manifest plus a little-endian raw
buffer and restore bit-identical eval behavior.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from . import autodiff as ad
from .corpus import ExperimentRecord, TaskKind
from .errors import EmptyCorpus, LengthMismatch, ShapeMismatch
from .model import HypergModel, ModelConfig, PreparedRecord, target_index
from .rng import stream_rng

_SCALED_PREFIXES = ("phl/", "proj/", "head/")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5  # grid {5e-5, 1e-5, 5e-6}
    module_lr_scale: float = 20.0  # grid {1, 10, 20}, applied to PHL/projector/heads
    batch_size: int = 16  # grid {8, 16, 32}
    max_epochs: int = 4  # desk-scale runs may raise this up to 50
    patience: int = 3
    val_fraction: float = 0.1
    seed: int = 0
    no_phl: bool = False
    no_inquiry: bool = False

    def __post_init__(self) -> None:
        assert self.lr > 0 and self.batch_size >= 1
        assert 1 <= self.max_epochs <= 50


def sequence_nll(logit_steps: list[ad.Tensor], targets: list[int]) -> ad.Tensor:
    """Sum of per-step cross entropies; single-step tasks use T=1."""
    if len(logit_steps) != len(targets) or not logit_steps:
        raise LengthMismatch("logit steps and targets must have equal length >= 1")
    total = ad.cross_entropy(logit_steps[0], targets[0])
    for logits, target in zip(logit_steps[1:], targets[1:]):
        total = ad.add(total, ad.cross_entropy(logits, target))
    return total


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, module_lr_scale: float = 1.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update; scaled-module params use lr * module_lr_scale."""
    state.step += 1
    t = state.step
    for name in sorted(params):
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != params[name].shape:
            raise ShapeMismatch(f"gradient shape mismatch for {name}")
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1 ** t)
        v_hat = state.v[name] / (1 - beta2 ** t)
        rate = lr * (module_lr_scale if name.startswith(_SCALED_PREFIXES) else 1.0)
        params[name] -= rate * m_hat / (np.sqrt(v_hat) + eps)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: list[list[int]]
    denotation_accuracy: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(gold: list[str], pred: list[str]) -> Metrics:
    labels = sorted(set(gold) | set(pred))
    acc = float(np.mean([g == p for g, p in zip(gold, pred)]))
    prec, rec, f1, _ = precision_recall_fscore_support(
        gold, pred, labels=labels, average="weighted", zero_division=0)
    conf = confusion_matrix(gold, pred, labels=labels).tolist()
    return Metrics(acc, float(prec), float(rec), float(f1), conf)


def predict(model: HypergModel, records: list[ExperimentRecord],
            no_phl: bool = False, no_inquiry: bool = False,
            prepared: list[PreparedRecord] | None = None) -> list[str]:
    preps = prepared if prepared is not None else [model.prepare(r) for r in records]
    out = []
    for prep in preps:
        tape = ad.Tape()
        params = model.wrap(tape, trainable=False)
        result = model.forward(prep, params, train=False,
                               no_phl=no_phl, no_inquiry=no_inquiry)
        out.append(result.prediction())
    return out


def evaluate(model: HypergModel, records: list[ExperimentRecord],
             no_phl: bool = False, no_inquiry: bool = False,
             prepared: list[PreparedRecord] | None = None) -> Metrics:
    if not records:
        raise EmptyCorpus("cannot evaluate an empty corpus")
    preds = predict(model, records, no_phl=no_phl, no_inquiry=no_inquiry,
                    prepared=prepared)
    if records[0].task is TaskKind.TQA_LITE:
        gold_text = [r.gold[2] for r in records]
        denot = float(np.mean([g == p for g, p in zip(gold_text, preds)]))
        base = compute_metrics(gold_text, preds)
        return Metrics(base.accuracy, base.weighted_precision, base.weighted_recall,
                       base.weighted_f1, base.confusion, denotation_accuracy=denot)
    gold = [r.gold for r in records]
    return compute_metrics(gold, preds)


def _split_stratified(records: list[ExperimentRecord], val_fraction: float,
                      seed: int) -> tuple[list[int], list[int]]:
    rng = stream_rng(seed, "train/val_split")
    by_label: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        key = r.gold if isinstance(r.gold, str) else "tqa"
        by_label.setdefault(key, []).append(i)
    train_idx, val_idx = [], []
    for key in sorted(by_label):
        idxs = by_label[key]
        perm = rng.permutation(len(idxs))
        n_val = max(1, int(round(val_fraction * len(idxs)))) if len(idxs) > 1 else 0
        val_idx.extend(idxs[i] for i in perm[:n_val])
        train_idx.extend(idxs[i] for i in perm[n_val:])
    return sorted(train_idx), sorted(val_idx)


@dataclass
class TrainResult:
    model: HypergModel
    history: list[dict]
    best_epoch: int
    opt_state: AdamState


def train(model: HypergModel, records: list[ExperimentRecord],
          cfg: TrainConfig, quiet: bool = True) -> TrainResult:
    """Train with early stopping on validation accuracy; returns the
    best-validation parameter snapshot."""
    if not records:
        raise EmptyCorpus("cannot train on an empty corpus")
    train_idx, val_idx = _split_stratified(records, cfg.val_fraction, cfg.seed)
    prepared = [model.prepare(r) for r in records]
    train_set = [prepared[i] for i in train_idx]
    val_records = [records[i] for i in val_idx]
    val_prepared = [prepared[i] for i in val_idx]

    opt = AdamState.init(model.params)
    order_rng = stream_rng(cfg.seed, "train/order")
    dropout_rng = stream_rng(cfg.seed, "train/dropout")

    history: list[dict] = []
    best_acc = -1.0
    best_params = None
    best_opt = None
    best_epoch = -1
    stale = 0

    for epoch in range(cfg.max_epochs):
        order = order_rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            grads: dict[str, np.ndarray] = {}
            for prep in batch:  # fixed example order keeps reductions deterministic
                tape = ad.Tape()
                params = model.wrap(tape, trainable=True)
                result = model.forward(prep, params, train=True, rng=dropout_rng,
                                       no_phl=cfg.no_phl, no_inquiry=cfg.no_inquiry)
                logits = result.logits if result.logits is not None else result.cell_scores
                loss = sequence_nll([logits], [target_index(prep)])
                tape.backward(loss)
                epoch_loss += loss.item()
                for name, tensor in params.items():
                    if tensor.grad is not None:
                        if name in grads:
                            grads[name] += tensor.grad
                        else:
                            grads[name] = tensor.grad.copy()
            for name in grads:
                grads[name] /= len(batch)
            adam_step(model.params, grads, opt, cfg.lr, cfg.module_lr_scale)
        val_metrics = (evaluate(model, val_records, no_phl=cfg.no_phl,
                                no_inquiry=cfg.no_inquiry, prepared=val_prepared)
                       if val_records else None)
        val_acc = val_metrics.accuracy if val_metrics else float("nan")
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / max(1, len(train_set)),
            "val_accuracy": val_acc,
        })
        if not quiet:
            print(f"epoch {epoch}: loss {history[-1]['train_loss']:.4f} "
                  f"val_acc {val_acc:.4f}")
        if val_metrics is None or val_acc > best_acc:
            best_acc = val_acc if val_metrics else 0.0
            best_params = copy.deepcopy(model.params)
            best_opt = copy.deepcopy(opt)
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if best_params is not None:
        model.params = best_params
        opt = best_opt
    return TrainResult(model=model, history=history, best_epoch=best_epoch, opt_state=opt)


# --- Checkpoints -----------------------------------------------------------


def _config_hash(cfg: ModelConfig) -> str:
    return hashlib.sha256(json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()


def save_checkpoint(path: str, model: HypergModel,
                    opt_state: AdamState | None = None,
                    extra: dict | None = None) -> None:
    """Write `model.manifest.json` + `model.bin` into directory `path`."""
    os.makedirs(path, exist_ok=True)
    entries: dict[str, np.ndarray] = dict(model.params)
    if opt_state is not None:
        for name, arr in opt_state.m.items():
            entries[f"adam_m/{name}"] = arr
        for name, arr in opt_state.v.items():
            entries[f"adam_v/{name}"] = arr
    manifest: dict = {
        "config": asdict(model.cfg),
        "config_hash": _config_hash(model.cfg),
        "adam_step": opt_state.step if opt_state is not None else None,
        "extra": extra or {},
        "tensors": {},
    }
    offset = 0
    with open(os.path.join(path, "model.bin"), "wb") as fh:
        for name in sorted(entries):
            arr = np.ascontiguousarray(entries[name], dtype=np.float64)
            data = arr.astype("<f8").tobytes()
            manifest["tensors"][name] = {
                "shape": list(arr.shape),
                "dtype": "f8",
                "offset": offset,
                "nbytes": len(data),
            }
            fh.write(data)
            offset += len(data)
    with open(os.path.join(path, "model.manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(path: str) -> tuple[HypergModel, AdamState | None, dict]:
    with open(os.path.join(path, "model.manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(path, "model.bin"), "rb") as fh:
        blob = fh.read()
    entries: dict[str, np.ndarray] = {}
    for name, info in manifest["tensors"].items():
        arr = np.frombuffer(blob, dtype="<f8", count=int(np.prod(info["shape"])) or 1,
                            offset=info["offset"])
        entries[name] = arr.reshape(info["shape"]).copy()
    params = {k: v for k, v in entries.items() if not k.startswith(("adam_m/", "adam_v/"))}
    cfg = ModelConfig(**{k: tuple(v) if isinstance(v, list) else v
                         for k, v in manifest["config"].items()})
    model = HypergModel(cfg, params=params)
    opt = None
    if manifest.get("adam_step") is not None:
        opt = AdamState(
            m={k[len("adam_m/"):]: v for k, v in entries.items() if k.startswith("adam_m/")},
            v={k[len("adam_v/"):]: v for k, v in entries.items() if k.startswith("adam_v/")},
            step=manifest["adam_step"],
        )
    return model, opt, manifest.get("extra", {})
