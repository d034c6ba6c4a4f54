"""Minimal dense-tensor engine with reverse-mode gradients.

Only the primitives the propagation network needs are provided: matmul,
broadcasting add/mul, concat/reshape/gather, segment softmax and sums,
LeakyReLU/ReLU, layer norm, dropout, and cross-entropy.  A Tape records one
backward closure per op in execution order and replays them strictly in
reverse, accumulating gradients in a fixed order so results are
deterministic.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import EmptySegment, NonFiniteValue, ShapeMismatch

_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    """Enable NaN/Inf checks on every op output (debug aid, off by default)."""
    global _CHECK_FINITE
    _CHECK_FINITE = enabled


def _checked(value: np.ndarray) -> np.ndarray:
    if _CHECK_FINITE and not np.all(np.isfinite(value)):
        raise NonFiniteValue("non-finite value produced by an op")
    return value


class Tape:
    """Execution-ordered op records; backward replays them in strict reverse."""

    def __init__(self) -> None:
        self._records: list[Callable[[], None]] = []

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._records.append(backward_fn)

    def backward(self, loss: "Tensor") -> None:
        if loss.value.ndim != 0 and loss.value.size != 1:
            raise ShapeMismatch("backward requires a scalar loss")
        loss._ensure_grad()
        loss.grad += np.ones_like(loss.value)
        for fn in reversed(self._records):
            fn()


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "tape")

    def __init__(self, value, requires_grad: bool = False, tape: Tape | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def _ensure_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def _result(value: np.ndarray, inputs: Sequence[Tensor]) -> Tensor:
    tape = next((t.tape for t in inputs if t.tape is not None), None)
    requires = any(t.requires_grad for t in inputs)
    return Tensor(_checked(value), requires_grad=requires, tape=tape)


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable[[], None]) -> Tensor:
    if out.requires_grad and out.tape is not None:
        for t in inputs:
            if t.requires_grad:
                t._ensure_grad()
        out._ensure_grad()
        out.tape.record(backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.value + b.value, (a, b))

    def backward() -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad, b.value.shape)

    return _record(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.value - b.value, (a, b))

    def backward() -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.value.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(out.grad, b.value.shape)

    return _record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.value * b.value, (a, b))

    def backward() -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad * b.value, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad * a.value, b.value.shape)

    return _record(out, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    out = _result(a.value * s, (a,))

    def backward() -> None:
        if a.requires_grad:
            a.grad += out.grad * s

    return _record(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2):
        raise ShapeMismatch("matmul supports 1-D and 2-D operands only")
    if a.value.shape[-1] != b.value.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.value.shape} @ {b.value.shape}")
    out = _result(a.value @ b.value, (a, b))

    def backward() -> None:
        g = out.grad
        av, bv = a.value, b.value
        if a.requires_grad:
            if av.ndim == 2 and bv.ndim == 2:
                a.grad += g @ bv.T
            elif av.ndim == 2 and bv.ndim == 1:
                a.grad += np.outer(g, bv)
            elif av.ndim == 1 and bv.ndim == 2:
                a.grad += bv @ g
            else:
                a.grad += g * bv
        if b.requires_grad:
            if av.ndim == 2 and bv.ndim == 2:
                b.grad += av.T @ g
            elif av.ndim == 2 and bv.ndim == 1:
                b.grad += av.T @ g
            elif av.ndim == 1 and bv.ndim == 2:
                b.grad += np.outer(av, g)
            else:
                b.grad += g * av

    return _record(out, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = _result(np.concatenate([t.value for t in tensors], axis=axis), tensors)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward() -> None:
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * out.grad.ndim
                sl[axis] = slice(start, stop)
                t.grad += out.grad[tuple(sl)]

    return _record(out, tensors, backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _result(a.value.reshape(shape), (a,))

    def backward() -> None:
        if a.requires_grad:
            a.grad += out.grad.reshape(a.value.shape)

    return _record(out, (a,), backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    out = _result(a.value[idx], (a,))

    def backward() -> None:
        if a.requires_grad:
            np.add.at(a.grad, idx, out.grad)

    return _record(out, (a,), backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    out = _result(np.mean(a.value, axis=axis), (a,))
    count = a.value.size if axis is None else a.value.shape[axis]

    def backward() -> None:
        if a.requires_grad:
            g = out.grad / count
            if axis is None:
                a.grad += np.broadcast_to(g, a.value.shape)
            else:
                a.grad += np.expand_dims(g, axis)

    return _record(out, (a,), backward)


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    out = _result(np.sum(a.value, axis=axis), (a,))

    def backward() -> None:
        if a.requires_grad:
            if axis is None:
                a.grad += np.broadcast_to(out.grad, a.value.shape)
            else:
                a.grad += np.expand_dims(out.grad, axis)

    return _record(out, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    mask = np.where(a.value > 0, 1.0, slope)
    out = _result(a.value * mask, (a,))

    def backward() -> None:
        if a.requires_grad:
            a.grad += out.grad * mask

    return _record(out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, slope=0.0)


def segment_sum(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of `a` into `num_segments` buckets, in fixed index order."""
    seg = np.asarray(segment_ids, dtype=np.intp)
    value = np.zeros((num_segments,) + a.value.shape[1:], dtype=np.float64)
    np.add.at(value, seg, a.value)
    out = _result(value, (a,))

    def backward() -> None:
        if a.requires_grad:
            a.grad += out.grad[seg]

    return _record(out, (a,), backward)


def segment_softmax(logits: Tensor, segment_ids) -> Tensor:
    """Softmax within each segment of a 1-D logit vector, max-stabilized."""
    if logits.value.ndim != 1:
        raise ShapeMismatch("segment_softmax expects 1-D logits")
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != logits.value.shape:
        raise ShapeMismatch("segment ids must align with logits")
    num_segments = int(seg.max()) + 1 if seg.size else 0
    counts = np.bincount(seg, minlength=num_segments)
    if np.any(counts == 0):
        raise EmptySegment("every segment label must be populated")
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, logits.value)
    exps = np.exp(logits.value - seg_max[seg])
    denom = np.bincount(seg, weights=exps, minlength=num_segments)
    soft = exps / denom[seg]
    out = _result(soft, (logits,))

    def backward() -> None:
        if logits.requires_grad:
            gs = out.grad * soft
            dot = np.bincount(seg, weights=gs, minlength=num_segments)
            logits.grad += gs - soft * dot[seg]

    return _record(out, (logits,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing dimension; gamma/beta are length-d vectors."""
    d = x.value.shape[-1]
    if gamma.value.shape != (d,) or beta.value.shape != (d,):
        raise ShapeMismatch("layer_norm gamma/beta must match the trailing dim")
    mu = x.value.mean(axis=-1, keepdims=True)
    var = x.value.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv_std
    out = _result(gamma.value * xhat + beta.value, (x, gamma, beta))

    def backward() -> None:
        g = out.grad
        if gamma.requires_grad:
            gamma.grad += (g * xhat).reshape(-1, d).sum(axis=0)
        if beta.requires_grad:
            beta.grad += g.reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            dxhat = g * gamma.value
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x.grad += inv_std * (dxhat - m1 - xhat * m2)

    return _record(out, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with prob `rate`, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout requires an rng")
    mask = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
    out = _result(x.value * mask, (x,))

    def backward() -> None:
        if x.requires_grad:
            x.grad += out.grad * mask

    return _record(out, (x,), backward)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a 1-D logit vector."""
    if logits.value.ndim != 1:
        raise ShapeMismatch("cross_entropy expects 1-D logits")
    c = logits.value.shape[0]
    if not 0 <= target < c:
        raise IndexError(f"target {target} out of range for {c} classes")
    shifted = logits.value - logits.value.max()
    log_z = np.log(np.exp(shifted).sum())
    soft = np.exp(shifted - log_z)
    out = _result(np.asarray(log_z - shifted[target]), (logits,))

    def backward() -> None:
        if logits.requires_grad:
            g = soft * out.grad
            g[target] -= out.grad
            logits.grad += g

    return _record(out, (logits,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for row-matrix or single-vector x."""
    return add(matmul(x, w), b)


def grad_check(build: Callable[[dict[str, Tensor], Tape], Tensor],
               params: dict[str, np.ndarray], h: float = 1e-5) -> float:
    """Compare tape gradients of a scalar loss against central differences.

    `build` constructs the loss from parameter Tensors on a fresh tape; it is
    called once with gradients on and 2x per parameter element for the
    numeric side.  Returns the max relative error with denominator
    max(1, |analytic|, |numeric|).
    """
    tape = Tape()
    tensors = {k: Tensor(v.copy(), requires_grad=True, tape=tape) for k, v in params.items()}
    loss = build(tensors, tape)
    if not np.all(np.isfinite(loss.value)):
        raise NonFiniteValue("loss is not finite at the evaluation point")
    tape.backward(loss)
    analytic = {k: t.grad.copy() if t.grad is not None else np.zeros_like(t.value)
                for k, t in tensors.items()}

    def eval_loss(values: dict[str, np.ndarray]) -> float:
        t = Tape()
        ts = {k: Tensor(v, requires_grad=False, tape=t) for k, v in values.items()}
        return float(build(ts, t).value)

    max_err = 0.0
    work = {k: v.copy() for k, v in params.items()}
    for name, arr in work.items():
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = eval_loss(work)
            flat[i] = orig - h
            f_minus = eval_loss(work)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            if not np.isfinite(numeric):
                raise NonFiniteValue(f"non-finite finite difference for {name}[{i}]")
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            max_err = max(max_err, err)
    return max_err
