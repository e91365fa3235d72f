"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything the network computes is expressed through the operations in this
module so a single linear tape can replay exact analytic backward passes.
There is deliberately no broadcasting: operand shapes must match exactly
(except where an op's contract says otherwise), which keeps every backward
pass a direct transcription of its forward.

Usage sketch::

    w = parameter(rng.standard_normal((4, 3)))
    with Tape() as tape:
        loss = sum_all(mul(y, y))        # y built from ops on w
    tape.backward(loss)                  # accumulates into w.grad

A tape and the tensors recorded on it form a single-threaded unit of work;
the active-tape stack is thread-local, so independent tapes may run on
independent threads.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, DimensionError

_STATE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_STATE, "tapes", None)
    if stack is None:
        stack = []
        _STATE.tapes = stack
    return stack


def _active_tape():
    stack = getattr(_STATE, "tapes", None)
    return stack[-1] if stack else None


class Tensor:
    """A dense float64 array plus the gradient slot filled by Tape.backward.

    ``requires_grad`` marks tensors that participate in differentiation:
    parameters and anything produced from them while a tape is active.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ContractError("tensor values must be finite (no NaN/Inf)")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    """A learnable leaf tensor (validated, participates in gradients)."""
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    """A non-learnable tensor; no gradient is ever computed for it."""
    return Tensor(data, requires_grad=False)


def _result(arr: np.ndarray) -> Tensor:
    # Internal fast constructor: op outputs are finite by construction.
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.grad = None
    t.requires_grad = False
    return t


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


class Tape:
    """Ordered record of executed ops, replayed in reverse for gradients."""

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        out.requires_grad = True
        self._entries.append((out, inputs, backward))

    def _run(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
        # Each recorded entry is visited exactly once, in reverse execution
        # order; every consumer of a tensor appears later on the tape than
        # its producer, so popping here sees the fully accumulated gradient.
        for out, inputs, backward in reversed(self._entries):
            g = grads.pop(out, None)
            if g is None:
                continue
            for inp, ig in zip(inputs, backward(g)):
                if ig is None or not inp.requires_grad:
                    continue
                acc = grads.get(inp)
                if acc is None:
                    grads[inp] = ig
                else:
                    acc += ig
        return grads

    def gradients(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradient of ``loss`` w.r.t. each param; exact zeros if unused."""
        grads = self._run(loss)
        return [grads.get(p, np.zeros_like(p.data)) for p in params]

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into the ``.grad`` of every leaf tensor."""
        for leaf, g in self._run(loss).items():
            if leaf.grad is None:
                leaf.grad = g.copy()
            else:
                leaf.grad += g


def _should_record(*tensors: Tensor):
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in tensors):
        return tape
    return None


# ---------------------------------------------------------------------------
# binary ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {ad.shape} x {bd.shape}")
    out = _result(ad @ bd)
    tape = _should_record(a, b)
    if tape is not None:
        def backward(g, a=a, b=b, ad=ad, bd=bd):
            ga = g @ bd.T if a.requires_grad else None
            gb = ad.T @ g if b.requires_grad else None
            return ga, gb
        tape._record(out, (a, b), backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add: shapes differ {a.data.shape} vs {b.data.shape}")
    out = _result(a.data + b.data)
    tape = _should_record(a, b)
    if tape is not None:
        def backward(g):
            return g, g
        tape._record(out, (a, b), backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul: shapes differ {a.data.shape} vs {b.data.shape}")
    out = _result(a.data * b.data)
    tape = _should_record(a, b)
    if tape is not None:
        def backward(g, ad=a.data, bd=b.data):
            return g * bd, g * ad
        tape._record(out, (a, b), backward)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python float constant."""
    c = float(c)
    out = _result(a.data * c)
    tape = _should_record(a)
    if tape is not None:
        def backward(g):
            return (g * c,)
        tape._record(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _result(y)
    tape = _should_record(a)
    if tape is not None:
        def backward(g, y=y):
            return (g * (1.0 - y * y),)
        tape._record(out, (a,), backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    # exp overflow at very negative x saturates to inf and the quotient to
    # an exact 0, which is the right answer; suppress the warning only
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))
    out = _result(y)
    tape = _should_record(a)
    if tape is not None:
        def backward(g, y=y):
            return (g * y * (1.0 - y),)
        tape._record(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# shape ops


def concat(*tensors: Tensor) -> Tensor:
    """Concatenate along the last axis; all other extents must match."""
    if len(tensors) < 2:
        raise ContractError("concat needs at least two tensors")
    lead = tensors[0].data.shape[:-1]
    for t in tensors[1:]:
        if t.data.shape[:-1] != lead:
            raise DimensionError(
                f"concat: leading extents differ {tensors[0].data.shape} vs {t.data.shape}")
    out = _result(np.concatenate([t.data for t in tensors], axis=-1))
    tape = _should_record(*tensors)
    if tape is not None:
        widths = [t.data.shape[-1] for t in tensors]
        def backward(g, widths=widths):
            pieces, off = [], 0
            for w in widths:
                pieces.append(g[..., off:off + w])
                off += w
            return tuple(pieces)
        tape._record(out, tensors, backward)
    return out


def concat_rows(*tensors: Tensor) -> Tensor:
    """Stack 2-D tensors along axis 0; column counts must match."""
    if len(tensors) < 1:
        raise ContractError("concat_rows needs at least one tensor")
    cols = tensors[0].data.shape[-1]
    for t in tensors:
        if t.data.ndim != 2 or t.data.shape[1] != cols:
            raise DimensionError(
                f"concat_rows: need 2-D with {cols} columns, got {t.data.shape}")
    out = _result(np.concatenate([t.data for t in tensors], axis=0))
    tape = _should_record(*tensors)
    if tape is not None:
        heights = [t.data.shape[0] for t in tensors]
        def backward(g, heights=heights):
            pieces, off = [], 0
            for h in heights:
                pieces.append(g[off:off + h])
                off += h
            return tuple(pieces)
        tape._record(out, tensors, backward)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= start < stop <= a.data.shape[0]):
        raise DimensionError(
            f"slice_rows: [{start}:{stop}] invalid for shape {a.data.shape}")
    out = _result(a.data[start:stop].copy())
    tape = _should_record(a)
    if tape is not None:
        shape = a.data.shape
        def backward(g):
            full = np.zeros(shape)
            full[start:stop] = g
            return (full,)
        tape._record(out, (a,), backward)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= start < stop <= a.data.shape[1]):
        raise DimensionError(
            f"slice_cols: [{start}:{stop}] invalid for shape {a.data.shape}")
    out = _result(a.data[:, start:stop].copy())
    tape = _should_record(a)
    if tape is not None:
        shape = a.data.shape
        def backward(g):
            full = np.zeros(shape)
            full[:, start:stop] = g
            return (full,)
        tape._record(out, (a,), backward)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose: need 2-D, got {a.data.shape}")
    out = _result(a.data.T.copy())
    tape = _should_record(a)
    if tape is not None:
        def backward(g):
            return (g.T.copy(),)
        tape._record(out, (a,), backward)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _result(a.data.reshape(shape).copy())
    tape = _should_record(a)
    if tape is not None:
        orig = a.data.shape
        def backward(g):
            return (g.reshape(orig),)
        tape._record(out, (a,), backward)
    return out


def gather_rows(a: Tensor, indices, assume_unique: bool = False) -> Tensor:
    """Select rows of a 2-D tensor; index -1 yields an all-zero row.

    The backward pass scatter-adds into the source, so repeated indices
    accumulate (this is what makes it the adjoint of tiling/repetition).
    ``assume_unique`` lets the caller promise there are no repeats, which
    replaces the scatter-add with a plain (much faster) scatter.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if a.data.ndim != 2 or idx.ndim != 1:
        raise DimensionError(
            f"gather_rows: need 2-D source and 1-D indices, got {a.data.shape}, {idx.shape}")
    if idx.size and (idx.max(initial=-1) >= a.data.shape[0] or idx.min(initial=0) < -1):
        raise DimensionError(
            f"gather_rows: index out of range for {a.data.shape[0]} rows")
    keep = idx >= 0
    outd = np.zeros((idx.size, a.data.shape[1]))
    outd[keep] = a.data[idx[keep]]
    out = _result(outd)
    tape = _should_record(a)
    if tape is not None:
        shape = a.data.shape
        def backward(g, idx=idx, keep=keep):
            full = np.zeros(shape)
            if assume_unique:
                full[idx[keep]] = g[keep]
            else:
                np.add.at(full, idx[keep], g[keep])
            return (full,)
        tape._record(out, (a,), backward)
    return out


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Repeat each row of a 2-D tensor k times: (M, K) -> (M*k, K).

    The adjoint of :func:`block_sum_rows`; also tiles a (1, K) bias to any
    number of rows.
    """
    if a.data.ndim != 2 or k < 1:
        raise DimensionError(f"repeat_rows: need 2-D and k >= 1, got "
                             f"{a.data.shape}, k={k}")
    out = _result(np.repeat(a.data, k, axis=0))
    tape = _should_record(a)
    if tape is not None:
        rows, cols = a.data.shape
        def backward(g):
            return (g.reshape(rows, k, cols).sum(axis=1),)
        tape._record(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    out = _result(np.asarray(a.data.sum()))
    tape = _should_record(a)
    if tape is not None:
        shape = a.data.shape
        def backward(g):
            return (np.full(shape, float(g)),)
        tape._record(out, (a,), backward)
    return out


def sum_rows(a: Tensor) -> Tensor:
    """Column totals of a 2-D tensor: (M, K) -> (1, K)."""
    if a.data.ndim != 2:
        raise DimensionError(f"sum_rows: need 2-D, got {a.data.shape}")
    out = _result(a.data.sum(axis=0, keepdims=True))
    tape = _should_record(a)
    if tape is not None:
        rows = a.data.shape[0]
        def backward(g):
            return (np.repeat(g, rows, axis=0),)
        tape._record(out, (a,), backward)
    return out


def row_sums(a: Tensor) -> Tensor:
    """Per-row totals of a 2-D tensor: (M, K) -> (M, 1)."""
    if a.data.ndim != 2:
        raise DimensionError(f"row_sums: need 2-D, got {a.data.shape}")
    out = _result(a.data.sum(axis=1, keepdims=True))
    tape = _should_record(a)
    if tape is not None:
        cols = a.data.shape[1]
        def backward(g):
            return (np.repeat(g, cols, axis=1),)
        tape._record(out, (a,), backward)
    return out


def scale_rows(a: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of ``a`` (M, K) by scalar ``s[i]`` (shape (M,) or (M, 1))."""
    sd = s.data.reshape(-1)
    if a.data.ndim != 2 or sd.shape[0] != a.data.shape[0]:
        raise DimensionError(
            f"scale_rows: shapes {a.data.shape} and {s.data.shape} incompatible")
    out = _result(a.data * sd[:, None])
    tape = _should_record(a, s)
    if tape is not None:
        s_shape = s.data.shape
        def backward(g, ad=a.data, sd=sd):
            ga = g * sd[:, None] if a.requires_grad else None
            gs = (g * ad).sum(axis=1).reshape(s_shape) if s.requires_grad else None
            return ga, gs
        tape._record(out, (a, s), backward)
    return out


def block_sum_rows(a: Tensor, block: int) -> Tensor:
    """Sum each run of ``block`` consecutive rows: (B*block, K) -> (B, K)."""
    if a.data.ndim != 2 or block <= 0 or a.data.shape[0] % block != 0:
        raise DimensionError(
            f"block_sum_rows: shape {a.data.shape} not divisible into blocks of {block}")
    b = a.data.shape[0] // block
    out = _result(a.data.reshape(b, block, -1).sum(axis=1))
    tape = _should_record(a)
    if tape is not None:
        def backward(g):
            return (np.repeat(g, block, axis=0),)
        tape._record(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# softmax family

def _masked_softmax_values(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # Masked entries behave as -inf scores: exact zeros after normalization.
    neg = np.where(mask, scores, -np.inf)
    m = neg.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(scores - m), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def masked_softmax(scores: Tensor, mask) -> Tensor:
    """Softmax over the valid positions of a 1-D score vector.

    Masked positions come out exactly 0; the valid ones sum to 1. Raises
    DegenerateInputError if nothing is valid.
    """
    m = np.asarray(mask, dtype=bool)
    if scores.data.ndim != 1 or m.shape != scores.data.shape:
        raise DimensionError(
            f"masked_softmax: scores {scores.data.shape} vs mask {m.shape}")
    if not m.any():
        raise DegenerateInputError("masked_softmax: all positions masked")
    y = _masked_softmax_values(scores.data, m)
    out = _result(y)
    tape = _should_record(scores)
    if tape is not None:
        def backward(g, y=y):
            dot = float((g * y).sum())
            return (y * (g - dot),)
        tape._record(out, (scores,), backward)
    return out


def softmax(scores: Tensor) -> Tensor:
    """Plain softmax of a 1-D vector (all positions valid)."""
    if scores.data.ndim != 1:
        raise DimensionError(f"softmax: need 1-D, got {scores.data.shape}")
    return masked_softmax(scores, np.ones(scores.data.shape, dtype=bool))


def masked_softmax_rows(scores: Tensor, mask) -> Tensor:
    """Row-wise masked softmax of a 2-D tensor; each row needs >= 1 valid."""
    m = np.asarray(mask, dtype=bool)
    if scores.data.ndim != 2 or m.shape != scores.data.shape:
        raise DimensionError(
            f"masked_softmax_rows: scores {scores.data.shape} vs mask {m.shape}")
    if not m.any(axis=1).all():
        raise DegenerateInputError("masked_softmax_rows: a row is fully masked")
    y = _masked_softmax_values(scores.data, m)
    out = _result(y)
    tape = _should_record(scores)
    if tape is not None:
        def backward(g, y=y):
            dot = (g * y).sum(axis=1, keepdims=True)
            return (y * (g - dot),)
        tape._record(out, (scores,), backward)
    return out


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of (R, C) logits against integer labels (R,)."""
    lab = np.asarray(labels, dtype=np.intp)
    ld = logits.data
    if ld.ndim != 2 or lab.shape != (ld.shape[0],):
        raise DimensionError(
            f"cross_entropy_logits: logits {ld.shape} vs labels {lab.shape}")
    if lab.size and (lab.min() < 0 or lab.max() >= ld.shape[1]):
        raise ContractError("cross_entropy_logits: label outside class range")
    mx = ld.max(axis=1, keepdims=True)
    lse = np.log(np.exp(ld - mx).sum(axis=1, keepdims=True)) + mx
    losses = lse[:, 0] - ld[np.arange(ld.shape[0]), lab]
    out = _result(np.asarray(losses.mean()))
    tape = _should_record(logits)
    if tape is not None:
        probs = np.exp(ld - lse)
        def backward(g, probs=probs, lab=lab):
            d = probs.copy()
            d[np.arange(d.shape[0]), lab] -= 1.0
            return (d * (float(g) / d.shape[0]),)
        tape._record(out, (logits,), backward)
    return out


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(loss_fn: Callable[[Sequence[Tensor]], Tensor],
               params: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    """Compare tape gradients with central differences.

    ``loss_fn(params)`` must deterministically rebuild a scalar loss from the
    current ``.data`` of the given parameters (so it is re-evaluated under
    perturbation). Returns the max over coordinates of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    if not (0.0 < eps <= 1e-2):
        raise ContractError(f"grad_check: eps must be in (0, 1e-2], got {eps}")
    with Tape() as tape:
        loss = loss_fn(params)
    if loss.data.size != 1:
        raise ContractError(f"grad_check: loss must be scalar, got {loss.data.shape}")
    analytic = tape.gradients(loss, params)
    max_err = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = loss_fn(params).item()
            flat[j] = orig - eps
            f_minus = loss_fn(params).item()
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(aflat[j] - numeric) / max(1e-8, abs(aflat[j]) + abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
