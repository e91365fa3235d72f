"""Intra-segment temporal attention: a BiLSTM over the frames of one
segment, multiplicative frame attention keyed by the summary state, and
the head that produces the segment representation.

Frame masks are prefix masks (real frames first, zero padding after). The
forward LSTM direction scans every frame; the backward direction starts at
the last valid frame so padding can never leak into the summary state, and
rows past the valid prefix are exact zeros. Attention assigns padded
frames exactly zero weight, which together makes the whole stack invariant
to appending more padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ContractError, DegenerateInputError, DimensionError
from .tensor import Tensor


@dataclass
class IstaParams:
    """BiLSTM gates for both directions, the bilinear attention matrix, and
    the segment-representation head. Gate blocks are ordered (input, forget,
    candidate, output) along the last axis."""

    wx_f: Tensor  # (F, 4h)
    wh_f: Tensor  # (h, 4h)
    b_f: Tensor   # (1, 4h)
    wx_b: Tensor
    wh_b: Tensor
    b_b: Tensor
    att_w: Tensor   # (2h, 2h)
    head_w: Tensor  # (4h, d_z)
    head_b: Tensor  # (1, d_z)

    @property
    def hidden_size(self) -> int:
        return self.wh_f.data.shape[0]

    @property
    def input_dim(self) -> int:
        return self.wx_f.data.shape[0]

    @property
    def repr_size(self) -> int:
        return self.head_w.data.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.wx_f, self.wh_f, self.b_f, self.wx_b, self.wh_b, self.b_b,
                self.att_w, self.head_w, self.head_b]


@dataclass
class SegmentRepr:
    """Output of the ISTA stack for one segment."""

    z: np.ndarray      # (repr_size,)
    alpha: np.ndarray  # attention over the segment's valid frames only


def _uniform_init(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_ista_params(rng: np.random.Generator, input_dim: int,
                     hidden_size: int, repr_size: int) -> IstaParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, forget bias +1."""
    h = hidden_size
    def lstm_bias():
        b = np.zeros((1, 4 * h))
        b[0, h:2 * h] = 1.0
        return b
    return IstaParams(
        wx_f=tt.parameter(_uniform_init(rng, input_dim, (input_dim, 4 * h))),
        wh_f=tt.parameter(_uniform_init(rng, h, (h, 4 * h))),
        b_f=tt.parameter(lstm_bias()),
        wx_b=tt.parameter(_uniform_init(rng, input_dim, (input_dim, 4 * h))),
        wh_b=tt.parameter(_uniform_init(rng, h, (h, 4 * h))),
        b_b=tt.parameter(lstm_bias()),
        att_w=tt.parameter(_uniform_init(rng, 2 * h, (2 * h, 2 * h))),
        head_w=tt.parameter(_uniform_init(rng, 4 * h, (4 * h, repr_size))),
        head_b=tt.parameter(np.zeros((1, repr_size))),
    )


def _check_prefix_mask(mask: np.ndarray) -> int:
    """Return the valid-frame count; masks must be True-prefix."""
    if not mask.any():
        raise DegenerateInputError("segment has no valid frames")
    v = int(mask.sum())
    if mask[:v].all() and not mask[v:].any():
        return v
    raise ContractError("frame mask must be a contiguous True prefix")


def lstm_cell(x_t: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor,
              bias: Tensor) -> Tensor:
    """Fused LSTM cell update for a (rows, F) batch of frames.

    Returns [h_new | c_new] stacked on the last axis as one tape entry with
    a hand-derived backward (subject to the same grad checks as the
    composed ops; the scan otherwise dominates the tape). ``bias`` must
    already be tiled to x_t's row count.
    """
    hid = wh.data.shape[0]
    pre = x_t.data @ wx.data + h.data @ wh.data + bias.data
    with np.errstate(over="ignore"):
        i = 1.0 / (1.0 + np.exp(-pre[:, :hid]))
        f = 1.0 / (1.0 + np.exp(-pre[:, hid:2 * hid]))
        o = 1.0 / (1.0 + np.exp(-pre[:, 3 * hid:]))
    g = np.tanh(pre[:, 2 * hid:3 * hid])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    out = tt._result(np.concatenate([o * tc, c_new], axis=1))
    tape = tt._should_record(x_t, h, c, wx, wh, bias)
    if tape is not None:
        def backward(gout, i=i, f=f, g=g, o=o, tc=tc):
            gh, gc_in = gout[:, :hid], gout[:, hid:]
            dc = gc_in + gh * o * (1.0 - tc * tc)
            do = gh * tc
            dpre = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c.data * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            return (dpre @ wx.data.T if x_t.requires_grad else None,
                    dpre @ wh.data.T if h.requires_grad else None,
                    dc * f if c.requires_grad else None,
                    x_t.data.T @ dpre if wx.requires_grad else None,
                    h.data.T @ dpre if wh.requires_grad else None,
                    dpre if bias.requires_grad else None)
        tape._record(out, (x_t, h, c, wx, wh, bias), backward)
    return out


def lstm_step(x_t: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor,
              bias: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM cell update, split back into (h_new, c_new)."""
    hid = wh.data.shape[0]
    hc = lstm_cell(x_t, h, c, wx, wh, bias)
    return tt.slice_cols(hc, 0, hid), tt.slice_cols(hc, hid, 2 * hid)


def bilstm_forward(x: np.ndarray, mask: np.ndarray, params: IstaParams) -> Tensor:
    """Run the BiLSTM over one segment; returns H of shape (T, 2h).

    Row t is the concatenation of the forward state at t and the backward
    state at t; backward rows beyond the valid prefix are zero.
    """
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ContractError(f"segment input must be (T, F) with T >= 1, got {x.shape}")
    if x.shape[1] != params.input_dim:
        raise DimensionError(
            f"segment features {x.shape} vs params input dim {params.input_dim}")
    if mask.shape != (x.shape[0],):
        raise DimensionError(f"mask shape {mask.shape} vs T={x.shape[0]}")
    T = x.shape[0]
    v = _check_prefix_mask(mask)
    h = params.hidden_size
    zero = tt.constant(np.zeros((1, h)))

    hf, cf = zero, zero
    fwd = []
    for t in range(T):
        hf, cf = lstm_step(tt.constant(x[t:t + 1]), hf, cf,
                           params.wx_f, params.wh_f, params.b_f)
        fwd.append(hf)

    hb, cb = zero, zero
    bwd: list[Tensor | None] = [None] * T
    for t in range(v - 1, -1, -1):
        hb, cb = lstm_step(tt.constant(x[t:t + 1]), hb, cb,
                           params.wx_b, params.wh_b, params.b_b)
        bwd[t] = hb
    for t in range(v, T):
        bwd[t] = zero

    rows = [tt.concat(fwd[t], bwd[t]) for t in range(T)]
    return tt.concat_rows(*rows)


def last_valid_state(H: Tensor, mask: np.ndarray) -> Tensor:
    """h_T: the hidden state at the last valid frame, shape (1, 2h)."""
    v = _check_prefix_mask(np.asarray(mask, dtype=bool))
    return tt.gather_rows(H, [v - 1])


def ista_attention(H: Tensor, mask: np.ndarray,
                   att_w: Tensor) -> tuple[Tensor, Tensor]:
    """Bilinear frame attention: alpha_t = softmax(h_T' W h_t) over valid t.

    Returns (alpha (T,), context (2h,)); padded frames get alpha exactly 0
    and the context is the alpha-weighted sum of the rows of H.
    """
    mask = np.asarray(mask, dtype=bool)
    if H.data.ndim != 2 or mask.shape != (H.data.shape[0],):
        raise DimensionError(f"H {H.data.shape} vs mask {mask.shape}")
    d = H.data.shape[1]
    if att_w.data.shape != (d, d):
        raise DimensionError(f"attention matrix {att_w.data.shape} vs H width {d}")
    h_t = last_valid_state(H, mask)
    q = tt.matmul(h_t, att_w)                       # (1, 2h)
    scores = tt.reshape(tt.matmul(H, tt.transpose(q)), (H.data.shape[0],))
    alpha = tt.masked_softmax(scores, mask)
    context = tt.reshape(tt.sum_rows(tt.scale_rows(H, alpha)), (d,))
    return alpha, context


def ista_segment_repr(context: Tensor, h_last: Tensor,
                      head_w: Tensor, head_b: Tensor) -> Tensor:
    """z = tanh(head . [context ; h_T] + bias), shape (repr_size,)."""
    ctx = tt.reshape(context, (1, context.data.size))
    hl = tt.reshape(h_last, (1, h_last.data.size))
    cat = tt.concat(ctx, hl)
    if cat.data.shape[1] != head_w.data.shape[0]:
        raise DimensionError(
            f"head input {cat.data.shape} vs head weights {head_w.data.shape}")
    z = tt.tanh(tt.add(tt.matmul(cat, head_w), head_b))
    return tt.reshape(z, (z.data.size,))


def dropout_rows(t: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout, elementwise; call only in training mode."""
    if not (0.0 <= rate < 1.0):
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return t
    keep = rng.random(t.data.shape) >= rate
    return tt.mul(t, tt.constant(keep / (1.0 - rate)))


def ista_segment(x: np.ndarray, mask: np.ndarray, params: IstaParams,
                 train: bool = False, dropout: float = 0.3,
                 rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Full ISTA for one segment: BiLSTM, dropout (train only), attention,
    head. Returns (z (repr_size,), alpha (T,))."""
    H = bilstm_forward(x, mask, params)
    if train and dropout > 0.0:
        if rng is None:
            raise ContractError("training-mode ISTA needs an rng for dropout")
        H = dropout_rows(H, dropout, rng)
    h_last = last_valid_state(H, mask)
    alpha, context = ista_attention(H, mask, params.att_w)
    z = ista_segment_repr(context, tt.reshape(h_last, (h_last.data.size,)),
                          params.head_w, params.head_b)
    return z, alpha


def segment_repr_summary(z: Tensor, alpha: Tensor, mask: np.ndarray) -> SegmentRepr:
    """Package the per-segment outputs for reporting (valid frames only)."""
    mask = np.asarray(mask, dtype=bool)
    return SegmentRepr(z=z.data.copy(), alpha=alpha.data[mask].copy())
