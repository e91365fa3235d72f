"""ISTA stack versus loop-form scalar oracles: LSTM recurrence, bilinear
attention, the representation head, plus padding invariance and gradients."""

import numpy as np
import pytest

from dstcnet import tensor as T
from dstcnet.errors import ContractError, DegenerateInputError, DimensionError
from dstcnet.ista import (IstaParams, bilstm_forward, init_ista_params,
                          ista_attention, ista_segment, ista_segment_repr,
                          last_valid_state, segment_repr_summary)


# ---------------------------------------------------------------------------
# oracles

def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_scan_oracle(xs, wx, wh, b):
    """Plain-loop LSTM over a list of frame vectors; returns h at each step."""
    hid = wh.shape[0]
    h = np.zeros(hid)
    c = np.zeros(hid)
    out = []
    for x in xs:
        z = x @ wx + h @ wh + b[0]
        i, f = sig(z[:hid]), sig(z[hid:2 * hid])
        g, o = np.tanh(z[2 * hid:3 * hid]), sig(z[3 * hid:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h.copy())
    return out


def bilstm_oracle(x, mask, p: IstaParams):
    T_, _ = x.shape
    v = int(mask.sum())
    fwd = lstm_scan_oracle([x[t] for t in range(T_)],
                           p.wx_f.data, p.wh_f.data, p.b_f.data)
    bwd_states = lstm_scan_oracle([x[t] for t in range(v - 1, -1, -1)],
                                  p.wx_b.data, p.wh_b.data, p.b_b.data)
    hid = p.hidden_size
    H = np.zeros((T_, 2 * hid))
    for t in range(T_):
        H[t, :hid] = fwd[t]
        if t < v:
            H[t, hid:] = bwd_states[v - 1 - t]
    return H


def attention_oracle(H, mask, W):
    v = int(mask.sum())
    hT = H[v - 1]
    scores = np.array([hT @ W @ H[t] for t in range(H.shape[0])])
    e = np.where(mask, np.exp(scores - scores[mask].max()), 0.0)
    alpha = e / e.sum()
    context = alpha @ H
    return alpha, context


def params_for(rng, f=3, h=4, d=5):
    return init_ista_params(rng, f, h, d)


# ---------------------------------------------------------------------------
# BiLSTM

def test_bilstm_zero_input_zero_params():
    p = params_for(np.random.default_rng(0))
    for t in p.tensors():
        t.data = np.zeros_like(t.data)
    x = np.zeros((4, 3))
    H = bilstm_forward(x, np.ones(4, dtype=bool), p)
    assert np.all(H.data == 0.0)


def test_bilstm_single_frame_concat_structure():
    rng = np.random.default_rng(1)
    p = params_for(rng)
    x = rng.standard_normal((1, 3))
    H = bilstm_forward(x, np.ones(1, dtype=bool), p).data
    fwd = lstm_scan_oracle([x[0]], p.wx_f.data, p.wh_f.data, p.b_f.data)[0]
    bwd = lstm_scan_oracle([x[0]], p.wx_b.data, p.wh_b.data, p.b_b.data)[0]
    assert np.abs(H[0] - np.concatenate([fwd, bwd])).max() < 1e-12


def test_bilstm_matches_loop_oracle():
    rng = np.random.default_rng(2)
    p = params_for(rng, f=2, h=3)
    x = rng.standard_normal((3, 2))
    mask = np.ones(3, dtype=bool)
    H = bilstm_forward(x, mask, p).data
    assert np.abs(H - bilstm_oracle(x, mask, p)).max() < 1e-12


def test_bilstm_with_padding_matches_oracle():
    rng = np.random.default_rng(3)
    p = params_for(rng, f=2, h=3)
    x = rng.standard_normal((5, 2))
    mask = np.array([True, True, True, False, False])
    x[~mask] = 0.0
    H = bilstm_forward(x, mask, p).data
    assert np.abs(H - bilstm_oracle(x, mask, p)).max() < 1e-12
    # backward half of padded rows is exactly zero
    assert np.all(H[3:, 3:] == 0.0)


def test_bilstm_contract_errors():
    p = params_for(np.random.default_rng(4))
    with pytest.raises(ContractError):
        bilstm_forward(np.zeros((0, 3)), np.zeros(0, dtype=bool), p)
    with pytest.raises(DegenerateInputError):
        bilstm_forward(np.zeros((2, 3)), np.zeros(2, dtype=bool), p)
    with pytest.raises(DimensionError):
        bilstm_forward(np.zeros((2, 7)), np.ones(2, dtype=bool), p)


# ---------------------------------------------------------------------------
# attention

def test_attention_single_frame():
    rng = np.random.default_rng(5)
    p = params_for(rng)
    H = T.constant(rng.standard_normal((1, 8)))
    alpha, context = ista_attention(H, np.ones(1, dtype=bool), p.att_w)
    assert np.array_equal(alpha.data, [1.0])
    assert np.abs(context.data - H.data[0]).max() < 1e-15


def test_attention_zero_w_is_uniform_mean():
    rng = np.random.default_rng(6)
    H = T.constant(rng.standard_normal((4, 8)))
    w = T.parameter(np.zeros((8, 8)))
    alpha, context = ista_attention(H, np.ones(4, dtype=bool), w)
    assert np.abs(alpha.data - 0.25).max() < 1e-15
    assert np.abs(context.data - H.data.mean(axis=0)).max() < 1e-12


def test_attention_matches_bilinear_oracle_with_padding():
    rng = np.random.default_rng(7)
    H_np = rng.standard_normal((4, 6))
    mask = np.array([True, True, True, False])
    w = rng.standard_normal((6, 6))
    alpha, context = ista_attention(T.constant(H_np), mask, T.constant(w))
    a_ref, c_ref = attention_oracle(H_np, mask, w)
    assert alpha.data[3] == 0.0
    assert np.abs(alpha.data - a_ref).max() < 1e-12
    assert np.abs(context.data - c_ref).max() < 1e-12


def test_attention_all_masked_degenerate():
    rng = np.random.default_rng(8)
    with pytest.raises(DegenerateInputError):
        ista_attention(T.constant(rng.standard_normal((3, 4))),
                       np.zeros(3, dtype=bool),
                       T.constant(rng.standard_normal((4, 4))))


def test_attention_selectivity_grows_with_row_scale():
    """With W = I, scaling one row's magnitude drives its weight to 1."""
    rng = np.random.default_rng(9)
    base = rng.standard_normal((5, 6)) * 0.5
    base[4] = np.abs(rng.standard_normal(6)) + 0.5  # last-valid row: the query
    w = T.constant(np.eye(6))
    mask = np.ones(5, dtype=bool)
    weights = []
    for factor in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
        H = base.copy()
        H[1] = np.abs(base[4]) * factor  # aligned with the query direction
        alpha, _ = ista_attention(T.constant(H), mask, w)
        weights.append(alpha.data[1])
    assert all(b >= a for a, b in zip(weights, weights[1:]))  # saturates at 1
    assert weights[1] > weights[0]
    assert weights[-1] > 0.999


# ---------------------------------------------------------------------------
# head

def test_segment_repr_zero_head_gives_zero():
    ctx = T.constant(np.ones(6))
    h_last = T.constant(np.ones(6))
    z = ista_segment_repr(ctx, h_last, T.parameter(np.zeros((12, 5))),
                          T.parameter(np.zeros((1, 5))))
    assert np.all(z.data == 0.0)


def test_segment_repr_selects_coordinate():
    head_w = np.zeros((8, 3))
    head_w[5, 2] = 1.0  # route input coordinate 5 to output 2
    ctx = T.constant(np.array([0.0, 0.0, 0.0, 0.0]))
    h_last = T.constant(np.array([0.0, 0.7, 0.0, 0.0]))
    z = ista_segment_repr(ctx, h_last, T.constant(head_w),
                          T.constant(np.zeros((1, 3))))
    assert abs(z.data[2] - np.tanh(0.7)) < 1e-15
    assert np.all(z.data[:2] == 0.0)


def test_segment_repr_matches_composition():
    rng = np.random.default_rng(10)
    ctx = rng.standard_normal(6)
    h_last = rng.standard_normal(6)
    w = rng.standard_normal((12, 4))
    b = rng.standard_normal((1, 4))
    z = ista_segment_repr(T.constant(ctx), T.constant(h_last),
                          T.constant(w), T.constant(b))
    ref = np.tanh(np.concatenate([ctx, h_last]) @ w + b[0])
    assert np.abs(z.data - ref).max() < 1e-12


# ---------------------------------------------------------------------------
# full stack properties

def test_alpha_is_probability_vector():
    rng = np.random.default_rng(11)
    p = params_for(rng, f=3, h=4)
    for _ in range(20):
        t_frames = int(rng.integers(1, 7))
        v = int(rng.integers(1, t_frames + 1))
        x = rng.standard_normal((t_frames, 3))
        mask = np.arange(t_frames) < v
        x[~mask] = 0.0
        z, alpha = ista_segment(x, mask, p)
        assert np.all(alpha.data >= 0.0)
        assert abs(alpha.data[mask].sum() - 1.0) < 1e-9
        assert np.all(alpha.data[~mask] == 0.0)
        summary = segment_repr_summary(z, alpha, mask)
        assert summary.alpha.shape == (v,)


def test_padding_invariance_of_segment_repr():
    rng = np.random.default_rng(12)
    p = params_for(rng, f=3, h=4)
    x = rng.standard_normal((4, 3))
    mask = np.ones(4, dtype=bool)
    z_base, alpha_base = ista_segment(x, mask, p)
    x_pad = np.concatenate([x, np.zeros((3, 3))], axis=0)
    mask_pad = np.concatenate([mask, np.zeros(3, dtype=bool)])
    z_pad, alpha_pad = ista_segment(x_pad, mask_pad, p)
    assert np.abs(alpha_pad.data[:4] - alpha_base.data).max() == 0.0
    assert np.abs(z_pad.data - z_base.data).max() < 1e-9


def test_h_last_anchored_at_last_valid_frame():
    rng = np.random.default_rng(13)
    p = params_for(rng, f=2, h=3)
    x = rng.standard_normal((5, 2))
    mask = np.array([True, True, True, False, False])
    H = bilstm_forward(x, mask, p)
    hl = last_valid_state(H, mask)
    assert np.array_equal(hl.data[0], H.data[2])


def test_fused_lstm_cell_grad_check():
    rng = np.random.default_rng(40)
    f, h = 3, 4
    wx = T.parameter(rng.standard_normal((f, 4 * h)) * 0.7)
    wh = T.parameter(rng.standard_normal((h, 4 * h)) * 0.7)
    b = T.parameter(rng.standard_normal((1, 4 * h)) * 0.7)
    x1 = T.constant(rng.standard_normal((2, f)))
    x2 = T.constant(rng.standard_normal((2, f)))

    def loss(ps):
        from dstcnet.ista import lstm_step
        zero = T.constant(np.zeros((2, h)))
        bias = T.repeat_rows(ps[2], 2)
        h1, c1 = lstm_step(x1, zero, zero, ps[0], ps[1], bias)
        h2, c2 = lstm_step(x2, h1, c1, ps[0], ps[1], bias)
        both = T.concat(h2, c2)
        return T.sum_all(T.mul(both, both))

    assert T.grad_check(loss, [wx, wh, b], eps=1e-5) < 1e-5


def test_ista_stack_grad_check():
    rng = np.random.default_rng(14)
    p = params_for(rng, f=4, h=3, d=4)
    x = rng.standard_normal((5, 4))
    mask = np.array([True, True, True, True, False])
    x[~mask] = 0.0

    def loss(_params):
        z, _ = ista_segment(x, mask, p)
        return T.sum_all(T.mul(z, z))

    assert T.grad_check(loss, p.tensors(), eps=1e-5) < 1e-5


def test_dropout_requires_rng_and_is_seeded():
    rng = np.random.default_rng(15)
    p = params_for(rng, f=3, h=4)
    x = rng.standard_normal((4, 3))
    mask = np.ones(4, dtype=bool)
    with pytest.raises(ContractError):
        ista_segment(x, mask, p, train=True, dropout=0.3, rng=None)
    z1, _ = ista_segment(x, mask, p, train=True, dropout=0.3,
                         rng=np.random.default_rng(99))
    z2, _ = ista_segment(x, mask, p, train=True, dropout=0.3,
                         rng=np.random.default_rng(99))
    assert np.array_equal(z1.data, z2.data)
    z3, _ = ista_segment(x, mask, p)  # eval mode: no dropout applied
    z4, _ = ista_segment(x, mask, p)
    assert np.array_equal(z3.data, z4.data)
