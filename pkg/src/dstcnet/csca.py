"""Cross-segment context attention and the final classifier.

Segment representations are first mixed with their neighbours by a width-3
convolution along the segment axis (zero padding keeps the segment count),
then scored by a small MLP whose softmax yields one weight per segment.
The global vector G is the weighted sum of the convolved representations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class ClassifierParams:
    """The map from a global feature vector to two logits: optional tanh
    hidden layers (empty in the canonical layout) before the final affine."""

    w: Tensor  # (d_last, 2)
    b: Tensor  # (1, 2)
    hidden: list[tuple[Tensor, Tensor]] = field(default_factory=list)

    def tensors(self) -> list[Tensor]:
        flat = [t for pair in self.hidden for t in pair]
        return flat + [self.w, self.b]


@dataclass
class CscaParams:
    """Width-3 segment convolution, the scoring MLP, and the classifier.

    Canonical layout: the two hidden layers sit in the scoring head
    (d -> d/2 -> d/4 -> 1) and the classifier is one affine. The
    non-canonical "post_agg" layout (see ``init_csca_params``) moves them
    after aggregation instead: scoring is a bare linear map to one scalar
    and the classifier becomes d -> d/2 -> d/4 -> 2.
    """

    conv_prev: Tensor   # (d, d) tap applied to segment m-1
    conv_self: Tensor   # (d, d) tap applied to segment m
    conv_next: Tensor   # (d, d) tap applied to segment m+1
    conv_b: Tensor      # (1, d)
    score1_w: Tensor | None  # (d, d2)
    score1_b: Tensor | None
    score2_w: Tensor | None  # (d2, d4)
    score2_b: Tensor | None
    score3_w: Tensor    # (d4, 1) or (d, 1); no bias: a pre-softmax constant
                        # is unidentifiable and would never receive gradient
    classifier: ClassifierParams

    @property
    def width(self) -> int:
        return self.conv_self.data.shape[0]

    def tensors(self) -> list[Tensor]:
        scoring = [t for t in (self.score1_w, self.score1_b, self.score2_w,
                               self.score2_b, self.score3_w) if t is not None]
        return [self.conv_prev, self.conv_self, self.conv_next, self.conv_b,
                *scoring] + self.classifier.tensors()


@dataclass
class RecordingOutput:
    """Classifier verdict for one recording."""

    logits: Tensor        # (1, 2), still attached to the tape
    probs: np.ndarray     # (2,), softmax of the logits
    predicted: int        # argmax, ties resolved to label 0
    beta: np.ndarray | None = None  # segment attention weights
    g: np.ndarray | None = None     # global feature vector


def _uniform_init(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_classifier_params(rng: np.random.Generator, in_dim: int,
                           hidden_dims: tuple[int, ...] = ()) -> ClassifierParams:
    hidden = []
    d = in_dim
    for h in hidden_dims:
        hidden.append((tt.parameter(_uniform_init(rng, d, (d, h))),
                       tt.parameter(np.zeros((1, h)))))
        d = h
    return ClassifierParams(
        w=tt.parameter(_uniform_init(rng, d, (d, 2))),
        b=tt.parameter(np.zeros((1, 2))),
        hidden=hidden,
    )


def init_csca_params(rng: np.random.Generator, width: int,
                     post_agg: bool = False) -> CscaParams:
    """Hidden sizes scale as width/2 and width/4 (64 and 32 at the default
    128-wide representation). ``post_agg`` selects the non-canonical
    layout that applies those layers to the aggregated vector instead of
    the per-segment scores."""
    d2 = max(1, width // 2)
    d4 = max(1, width // 4)
    conv = dict(
        conv_prev=tt.parameter(_uniform_init(rng, 3 * width, (width, width))),
        conv_self=tt.parameter(_uniform_init(rng, 3 * width, (width, width))),
        conv_next=tt.parameter(_uniform_init(rng, 3 * width, (width, width))),
        conv_b=tt.parameter(np.zeros((1, width))),
    )
    if post_agg:
        return CscaParams(
            **conv,
            score1_w=None, score1_b=None, score2_w=None, score2_b=None,
            score3_w=tt.parameter(_uniform_init(rng, width, (width, 1))),
            classifier=init_classifier_params(rng, width, (d2, d4)),
        )
    return CscaParams(
        **conv,
        score1_w=tt.parameter(_uniform_init(rng, width, (width, d2))),
        score1_b=tt.parameter(np.zeros((1, d2))),
        score2_w=tt.parameter(_uniform_init(rng, d2, (d2, d4))),
        score2_b=tt.parameter(np.zeros((1, d4))),
        score3_w=tt.parameter(_uniform_init(rng, d4, (d4, 1))),
        classifier=init_classifier_params(rng, width),
    )


def _tile_bias(b: Tensor, rows: int) -> Tensor:
    return b if rows == 1 else tt.repeat_rows(b, rows)


def context_conv(Z: Tensor, params: CscaParams) -> Tensor:
    """Width-3 convolution over the segment axis with zero padding, + tanh.

    For M = 1 the window is (0, z_1, 0). Output keeps shape (M, d).
    """
    if Z.data.ndim != 2 or Z.data.shape[0] < 1:
        raise ContractError(f"need at least one segment, got shape {Z.data.shape}")
    if Z.data.shape[1] != params.width:
        raise DimensionError(
            f"segment reps {Z.data.shape} vs conv width {params.width}")
    m = Z.data.shape[0]
    prev_idx = np.arange(-1, m - 1, dtype=np.intp)
    next_idx = np.concatenate([np.arange(1, m, dtype=np.intp), [-1]])
    lin = tt.add(
        tt.add(tt.matmul(tt.gather_rows(Z, prev_idx, assume_unique=True),
                         params.conv_prev),
               tt.matmul(Z, params.conv_self)),
        tt.add(tt.matmul(tt.gather_rows(Z, next_idx, assume_unique=True),
                         params.conv_next),
               _tile_bias(params.conv_b, m)),
    )
    return tt.tanh(lin)


def csca_attention(Zc: Tensor, params: CscaParams) -> Tensor:
    """Per-segment scalar scores via the scoring head, softmaxed to beta."""
    m = Zc.data.shape[0]
    s = Zc
    if params.score1_w is not None:
        s = tt.tanh(tt.add(tt.matmul(s, params.score1_w),
                           _tile_bias(params.score1_b, m)))
        s = tt.tanh(tt.add(tt.matmul(s, params.score2_w),
                           _tile_bias(params.score2_b, m)))
    s = tt.matmul(s, params.score3_w)
    return tt.softmax(tt.reshape(s, (m,)))


def aggregate(Zc: Tensor, beta: Tensor) -> Tensor:
    """G = sum_m beta_m * z'_m; a convex combination of the rows of Zc."""
    if beta.data.ndim != 1 or beta.data.shape[0] != Zc.data.shape[0]:
        raise DimensionError(
            f"beta length {beta.data.shape} vs {Zc.data.shape[0]} segments")
    g = tt.sum_rows(tt.scale_rows(Zc, beta))
    return tt.reshape(g, (Zc.data.shape[1],))


def _stable_softmax_1d(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def classify(G: Tensor, params: ClassifierParams,
             beta: np.ndarray | None = None) -> RecordingOutput:
    """Map to two logits; prediction is argmax with ties going to 0."""
    d = G.data.size
    x = tt.reshape(G, (1, d))
    for hw, hb in params.hidden:
        x = tt.tanh(tt.add(tt.matmul(x, hw), hb))
    if params.w.data.shape[0] != x.data.shape[1]:
        raise DimensionError(
            f"classifier expects {params.w.data.shape[0]} features, "
            f"got {x.data.shape[1]}")
    logits = tt.add(tt.matmul(x, params.w), params.b)
    probs = _stable_softmax_1d(logits.data[0])
    predicted = 1 if probs[1] > probs[0] else 0
    return RecordingOutput(logits=logits, probs=probs, predicted=predicted,
                           beta=None if beta is None else np.asarray(beta),
                           g=G.data.copy())
