"""Network assembly: wires the two attention stages (or their mean-pool
ablations) into a per-recording classifier.

The hot path batches the BiLSTM and frame attention over every segment of
every recording that shares a frame count, which keeps the tape short; the
cross-segment stage runs per recording because segment counts vary. A
per-segment reference path (straight composition of the ista/csca ops)
exists for verification and produces the same numbers in eval mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import csca as csca_ops
from . import ista as ista_ops
from . import tensor as tt
from .csca import ClassifierParams, CscaParams, RecordingOutput
from .errors import ContractError, DimensionError
from .ista import IstaParams
from .tensor import Tensor

ABLATIONS = ("full", "ista_only", "csca_only", "baseline")


HEAD_LAYOUTS = ("scoring_mlp", "post_agg")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_size: int = 128
    repr_size: int = 128
    ablation: str = "full"
    dropout: float = 0.3
    # "scoring_mlp" is canonical (hidden layers score the segments);
    # "post_agg" is the non-canonical alternative reading that applies
    # them to the aggregated vector instead
    head_layout: str = "scoring_mlp"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ContractError(f"ablation must be one of {ABLATIONS}, "
                                f"got {self.ablation!r}")
        if self.head_layout not in HEAD_LAYOUTS:
            raise ContractError(f"head_layout must be one of {HEAD_LAYOUTS}, "
                                f"got {self.head_layout!r}")
        if min(self.input_dim, self.hidden_size, self.repr_size) < 1:
            raise ContractError("model dimensions must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")


def _validate_recording(segments: np.ndarray, masks: np.ndarray, input_dim: int):
    segments = np.asarray(segments, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if segments.ndim != 3 or segments.shape[0] < 1:
        raise ContractError(
            f"recording must be (segments, frames, features), got {segments.shape}")
    if segments.shape[2] != input_dim:
        raise DimensionError(
            f"recording features {segments.shape} vs model input dim {input_dim}")
    if masks.shape != segments.shape[:2]:
        raise DimensionError(f"masks {masks.shape} vs segments {segments.shape[:2]}")
    for m in masks:
        ista_ops._check_prefix_mask(m)
    return segments, masks


class DstcNet:
    """The classifier network for one ablation configuration."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.use_ista = config.ablation in ("full", "ista_only")
        self.use_csca = config.ablation in ("full", "csca_only")
        stage1_dim = config.repr_size if self.use_ista else config.input_dim
        self.stage1_dim = stage1_dim
        self.ista: IstaParams | None = None
        self.csca: CscaParams | None = None
        if self.use_ista:
            self.ista = ista_ops.init_ista_params(
                rng, config.input_dim, config.hidden_size, config.repr_size)
        if self.use_csca:
            self.csca = csca_ops.init_csca_params(
                rng, stage1_dim, post_agg=config.head_layout == "post_agg")
            self.classifier: ClassifierParams = self.csca.classifier
        else:
            self.classifier = csca_ops.init_classifier_params(rng, stage1_dim)

    # -- parameter plumbing --------------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        if self.ista is not None:
            for field in ("wx_f", "wh_f", "b_f", "wx_b", "wh_b", "b_b",
                          "att_w", "head_w", "head_b"):
                named[f"ista.{field}"] = getattr(self.ista, field)
        if self.csca is not None:
            for field in ("conv_prev", "conv_self", "conv_next", "conv_b",
                          "score1_w", "score1_b", "score2_w", "score2_b",
                          "score3_w"):
                value = getattr(self.csca, field)
                if value is not None:
                    named[f"csca.{field}"] = value
        for i, (hw, hb) in enumerate(self.classifier.hidden):
            named[f"classifier.h{i}_w"] = hw
            named[f"classifier.h{i}_b"] = hb
        named["classifier.w"] = self.classifier.w
        named["classifier.b"] = self.classifier.b
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def restore(self, snap: list[np.ndarray]) -> None:
        for p, d in zip(self.parameters(), snap):
            p.data = d.copy()

    def save(self, path) -> None:
        cfg = json.dumps(self.config.__dict__, sort_keys=True)
        arrays = {k: v.data for k, v in self.named_parameters().items()}
        np.savez(path, __config__=np.frombuffer(cfg.encode(), dtype=np.uint8),
                 **arrays)

    @classmethod
    def load(cls, path) -> "DstcNet":
        with np.load(path) as z:
            cfg = json.loads(bytes(z["__config__"]).decode())
            model = cls(ModelConfig(**cfg), np.random.default_rng(0))
            for name, p in model.named_parameters().items():
                p.data = np.asarray(z[name], dtype=np.float64)
        return model

    # -- stage 1: segment representations -------------------------------------

    def _ista_batch(self, x: np.ndarray, masks: np.ndarray,
                    train: bool, rng) -> Tensor:
        """Batched ISTA over S segments sharing a frame count T.

        Returns Z of shape (S, repr_size). Equivalent to running
        :func:`dstcnet.ista.ista_segment` on each segment separately.
        """
        p = self.ista
        S, T, _ = x.shape
        valid = masks.sum(axis=1).astype(np.intp)
        hid = p.hidden_size
        zero = tt.constant(np.zeros((S, hid)))

        bias_f = p.b_f if S == 1 else tt.repeat_rows(p.b_f, S)
        bias_b = p.b_b if S == 1 else tt.repeat_rows(p.b_b, S)

        # forward direction over all T frames, t-major stack
        h, c = zero, zero
        fwd_rows = []
        for t in range(T):
            h, c = ista_ops.lstm_step(tt.constant(x[:, t, :]), h, c,
                                      p.wx_f, p.wh_f, bias_f)
            fwd_rows.append(h)
        fwd_tmaj = tt.concat_rows(*fwd_rows)          # (T*S, h), row t*S+s

        # backward direction: reverse-align each segment's valid prefix so a
        # single forward-style scan covers every segment, then un-reverse
        x_rev = np.zeros_like(x)
        for s in range(S):
            v = valid[s]
            x_rev[s, :v] = x[s, :v][::-1]
        h, c = zero, zero
        bwd_rows = []
        for r in range(T):
            h, c = ista_ops.lstm_step(tt.constant(x_rev[:, r, :]), h, c,
                                      p.wx_b, p.wh_b, bias_b)
            bwd_rows.append(h)
        bwd_tmaj = tt.concat_rows(*bwd_rows)

        s_idx = np.repeat(np.arange(S, dtype=np.intp), T)
        t_idx = np.tile(np.arange(T, dtype=np.intp), S)
        fwd_map = t_idx * S + s_idx                   # (s, t) -> row of fwd_tmaj
        r = valid[s_idx] - 1 - t_idx                  # backward offset, <0 on pads
        bwd_map = np.where(r >= 0, r * S + s_idx, -1)
        H = tt.concat(tt.gather_rows(fwd_tmaj, fwd_map, assume_unique=True),
                      tt.gather_rows(bwd_tmaj, bwd_map, assume_unique=True))

        if train and self.config.dropout > 0.0:
            keep = rng.random(H.data.shape) >= self.config.dropout
            H = tt.mul(H, tt.constant(keep / (1.0 - self.config.dropout)))

        h_last = tt.gather_rows(H, np.arange(S, dtype=np.intp) * T + valid - 1,
                                assume_unique=True)
        q = tt.matmul(h_last, p.att_w)                # (S, 2h)
        q_rep = tt.repeat_rows(q, T)                  # (S*T, 2h)
        scores = tt.reshape(tt.row_sums(tt.mul(q_rep, H)), (S, T))
        alpha = tt.masked_softmax_rows(scores, masks)
        weighted = tt.scale_rows(H, tt.reshape(alpha, (S * T, 1)))
        context = tt.block_sum_rows(weighted, T)      # (S, 2h)

        cat = tt.concat(context, h_last)              # (S, 4h)
        bias = tt.repeat_rows(p.head_b, S) if S > 1 else p.head_b
        return tt.tanh(tt.add(tt.matmul(cat, p.head_w), bias))

    @staticmethod
    def _mean_pool_segments(x: np.ndarray, masks: np.ndarray) -> Tensor:
        """Per-segment mean over valid frames; a constant (no gradients)."""
        rows = [x[s, masks[s]].mean(axis=0) for s in range(x.shape[0])]
        return tt.constant(np.stack(rows))

    # -- stage 2: recording-level verdict --------------------------------------

    def _classify_recording(self, z: Tensor) -> RecordingOutput:
        m = z.data.shape[0]
        if self.use_csca:
            zc = csca_ops.context_conv(z, self.csca)
            beta = csca_ops.csca_attention(zc, self.csca)
            g = csca_ops.aggregate(zc, beta)
            return csca_ops.classify(g, self.classifier, beta=beta.data)
        pooled = tt.reshape(tt.scale(tt.sum_rows(z), 1.0 / m), (self.stage1_dim,))
        return csca_ops.classify(pooled, self.classifier)

    def forward(self, recordings, train: bool = False,
                rng: np.random.Generator | None = None
                ) -> tuple[Tensor, list[RecordingOutput]]:
        """Run the network over a list of (segments, masks) recordings.

        Returns stacked logits (R, 2) plus one RecordingOutput per input,
        in input order. Training mode requires an rng (dropout).
        """
        if train and self.config.dropout > 0.0 and rng is None:
            raise ContractError("training-mode forward needs an rng for dropout")
        recs = [_validate_recording(s, m, self.config.input_dim)
                for s, m in recordings]
        if not recs:
            raise ContractError("forward needs at least one recording")

        z_per_recording: list[Tensor | None] = [None] * len(recs)
        if self.use_ista:
            # group by frame count so each group batches into one scan
            groups: dict[int, list[int]] = {}
            for i, (segs, _) in enumerate(recs):
                groups.setdefault(segs.shape[1], []).append(i)
            for t_frames, members in groups.items():
                x = np.concatenate([recs[i][0] for i in members], axis=0)
                masks = np.concatenate([recs[i][1] for i in members], axis=0)
                z_all = self._ista_batch(x, masks, train, rng)
                off = 0
                for i in members:
                    m = recs[i][0].shape[0]
                    z_per_recording[i] = tt.slice_rows(z_all, off, off + m) \
                        if len(members) > 1 else z_all
                    off += m
        else:
            for i, (segs, masks) in enumerate(recs):
                z_per_recording[i] = self._mean_pool_segments(segs, masks)

        outputs = [self._classify_recording(z) for z in z_per_recording]
        logits = tt.concat_rows(*[o.logits for o in outputs]) \
            if len(outputs) > 1 else outputs[0].logits
        return logits, outputs

    def forward_single_reference(self, segments: np.ndarray,
                                 masks: np.ndarray) -> RecordingOutput:
        """Eval-mode forward for one recording via the per-segment ops;
        used to cross-check the batched path."""
        segments, masks = _validate_recording(segments, masks,
                                              self.config.input_dim)
        if self.use_ista:
            zs = [ista_ops.ista_segment(segments[s], masks[s], self.ista)[0]
                  for s in range(segments.shape[0])]
            z = tt.concat_rows(*[tt.reshape(zz, (1, zz.data.size)) for zz in zs])
        else:
            z = self._mean_pool_segments(segments, masks)
        return self._classify_recording(z)
