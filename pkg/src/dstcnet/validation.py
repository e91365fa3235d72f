"""Input coercion and validation helpers for the estimator facade.

The estimator accepts recordings in a few natural shapes; everything is
normalized here into (segments, masks) float64/bool pairs so the model and
trainer only ever see one representation.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .feature_store import FeatureTensor, select_layer
from .trainer import Recording


def coerce_recording(item, layer: int, index: int) -> Recording:
    """Accept a FeatureTensor, a (segments, valid_frames) pair, or a bare
    (M, T, F) array (all frames valid)."""
    if isinstance(item, FeatureTensor):
        seqs = select_layer(item, layer)
        segments = np.stack([seq for seq, _ in seqs])
        masks = np.stack([mask for _, mask in seqs])
        return Recording(item.recording_id or f"x{index}", item.label,
                         segments, masks)
    if isinstance(item, tuple) and len(item) == 2:
        segments, valid = item
        segments = np.asarray(segments, dtype=np.float64)
        if segments.ndim != 3:
            raise ContractError(
                f"recording {index}: segments must be (M, T, F), "
                f"got shape {segments.shape}")
        valid = np.asarray(valid, dtype=np.int64)
        m, t, _ = segments.shape
        if valid.shape != (m,):
            raise ContractError(
                f"recording {index}: valid_frames must have {m} entries, "
                f"got shape {valid.shape}")
        if (valid < 1).any() or (valid > t).any():
            raise ContractError(
                f"recording {index}: valid_frames entries must lie in [1, {t}]")
        masks = np.arange(t)[None, :] < valid[:, None]
        return Recording(f"x{index}", None, segments, masks)
    segments = np.asarray(item, dtype=np.float64)
    if segments.ndim != 3:
        raise ContractError(
            f"recording {index}: expected FeatureTensor, (segments, "
            f"valid_frames), or a 3-D array; got shape {segments.shape}")
    masks = np.ones(segments.shape[:2], dtype=bool)
    return Recording(f"x{index}", None, segments, masks)


def coerce_dataset(X, layer: int) -> list[Recording]:
    if len(X) == 0:
        raise ContractError("X must contain at least one recording")
    recs = [coerce_recording(item, layer, i) for i, item in enumerate(X)]
    widths = {r.segments.shape[2] for r in recs}
    if len(widths) != 1:
        raise ContractError(f"recordings disagree on feature width: {sorted(widths)}")
    return recs


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ContractError(f"y must have shape ({n},), got {y.shape}")
    labels = set(np.unique(y).tolist())
    if not labels <= {0, 1}:
        raise ContractError(f"labels must be 0 (HC) or 1 (AD), got {sorted(labels)}")
    return y.astype(int)
