"""Fixed-length, partially overlapping segmentation of long recordings.

Planning works purely on durations; slicing converts to integer sample
counts at the audio rate (round-half-up) so boundaries never drift across
segments. The tail segment is clipped at the end of the recording and
zero-padded back to the nominal length rather than discarded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateInputError, FormatError, RangeError

DEFAULT_OVERLAP = 0.10


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class SegmentSpec:
    """One planned segment of a recording (all times in seconds)."""

    index: int
    start_s: float
    end_s: float
    pad_s: float
    nominal_len_s: float

    @property
    def valid_len_s(self) -> float:
        return self.end_s - self.start_s


def plan_segments(total_len_s: float, seg_len_s: float,
                  overlap_frac: float = DEFAULT_OVERLAP) -> list[SegmentSpec]:
    """Plan segment boundaries covering ``[0, total_len_s)``.

    Segments start at 0, hop, 2*hop, ... with hop = seg_len * (1 - overlap).
    The first segment whose span reaches the end of the recording is the
    last one: it is clipped there and padded back to ``seg_len_s``. A
    recording shorter than one segment yields a single padded segment.
    """
    if total_len_s <= 0:
        raise ContractError(f"total_len_s must be > 0, got {total_len_s}")
    if seg_len_s <= 0:
        raise ContractError(f"seg_len_s must be > 0, got {seg_len_s}")
    if not (0.0 <= overlap_frac < 0.5):
        raise ContractError(f"overlap_frac must be in [0, 0.5), got {overlap_frac}")

    hop = seg_len_s * (1.0 - overlap_frac)
    specs: list[SegmentSpec] = []
    i = 0
    while True:
        start = i * hop
        if start + seg_len_s >= total_len_s:
            end = min(start + seg_len_s, total_len_s)
            specs.append(SegmentSpec(i, start, end, seg_len_s - (end - start), seg_len_s))
            return specs
        specs.append(SegmentSpec(i, start, start + seg_len_s, 0.0, seg_len_s))
        i += 1


def slice_segment(samples: np.ndarray, rate_hz: int,
                  spec: SegmentSpec) -> tuple[np.ndarray, int]:
    """Cut one planned segment out of a sample vector.

    Returns a vector of exactly ``seg_len * rate`` samples (zero-padded at
    the tail) and the number of valid (real-audio) samples in it.
    """
    if rate_hz <= 0:
        raise ContractError(f"rate_hz must be positive, got {rate_hz}")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ContractError(f"samples must be 1-D, got shape {samples.shape}")
    total_s = len(samples) / rate_hz
    if spec.start_s < 0 or spec.end_s > total_s + 0.5 / rate_hz:
        raise RangeError(
            f"segment [{spec.start_s}, {spec.end_s}]s outside recording of {total_s}s")

    out_len = _round_half_up(spec.nominal_len_s * rate_hz)
    start = _round_half_up(spec.start_s * rate_hz)
    valid = _round_half_up((spec.end_s - spec.start_s) * rate_hz)
    valid = min(valid, len(samples) - start, out_len)
    out = np.zeros(out_len, dtype=np.float64)
    out[:valid] = samples[start:start + valid]
    return out, valid


def frame_mask(spec: SegmentSpec, frames_per_second: float,
               total_frames: int) -> np.ndarray:
    """Boolean mask marking which encoder frames of a segment hold real audio.

    The first ``round(valid_seconds * fps)`` entries are True. Raises if the
    valid span rounds to zero frames.
    """
    if total_frames <= 0 or frames_per_second <= 0:
        raise ContractError("total_frames and frames_per_second must be positive")
    expected = spec.nominal_len_s * frames_per_second
    if abs(total_frames - expected) > 1.0 + 1e-9:
        raise ContractError(
            f"total_frames {total_frames} inconsistent with "
            f"{spec.nominal_len_s}s x {frames_per_second}fps (~{expected:.2f})")
    valid = min(_round_half_up(spec.valid_len_s * frames_per_second), total_frames)
    if valid < 1:
        raise DegenerateInputError(
            f"segment valid span {spec.valid_len_s}s shorter than one frame")
    mask = np.zeros(total_frames, dtype=bool)
    mask[:valid] = True
    return mask


# ---------------------------------------------------------------------------
# WAV ingestion (mono PCM16 or float32, enough for slice_segment inputs)

def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a single-channel WAV file; returns (samples as float64, rate)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 44 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels != 1:
        raise FormatError(f"{path}: expected mono audio, got {channels} channels")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported format (code {audio_format}, {bits}-bit); "
            "need 16-bit PCM or 32-bit float")
    return samples, rate


def wav_duration_s(path) -> float:
    samples, rate = read_wav(path)
    return len(samples) / rate
