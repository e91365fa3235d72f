"""Per-recording feature tensors: binary interchange format, layer
selection, manifests, and a synthetic dataset generator.

A feature file holds one recording's embeddings as a 4-D tensor
(layers x segments x frames x features) in 32-bit floats, plus the number
of valid (non-padded) frames per segment. Storage is 32-bit to halve disk
for wide encoder stacks; everything is widened to float64 on load.

File layout, little-endian:

    magic    4 bytes  "DSTC"
    version  u8       1
    label    i8       0 / 1, or -1 when absent
    L,N,T,F  4 x u32
    id_len   u16      followed by id_len bytes of UTF-8 recording id
    valid    N x u32  valid frame count per segment, each in [1, T]
    values   L*N*T*F x f32, row-major (L, N, T, F)
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, RangeError

MAGIC = b"DSTC"
VERSION = 1


@dataclass
class FeatureTensor:
    """One recording's pre-extracted embeddings plus per-segment masks."""

    values: np.ndarray          # float32, shape (L, N, T, F)
    valid_frames: np.ndarray    # int, shape (N,), each in [1, T]
    recording_id: str
    label: int | None = None    # 0 = HC, 1 = AD, None for inference

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.valid_frames = np.asarray(self.valid_frames, dtype=np.int64)
        if self.values.ndim != 4:
            raise ContractError(
                f"values must be 4-D (L, N, T, F), got shape {self.values.shape}")
        L, N, T, F = self.values.shape
        if min(L, N, T, F) < 1:
            raise ContractError(f"all extents must be positive, got {self.values.shape}")
        if self.valid_frames.shape != (N,):
            raise ContractError(
                f"valid_frames must have one entry per segment ({N}), "
                f"got shape {self.valid_frames.shape}")
        if (self.valid_frames < 1).any() or (self.valid_frames > T).any():
            raise ContractError(f"valid_frames entries must lie in [1, {T}]")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("feature values must be finite")
        if self.label is not None and self.label not in (0, 1):
            raise ContractError(f"label must be 0, 1 or None, got {self.label}")

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]

    @property
    def n_segments(self) -> int:
        return self.values.shape[1]

    @property
    def n_frames(self) -> int:
        return self.values.shape[2]

    @property
    def n_features(self) -> int:
        return self.values.shape[3]


def write_features(t: FeatureTensor, path) -> None:
    """Serialize a FeatureTensor; read_features(write_features(t)) == t."""
    L, N, T, F = t.values.shape
    rid = t.recording_id.encode("utf-8")
    if len(rid) > 0xFFFF:
        raise ContractError("recording_id longer than 65535 bytes")
    header = bytearray()
    header += MAGIC
    header += struct.pack("<Bb", VERSION, -1 if t.label is None else t.label)
    header += struct.pack("<4I", L, N, T, F)
    header += struct.pack("<H", len(rid)) + rid
    header += t.valid_frames.astype("<u4").tobytes()
    body = t.values.astype("<f4").tobytes()
    try:
        with open(path, "wb") as f:
            f.write(bytes(header))
            f.write(body)
    except OSError as e:
        raise OSError(f"writing feature file {path}: {e}") from e


def read_features(path) -> FeatureTensor:
    """Load and validate a feature file written by :func:`write_features`."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise OSError(f"reading feature file {path}: {e}") from e

    def need(n, what):
        if len(raw) < n:
            raise FormatError(f"{path}: truncated in {what} "
                              f"(expected >= {n} bytes, file has {len(raw)})")

    need(6, "header")
    if raw[0:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[0:4]!r}, expected {MAGIC!r}")
    version, label = struct.unpack_from("<Bb", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    need(6 + 16 + 2, "dimension header")
    L, N, T, F = struct.unpack_from("<4I", raw, 6)
    (id_len,) = struct.unpack_from("<H", raw, 22)
    pos = 24
    need(pos + id_len, "recording id")
    rid = raw[pos:pos + id_len].decode("utf-8")
    pos += id_len
    need(pos + 4 * N, "valid_frames")
    valid = np.frombuffer(raw, dtype="<u4", count=N, offset=pos).astype(np.int64)
    pos += 4 * N
    expected = pos + 4 * L * N * T * F
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload length mismatch (expected {expected} bytes, "
            f"file has {len(raw)})")
    values = np.frombuffer(raw, dtype="<f4", count=L * N * T * F, offset=pos)
    values = values.reshape(L, N, T, F)
    try:
        return FeatureTensor(values=values, valid_frames=valid, recording_id=rid,
                             label=None if label < 0 else int(label))
    except ContractError as e:
        raise FormatError(f"{path}: invalid content: {e}") from e


def select_layer(t: FeatureTensor, layer: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pick one encoder layer (1-based): per segment, a float64 (T, F)
    sequence plus its boolean frame mask."""
    if not (1 <= layer <= t.n_layers):
        raise RangeError(
            f"layer {layer} out of range; file has layers 1..{t.n_layers}")
    out = []
    T = t.n_frames
    for m in range(t.n_segments):
        seq = t.values[layer - 1, m].astype(np.float64)
        mask = np.zeros(T, dtype=bool)
        mask[:int(t.valid_frames[m])] = True
        out.append((seq, mask))
    return out


# ---------------------------------------------------------------------------
# manifests

@dataclass
class ManifestEntry:
    recording_id: str
    path: str                 # relative to the manifest file's directory
    label: int | None
    duration_s: float
    seg_len_s: float
    overlap_frac: float
    encoder_name: str
    encoder_width: int


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [e.recording_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ContractError(f"duplicate recording ids in manifest: {dup}")

    def resolve(self, entry: ManifestEntry) -> Path:
        return (self.root / entry.path).resolve()

    def __len__(self) -> int:
        return len(self.entries)


def write_manifest(manifest: Manifest, path) -> None:
    rows = [{
        "recording_id": e.recording_id,
        "path": e.path,
        "label": e.label,
        "duration_s": e.duration_s,
        "seg_len_s": e.seg_len_s,
        "overlap_frac": e.overlap_frac,
        "encoder_name": e.encoder_name,
        "encoder_width": e.encoder_width,
    } for e in manifest.entries]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(rows, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(rows, list):
        raise FormatError(f"{path}: manifest must be a JSON array")
    entries = []
    for i, row in enumerate(rows):
        try:
            entries.append(ManifestEntry(
                recording_id=row["recording_id"],
                path=row["path"],
                label=row["label"],
                duration_s=float(row["duration_s"]),
                seg_len_s=float(row["seg_len_s"]),
                overlap_frac=float(row["overlap_frac"]),
                encoder_name=row["encoder_name"],
                encoder_width=int(row["encoder_width"]),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}: entry {i} malformed: {e}") from e
    return Manifest(entries=entries, root=path.parent)


def load_entry(manifest: Manifest, entry: ManifestEntry) -> FeatureTensor:
    """Read an entry's feature file; on label conflict the manifest wins."""
    t = read_features(manifest.resolve(entry))
    if entry.label is not None and t.label is not None and entry.label != t.label:
        warnings.warn(
            f"{entry.recording_id}: manifest label {entry.label} overrides "
            f"file label {t.label}", stacklevel=2)
    if entry.label is not None:
        t.label = int(entry.label)
    return t


def validate_manifest(manifest: Manifest) -> list[str]:
    """Check every referenced file's invariants; returns problem strings."""
    problems = []
    for e in manifest.entries:
        try:
            t = read_features(manifest.resolve(e))
        except (FormatError, OSError) as exc:
            problems.append(str(exc))
            continue
        if t.n_features != e.encoder_width:
            problems.append(
                f"{e.recording_id}: encoder_width {e.encoder_width} != file F {t.n_features}")
        if t.recording_id != e.recording_id:
            problems.append(
                f"{e.recording_id}: file carries id {t.recording_id!r}")
        if e.label is not None and t.label is not None and e.label != t.label:
            problems.append(
                f"{e.recording_id}: label mismatch (manifest {e.label}, file {t.label}) "
                "- manifest wins")
    return problems


# ---------------------------------------------------------------------------
# synthetic data

SIGNAL_CHANNELS = 8  # the fixed feature channels carrying the planted pattern


def synth_dataset(n_recordings: int,
                  n_segments_range: tuple[int, int],
                  t_frames: int,
                  f_dim: int,
                  pattern_strength: float,
                  seed: int,
                  out_dir,
                  n_layers: int = 1,
                  signal_layer: int = 1,
                  seg_len_s: float = 10.0,
                  overlap_frac: float = 0.10,
                  encoder_name: str = "synthetic") -> Manifest:
    """Generate a balanced labelled dataset of feature files plus manifest.

    Background is N(0, 1) noise. Each positive recording gets one uniformly
    chosen segment with an additive half-sine arch of the given amplitude
    over a random contiguous quarter of that segment's valid frames, in 8
    fixed feature channels. The class evidence is therefore local both in
    time (a few frames) and in segment position, so frame-level and
    segment-level attention each have something to find. Generation is a
    pure function of the seed; ``pattern_strength`` 0 produces a null
    dataset with no class signal at all.
    """
    if n_recordings < 2 or n_recordings % 2 != 0:
        raise ContractError(f"n_recordings must be even and >= 2, got {n_recordings}")
    if pattern_strength < 0:
        raise ContractError(f"pattern_strength must be >= 0, got {pattern_strength}")
    if f_dim < SIGNAL_CHANNELS:
        raise ContractError(f"f_dim must be >= {SIGNAL_CHANNELS}, got {f_dim}")
    lo, hi = n_segments_range
    if not (1 <= lo <= hi):
        raise ContractError(f"bad n_segments_range {n_segments_range}")
    if t_frames < 4:
        raise ContractError(f"t_frames must be >= 4, got {t_frames}")
    if not (1 <= signal_layer <= n_layers):
        raise ContractError(f"signal_layer {signal_layer} outside 1..{n_layers}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    hop = seg_len_s * (1.0 - overlap_frac)
    entries = []
    for i in range(n_recordings):
        label = i % 2
        rid = f"rec_{i:04d}"
        M = int(rng.integers(lo, hi + 1))
        values = rng.standard_normal((n_layers, M, t_frames, f_dim)).astype(np.float32)
        valid = np.full(M, t_frames, dtype=np.int64)
        # the tail segment is partially padded, like a real clipped tail
        valid[M - 1] = int(rng.integers(max(2, t_frames // 2), t_frames + 1))
        if label == 1:
            m_sel = int(rng.integers(0, M))
            v = int(valid[m_sel])
            q = max(1, v // 4)
            start = int(rng.integers(0, v - q + 1))
            arch = np.sin(np.pi * (np.arange(q) + 0.5) / q) * pattern_strength
            values[signal_layer - 1, m_sel, start:start + q, :SIGNAL_CHANNELS] += \
                arch[:, None].astype(np.float32)
        t = FeatureTensor(values=values, valid_frames=valid,
                          recording_id=rid, label=label)
        fname = f"{rid}.dstc"
        write_features(t, out_dir / fname)
        entries.append(ManifestEntry(
            recording_id=rid, path=fname, label=label,
            duration_s=round((M - 1) * hop + seg_len_s, 6),
            seg_len_s=seg_len_s, overlap_frac=overlap_frac,
            encoder_name=encoder_name, encoder_width=f_dim))
    manifest = Manifest(entries=entries, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest
