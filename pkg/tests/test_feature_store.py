"""Feature-file format round trips, corruption handling, layer slicing,
and the synthetic dataset generator."""

import numpy as np
import pytest

from dstcnet.errors import ContractError, FormatError, RangeError
from dstcnet.feature_store import (FeatureTensor, Manifest, ManifestEntry,
                                   load_entry, read_features, read_manifest,
                                   select_layer, synth_dataset,
                                   validate_manifest, write_features,
                                   write_manifest)


def random_tensor(rng, L=2, N=3, T=4, F=5, label=1, rid="rec"):
    return FeatureTensor(
        values=rng.standard_normal((L, N, T, F)).astype(np.float32),
        valid_frames=rng.integers(1, T + 1, size=N),
        recording_id=rid,
        label=label,
    )


def assert_tensors_equal(a, b):
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.valid_frames, b.valid_frames)
    assert a.recording_id == b.recording_id
    assert a.label == b.label


def test_minimal_file_size(tmp_path):
    t = FeatureTensor(values=np.zeros((1, 1, 1, 1), dtype=np.float32),
                      valid_frames=[1], recording_id="x", label=None)
    path = tmp_path / "min.dstc"
    write_features(t, path)
    assert path.stat().st_size == 4 + 1 + 1 + 16 + 2 + len("x") + 4 + 4


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(20)
    for i in range(10):
        t = random_tensor(rng, label=i % 2, rid=f"r{i}")
        path = tmp_path / f"{i}.dstc"
        write_features(t, path)
        assert_tensors_equal(read_features(path), t)


def test_roundtrip_absent_label(tmp_path):
    rng = np.random.default_rng(21)
    t = random_tensor(rng, label=None)
    write_features(t, tmp_path / "u.dstc")
    assert read_features(tmp_path / "u.dstc").label is None


def test_nan_rejected_before_writing():
    values = np.zeros((1, 1, 2, 2), dtype=np.float32)
    values[0, 0, 0, 0] = np.nan
    with pytest.raises(ContractError):
        FeatureTensor(values=values, valid_frames=[2], recording_id="n", label=0)


def test_bad_magic(tmp_path):
    rng = np.random.default_rng(22)
    path = tmp_path / "m.dstc"
    write_features(random_tensor(rng), path)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        read_features(path)


def test_truncated_by_one_byte(tmp_path):
    rng = np.random.default_rng(23)
    path = tmp_path / "t.dstc"
    write_features(random_tensor(rng), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-1])
    with pytest.raises(FormatError, match="expected"):
        read_features(path)


def test_bad_version(tmp_path):
    rng = np.random.default_rng(24)
    path = tmp_path / "v.dstc"
    write_features(random_tensor(rng), path)
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        read_features(path)


def test_invalid_valid_frames_rejected():
    with pytest.raises(ContractError):
        FeatureTensor(values=np.zeros((1, 2, 3, 1), dtype=np.float32),
                      valid_frames=[0, 3], recording_id="b", label=0)
    with pytest.raises(ContractError):
        FeatureTensor(values=np.zeros((1, 2, 3, 1), dtype=np.float32),
                      valid_frames=[4, 3], recording_id="b", label=0)


# ---------------------------------------------------------------------------
# select_layer

def test_select_layer_out_of_range():
    t = FeatureTensor(values=np.zeros((12, 1, 2, 2), dtype=np.float32),
                      valid_frames=[2], recording_id="s", label=0)
    with pytest.raises(RangeError, match="12"):
        select_layer(t, 13)
    with pytest.raises(RangeError):
        select_layer(t, 0)


def test_select_layer_constant_fill():
    values = np.zeros((3, 2, 4, 5), dtype=np.float32)
    values[0] = 7.5
    t = FeatureTensor(values=values, valid_frames=[4, 2], recording_id="c", label=0)
    seqs = select_layer(t, 1)
    assert all(np.all(seq == 7.5) for seq, _ in seqs)
    assert seqs[0][0].dtype == np.float64
    assert seqs[1][1].tolist() == [True, True, False, False]


def test_select_layer_matches_index_arithmetic():
    rng = np.random.default_rng(25)
    L, N, T, F = 3, 2, 4, 5
    t = random_tensor(rng, L, N, T, F)
    flat = t.values.reshape(-1)
    for layer in range(1, L + 1):
        seqs = select_layer(t, layer)
        for m in range(N):
            for tt in range(T):
                for ff in range(F):
                    offset = ((layer - 1) * N + m) * T * F + tt * F + ff
                    assert seqs[m][0][tt, ff] == flat[offset]


def test_select_layer_consistent_under_segment_permutation():
    rng = np.random.default_rng(26)
    t = random_tensor(rng, L=2, N=4, T=3, F=2)
    perm = np.array([2, 0, 3, 1])
    t2 = FeatureTensor(values=t.values[:, perm], valid_frames=t.valid_frames[perm],
                       recording_id=t.recording_id, label=t.label)
    a = select_layer(t, 2)
    b = select_layer(t2, 2)
    for i, j in enumerate(perm):
        assert np.array_equal(a[j][0], b[i][0])
        assert np.array_equal(a[j][1], b[i][1])


# ---------------------------------------------------------------------------
# manifests

def test_manifest_roundtrip_and_duplicate_ids(tmp_path):
    e = ManifestEntry("a", "a.dstc", 1, 19.0, 10.0, 0.1, "synthetic", 5)
    write_manifest(Manifest(entries=[e], root=tmp_path), tmp_path / "m.json")
    m = read_manifest(tmp_path / "m.json")
    assert len(m) == 1 and m.entries[0].recording_id == "a"
    with pytest.raises(ContractError):
        Manifest(entries=[e, e])


def test_manifest_label_wins_with_warning(tmp_path):
    rng = np.random.default_rng(27)
    t = random_tensor(rng, label=0, rid="a")
    write_features(t, tmp_path / "a.dstc")
    m = Manifest(entries=[ManifestEntry("a", "a.dstc", 1, 19.0, 10.0, 0.1, "e", 5)],
                 root=tmp_path)
    with pytest.warns(UserWarning, match="overrides"):
        loaded = load_entry(m, m.entries[0])
    assert loaded.label == 1


def test_validate_manifest_reports_problems(tmp_path):
    rng = np.random.default_rng(28)
    write_features(random_tensor(rng, rid="a", label=0), tmp_path / "a.dstc")
    entries = [
        ManifestEntry("a", "a.dstc", 0, 19.0, 10.0, 0.1, "e", 999),  # wrong width
        ManifestEntry("b", "missing.dstc", 0, 19.0, 10.0, 0.1, "e", 5),
    ]
    problems = validate_manifest(Manifest(entries=entries, root=tmp_path))
    assert len(problems) == 2
    assert any("encoder_width" in p for p in problems)


# ---------------------------------------------------------------------------
# synthetic data

def test_synth_deterministic_bytes(tmp_path):
    m1 = synth_dataset(4, (2, 3), 8, 8, 1.5, seed=7, out_dir=tmp_path / "a")
    m2 = synth_dataset(4, (2, 3), 8, 8, 1.5, seed=7, out_dir=tmp_path / "b")
    for e1, e2 in zip(m1.entries, m2.entries):
        assert (tmp_path / "a" / e1.path).read_bytes() == \
               (tmp_path / "b" / e2.path).read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_text() == \
           (tmp_path / "b" / "manifest.json").read_text()


def test_synth_different_seeds_differ(tmp_path):
    m1 = synth_dataset(2, (2, 2), 8, 8, 1.5, seed=1, out_dir=tmp_path / "a")
    m2 = synth_dataset(2, (2, 2), 8, 8, 1.5, seed=2, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / m1.entries[0].path).read_bytes() != \
           (tmp_path / "b" / m2.entries[0].path).read_bytes()


def test_synth_balanced_and_loadable(tmp_path):
    m = synth_dataset(6, (2, 4), 8, 10, 2.0, seed=3, out_dir=tmp_path)
    labels = [e.label for e in m.entries]
    assert labels.count(0) == labels.count(1) == 3
    for e in m.entries:
        t = load_entry(m, e)
        assert t.n_features == 10
        assert t.label == e.label
    assert validate_manifest(m) == []


def test_synth_odd_count_rejected(tmp_path):
    with pytest.raises(ContractError):
        synth_dataset(5, (2, 3), 8, 8, 1.0, seed=0, out_dir=tmp_path)


def test_synth_signal_in_requested_layer_only(tmp_path):
    # strong pattern: the layer variance bump must sit in the signal layer
    m = synth_dataset(40, (3, 3), 12, 8, 25.0, seed=4, out_dir=tmp_path,
                      n_layers=3, signal_layer=2)
    power = np.zeros(3)
    for e in m.entries:
        if e.label == 1:
            t = load_entry(m, e)
            power += (t.values.astype(np.float64) ** 2).mean(axis=(1, 2, 3))
    assert power.argmax() == 1
