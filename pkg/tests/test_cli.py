"""CLI subcommands end to end on small synthetic data; outputs are checked
against the library functions they wrap."""

import json
import wave

import numpy as np
import pytest

from dstcnet.cli import main
from dstcnet.feature_store import read_manifest, synth_dataset, write_manifest
from dstcnet.segmenter import plan_segments
from dstcnet.trainer import FoldReport, TrainConfig, load_recordings, run_cv


def _write_wav(path, seconds, rate=8000):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.zeros(int(seconds * rate), dtype="<i2").tobytes())


FAST = ["--lr", "3e-3", "--batch-size", "8", "--epochs", "4", "--patience", "4",
        "--folds", "3", "--hidden-size", "6", "--repr-size", "6"]


def test_segment_prints_plan_table(tmp_path, capsys):
    wav = tmp_path / "25s.wav"
    _write_wav(wav, 25.0)
    code = main(["segment", "--audio", str(wav), "--seg-len", "10",
                 "--overlap", "0.10"])
    assert code == 0
    out = capsys.readouterr().out
    rows = [line.split() for line in out.splitlines()[2:]]
    got = [(float(r[1]), float(r[2]), float(r[3])) for r in rows]
    specs = plan_segments(25.0, 10.0, 0.10)
    assert got == [(s.start_s, s.end_s, s.pad_s) for s in specs]
    assert got == [(0.0, 10.0, 0.0), (9.0, 19.0, 0.0), (18.0, 25.0, 3.0)]


def test_segment_duration_flag(tmp_path, capsys):
    assert main(["segment", "--duration", "5", "--seg-len", "10"]) == 0
    out = capsys.readouterr().out
    assert "1 segments" in out


def test_synth_validate_roundtrip(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["synth", "--n", "6", "--out", str(out), "--seed", "3"]) == 0
    assert main(["validate", str(out / "manifest.json")]) == 0
    assert "6 file(s) ok" in capsys.readouterr().out


def test_validate_truncated_file_names_it(tmp_path, capsys):
    out = tmp_path / "data"
    synth_dataset(4, (2, 2), 6, 8, 1.0, seed=0, out_dir=out)
    victim = out / "rec_0002.dstc"
    victim.write_bytes(victim.read_bytes()[:-3])
    code = main(["validate", str(out / "manifest.json")])
    assert code == 1
    err = capsys.readouterr().err
    assert "rec_0002" in err


def test_validate_missing_manifest_is_io_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2


def test_train_kfold_deterministic_bytes(tmp_path, capsys):
    data = tmp_path / "data"
    synth_dataset(12, (2, 2), 6, 8, 3.0, seed=1, out_dir=data)
    manifest = str(data / "manifest.json")
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert main(["train", "--manifest", manifest, "--out", str(r1),
                 "--seed", "5", *FAST]) == 0
    assert main(["train", "--manifest", manifest, "--out", str(r2),
                 "--seed", "5", *FAST]) == 0
    assert r1.read_bytes() == r2.read_bytes()
    # and the report matches the library run with the same configuration
    report = FoldReport.from_json(r1.read_text())
    cfg = TrainConfig(learning_rate=3e-3, batch_size=8, max_epochs=4,
                      patience=4, folds=3, seed=5, hidden_size=6, repr_size=6)
    lib = run_cv(load_recordings(read_manifest(manifest), 1), cfg)
    assert report.aggregate == lib.aggregate


def test_dstc_seed_env_overrides_flag(tmp_path, monkeypatch):
    data = tmp_path / "data"
    synth_dataset(12, (2, 2), 6, 8, 3.0, seed=1, out_dir=data)
    manifest = str(data / "manifest.json")
    r_env, r_flag = tmp_path / "env.json", tmp_path / "flag.json"
    monkeypatch.setenv("DSTC_SEED", "9")
    assert main(["train", "--manifest", manifest, "--out", str(r_env),
                 "--seed", "5", *FAST]) == 0
    monkeypatch.delenv("DSTC_SEED")
    assert main(["train", "--manifest", manifest, "--out", str(r_flag),
                 "--seed", "9", *FAST]) == 0
    assert r_env.read_bytes() == r_flag.read_bytes()


def test_train_holdout_save_eval(tmp_path, capsys):
    data_train = tmp_path / "train"
    data_test = tmp_path / "test"
    synth_dataset(16, (2, 2), 6, 8, 3.0, seed=2, out_dir=data_train)
    synth_dataset(8, (2, 2), 6, 8, 3.0, seed=3, out_dir=data_test)
    report = tmp_path / "holdout.json"
    model = tmp_path / "model.npz"
    assert main(["train", "--manifest", str(data_train / "manifest.json"),
                 "--test-manifest", str(data_test / "manifest.json"),
                 "--out", str(report), "--save-model", str(model),
                 "--val-fraction", "0.25", *FAST]) == 0
    payload = json.loads(report.read_text())
    assert {"accuracy", "f1", "tp"} <= set(payload["test"])
    metrics = tmp_path / "metrics.json"
    assert main(["eval", "--model", str(model),
                 "--manifest", str(data_test / "manifest.json"),
                 "--out", str(metrics)]) == 0
    assert json.loads(metrics.read_text()) == payload["test"]


def test_ablate_writes_four_reports(tmp_path, capsys):
    data = tmp_path / "data"
    synth_dataset(12, (2, 2), 6, 8, 3.0, seed=4, out_dir=data)
    out_dir = tmp_path / "reports"
    assert main(["ablate", "--manifest", str(data / "manifest.json"),
                 "--out-dir", str(out_dir), *FAST]) == 0
    names = sorted(p.name for p in out_dir.glob("*.json"))
    assert names == ["report_baseline.json", "report_csca_only.json",
                     "report_full.json", "report_ista_only.json"]
    # identical fold splits across configurations: same test totals per fold
    reports = {p.name: FoldReport.from_json(p.read_text())
               for p in out_dir.glob("*.json")}
    sizes = {name: [f["tp"] + f["fp"] + f["tn"] + f["fn"] for f in rep.folds]
             for name, rep in reports.items()}
    assert len({tuple(v) for v in sizes.values()}) == 1


def test_sweep_csv_grid(tmp_path, capsys):
    mdir = tmp_path / "manifests"
    mdir.mkdir()
    for seg_len, seed in ((5.0, 7), (10.0, 8)):
        sub = tmp_path / f"d{int(seg_len)}"
        m = synth_dataset(12, (2, 2), 6, 8, 3.0, seed=seed, out_dir=sub,
                          n_layers=2, seg_len_s=seg_len)
        for e in m.entries:
            e.path = str((sub / e.path).resolve())
        write_manifest(m, mdir / f"synthetic_{int(seg_len)}s.json")
    out_dir = tmp_path / "grids"
    assert main(["sweep", "--manifests", str(mdir), "--layers", "1..2",
                 "--out-dir", str(out_dir), *FAST]) == 0
    csv_path = out_dir / "sweep_synthetic.csv"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "layer,5s,10s"
    assert len(lines) == 3
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 3
        float(cells[1]), float(cells[2])  # filled cells parse as numbers


def test_report_renders_table(tmp_path, capsys):
    data = tmp_path / "data"
    synth_dataset(12, (2, 2), 6, 8, 3.0, seed=5, out_dir=data)
    rpt = tmp_path / "r.json"
    assert main(["train", "--manifest", str(data / "manifest.json"),
                 "--out", str(rpt), *FAST]) == 0
    capsys.readouterr()
    assert main(["report", str(rpt)]) == 0
    out = capsys.readouterr().out
    assert "r.json" in out and "±" in out


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["segment", "--duration", "5", "--bogus", "1"])
    assert exc.value.code == 2


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for needle in ("1e-4", "32", "200", "50", "10"):
        assert needle in out
