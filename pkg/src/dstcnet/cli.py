"""Command-line interface.

Subcommands: segment, synth, validate, train, ablate, eval, sweep, report.
Every subcommand is a thin adapter over the library; defaults mirror the
reference configuration (lr 1e-4, batch 32, 200 epochs, patience 50, 10
folds, 10% overlap). Exit codes: 0 success, 1 contract/format error, 2 I/O
error. The DSTC_SEED environment variable overrides --seed when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import DstcError
from .feature_store import (Manifest, read_manifest, synth_dataset,
                            validate_manifest)
from .model import ABLATIONS, DstcNet, ModelConfig
from .segmenter import plan_segments, wav_duration_s
from .trainer import (FeatureScaler, FoldReport, TrainConfig, evaluate,
                      load_recordings, run_cv, sweep, train, write_sweep_csv)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layer", type=int, default=1,
                   help="encoder layer to use, 1-based (default 1)")
    p.add_argument("--ablation", choices=ABLATIONS, default="full",
                   help="model configuration (default full)")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--lr", type=float, default=1e-4,
                   help="Adam learning rate (default 1e-4)")
    p.add_argument("--batch-size", type=int, default=32,
                   help="recordings per optimizer step (default 32)")
    p.add_argument("--epochs", type=int, default=200,
                   help="maximum training epochs (default 200)")
    p.add_argument("--patience", type=int, default=50,
                   help="early-stopping patience in epochs (default 50)")
    p.add_argument("--folds", type=int, default=10,
                   help="cross-validation folds (default 10)")
    p.add_argument("--hidden-size", type=int, default=128,
                   help="BiLSTM hidden units per direction (default 128)")
    p.add_argument("--repr-size", type=int, default=128,
                   help="segment representation width (default 128)")
    p.add_argument("--dropout", type=float, default=0.3,
                   help="dropout on BiLSTM outputs during training (default 0.3)")
    p.add_argument("--no-standardize", action="store_true",
                   help="disable per-feature z-scoring with train-fold stats")
    p.add_argument("--head-layout", choices=("scoring_mlp", "post_agg"),
                   default="scoring_mlp",
                   help="where the 64/32 hidden layers sit; post_agg applies "
                        "them after aggregation (non-canonical alternative)")


def _config_from_args(args) -> TrainConfig:
    seed = int(os.environ["DSTC_SEED"]) if "DSTC_SEED" in os.environ else args.seed
    return TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size,
        max_epochs=args.epochs, patience=args.patience, folds=args.folds,
        seed=seed, ablation=args.ablation, layer=args.layer,
        hidden_size=args.hidden_size, repr_size=args.repr_size,
        dropout=args.dropout, standardize=not args.no_standardize,
        head_layout=args.head_layout)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dstcnet",
        description="Segment-and-attend classifier for long speech "
                    "recordings over pre-extracted feature tensors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="print the segmentation plan for a recording")
    p.add_argument("--audio", type=Path, help="mono WAV file to plan over")
    p.add_argument("--duration", type=float,
                   help="recording length in seconds (alternative to --audio)")
    p.add_argument("--seg-len", type=float, default=10.0,
                   help="segment length in seconds (default 10)")
    p.add_argument("--overlap", type=float, default=0.10,
                   help="fractional overlap between neighbours (default 0.10)")

    p = sub.add_parser("synth", help="generate a synthetic labelled dataset")
    p.add_argument("--n", type=int, required=True, help="number of recordings (even)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--segments", default="3:5",
                   help="segment count range lo:hi (default 3:5)")
    p.add_argument("--frames", type=int, default=16,
                   help="frames per segment (default 16)")
    p.add_argument("--features", type=int, default=8,
                   help="feature width, >= 8 (default 8)")
    p.add_argument("--strength", type=float, default=2.0,
                   help="planted pattern amplitude (default 2.0; 0 = null data)")
    p.add_argument("--layers", type=int, default=1,
                   help="encoder layers to synthesize (default 1)")
    p.add_argument("--signal-layer", type=int, default=1,
                   help="layer carrying the pattern (default 1)")

    p = sub.add_parser("validate", help="check every file a manifest references")
    p.add_argument("manifest", type=Path)

    p = sub.add_parser("train", help="k-fold cross-validation (or holdout) training")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON path")
    p.add_argument("--test-manifest", type=Path,
                   help="holdout mode: train on --manifest, test on this")
    p.add_argument("--val-fraction", type=float, default=0.15,
                   help="holdout mode: stratified validation share (default 0.15)")
    p.add_argument("--save-model", type=Path, help="write trained weights (holdout mode)")
    _add_train_flags(p)

    p = sub.add_parser("ablate", help="run all four module configurations")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes (default 1)")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a saved model on a manifest")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, help="metrics JSON path (default stdout)")
    p.add_argument("--layer", type=int, default=1)

    p = sub.add_parser("sweep", help="layer x segment-length accuracy grid")
    p.add_argument("--manifests", type=Path, required=True,
                   help="directory of manifest JSON files")
    p.add_argument("--layers", default="1..12",
                   help="layer range lo..hi or comma list (default 1..12)")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes (default 1)")
    _add_train_flags(p)

    p = sub.add_parser("report", help="render report JSONs as a table")
    p.add_argument("reports", type=Path, nargs="+")
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies

def _cmd_segment(args) -> int:
    if (args.audio is None) == (args.duration is None):
        raise DstcError("segment: pass exactly one of --audio or --duration")
    total = wav_duration_s(args.audio) if args.audio is not None else args.duration
    specs = plan_segments(total, args.seg_len, args.overlap)
    print(f"total {total:.3f}s, segment {args.seg_len:g}s, "
          f"overlap {args.overlap:g} -> {len(specs)} segments")
    print(f"{'index':>5} {'start_s':>10} {'end_s':>10} {'pad_s':>8}")
    for s in specs:
        print(f"{s.index:>5} {s.start_s:>10.3f} {s.end_s:>10.3f} {s.pad_s:>8.3f}")
    return 0


def _cmd_synth(args) -> int:
    lo, _, hi = args.segments.partition(":")
    seed = int(os.environ["DSTC_SEED"]) if "DSTC_SEED" in os.environ else args.seed
    manifest = synth_dataset(
        args.n, (int(lo), int(hi or lo)), args.frames, args.features,
        args.strength, seed, args.out, n_layers=args.layers,
        signal_layer=args.signal_layer)
    print(f"wrote {len(manifest)} recordings + manifest.json to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    manifest = read_manifest(args.manifest)
    problems = validate_manifest(manifest)
    for problem in problems:
        print(problem, file=sys.stderr)
    if problems:
        print(f"{args.manifest}: {len(problems)} problem(s)", file=sys.stderr)
        return 1
    print(f"{args.manifest}: {len(manifest)} file(s) ok")
    return 0


def _save_bundle(path, model: DstcNet, scaler: FeatureScaler | None) -> None:
    arrays = {f"param:{k}": v.data for k, v in model.named_parameters().items()}
    arrays["model_config"] = np.frombuffer(
        json.dumps(model.config.__dict__, sort_keys=True).encode(), dtype=np.uint8)
    if scaler is not None:
        arrays["scaler_mean"] = scaler.mean
        arrays["scaler_std"] = scaler.std
    np.savez(path, **arrays)


def _load_bundle(path) -> tuple[DstcNet, FeatureScaler | None]:
    with np.load(path) as z:
        cfg = json.loads(bytes(z["model_config"]).decode())
        model = DstcNet(ModelConfig(**cfg), np.random.default_rng(0))
        for name, p in model.named_parameters().items():
            p.data = np.asarray(z[f"param:{name}"], dtype=np.float64)
        scaler = None
        if "scaler_mean" in z:
            scaler = FeatureScaler(mean=np.asarray(z["scaler_mean"]),
                                   std=np.asarray(z["scaler_std"]))
    return model, scaler


def _stratified_split(recordings, fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    val_idx: set[int] = set()
    labels = np.array([r.label for r in recordings])
    for label in (0, 1):
        idx = np.flatnonzero(labels == label)
        rng.shuffle(idx)
        val_idx.update(idx[:max(1, int(round(len(idx) * fraction)))])
    train = [r for i, r in enumerate(recordings) if i not in val_idx]
    val = [recordings[i] for i in sorted(val_idx)]
    return train, val


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    recordings = load_recordings(read_manifest(args.manifest), config.layer)
    if args.test_manifest is None:
        report = run_cv(recordings, config)
        args.out.write_text(report.to_json())
        agg = report.aggregate
        print(f"{config.folds}-fold accuracy {agg['mean_accuracy']:.4f} "
              f"± {agg['std_accuracy']:.4f}, F1 {agg['mean_f1']:.4f} "
              f"± {agg['std_f1']:.4f} -> {args.out}")
        if args.save_model:
            raise DstcError("--save-model needs holdout mode (--test-manifest)")
        return 0
    train_recs, val_recs = _stratified_split(recordings, args.val_fraction,
                                             config.seed)
    result = train(train_recs, val_recs, config)
    test_recs = load_recordings(read_manifest(args.test_manifest), config.layer)
    if result.scaler is not None:
        test_recs = result.scaler.transform(test_recs)
    metrics = evaluate(result.model, test_recs)
    payload = {"config": {k: getattr(config, k)
                          for k in sorted(config.__dataclass_fields__)},
               "test": metrics, "history": result.history}
    args.out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"holdout accuracy {metrics['accuracy']:.4f}, F1 {metrics['f1']:.4f} "
          f"-> {args.out}")
    if args.save_model:
        _save_bundle(args.save_model, result.model, result.scaler)
        print(f"model -> {args.save_model}")
    return 0


def _ablate_cell(task):
    manifest_path, layer, config_kwargs, name = task
    recordings = load_recordings(read_manifest(manifest_path), layer)
    report = run_cv(recordings, TrainConfig(**config_kwargs, ablation=name))
    return name, report


def _cmd_ablate(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        config_kwargs = {k: getattr(config, k)
                         for k in config.__dataclass_fields__ if k != "ablation"}
        tasks = [(args.manifest, config.layer, config_kwargs, name)
                 for name in ABLATIONS]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = dict(pool.map(_ablate_cell, tasks))
    else:
        recordings = load_recordings(read_manifest(args.manifest), config.layer)
        reports = {name: run_cv(recordings, replace(config, ablation=name))
                   for name in ABLATIONS}
    for name in ABLATIONS:
        report = reports[name]
        out = args.out_dir / f"report_{name}.json"
        out.write_text(report.to_json())
        agg = report.aggregate
        print(f"{name:10s} accuracy {agg['mean_accuracy']:.4f} "
              f"± {agg['std_accuracy']:.4f} -> {out}")
    return 0


def _cmd_eval(args) -> int:
    model, scaler = _load_bundle(args.model)
    recordings = load_recordings(read_manifest(args.manifest), args.layer)
    if scaler is not None:
        recordings = scaler.transform(recordings)
    metrics = evaluate(model, recordings)
    text = json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
        print(f"accuracy {metrics['accuracy']:.4f} -> {args.out}")
    else:
        print(text, end="")
    return 0


def _parse_layers(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",")]


def _sweep_cell(task):
    manifest_path, layer, config_kwargs = task
    manifest = read_manifest(manifest_path)
    recs = load_recordings(manifest, layer)
    report = run_cv(recs, TrainConfig(**config_kwargs, layer=layer))
    return layer, report.aggregate["mean_accuracy"]


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    layers = _parse_layers(args.layers)
    manifests: dict[tuple[str, float], tuple[Path, Manifest]] = {}
    for path in sorted(args.manifests.glob("*.json")):
        manifest = read_manifest(path)
        if not manifest.entries:
            continue
        keys = {(e.encoder_name, e.seg_len_s) for e in manifest.entries}
        if len(keys) != 1:
            raise DstcError(
                f"{path}: manifest mixes encoder/segment-length keys {sorted(keys)}")
        manifests[keys.pop()] = (path, manifest)
    if not manifests:
        raise DstcError(f"no manifest JSON files found under {args.manifests}")

    if args.jobs > 1:
        config_kwargs = {k: getattr(config, k)
                         for k in config.__dataclass_fields__ if k != "layer"}
        seg_lens = sorted({sl for _, sl in manifests})
        grid = {enc: {layer: {sl: None for sl in seg_lens} for layer in layers}
                for enc, _ in manifests}
        tasks = [((enc, sl), (path, layer, config_kwargs))
                 for (enc, sl), (path, _) in sorted(manifests.items())
                 for layer in layers]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for ((enc, sl), _), (layer, acc) in zip(
                    tasks, pool.map(_sweep_cell, [t for _, t in tasks])):
                grid[enc][layer][sl] = acc
    else:
        grid = sweep({k: m for k, (_, m) in manifests.items()}, layers, config)

    paths = write_sweep_csv(grid, args.out_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    print(f"{'report':<32} {'accuracy':>18} {'F1':>18} {'macro-F1':>18}")
    for path in args.reports:
        rep = FoldReport.from_json(path.read_text())
        agg = rep.aggregate
        cells = [f"{agg[f'mean_{k}']:.4f} ± {agg[f'std_{k}']:.4f}"
                 for k in ("accuracy", "f1", "macro_f1")]
        print(f"{path.name:<32} {cells[0]:>18} {cells[1]:>18} {cells[2]:>18}")
    return 0


_COMMANDS = {
    "segment": _cmd_segment,
    "synth": _cmd_synth,
    "validate": _cmd_validate,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DstcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
