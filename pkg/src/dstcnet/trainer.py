"""Training and evaluation harness: Adam with bias correction, mini-batch
cross-entropy training with early stopping and checkpoint restore,
stratified k-fold cross-validation, the four ablation configurations, and
the encoder-layer x segment-length sweep.

Everything is deterministic given the seed: fold assignment, parameter
init, shuffling, and dropout all draw from seeded generators, and fold i
trains with seed = base seed + i, so folds are independent units of work.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensor as tt
from .errors import ContractError, DimensionError
from .feature_store import Manifest, load_entry, select_layer
from .model import ABLATIONS, DstcNet, ModelConfig
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, early-stopping, and model hyperparameters.

    Defaults are the reference configuration: Adam at lr 1e-4 with batch
    size 32 for up to 200 epochs, patience 50, 10 folds, BiLSTM hidden 128
    per direction, 128-dim segment representations, dropout 0.3.
    """

    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 50
    folds: int = 10
    seed: int = 0
    ablation: str = "full"
    layer: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_size: int = 128
    repr_size: int = 128
    dropout: float = 0.3
    standardize: bool = True
    head_layout: str = "scoring_mlp"  # "post_agg" is non-canonical

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs,
               self.patience, self.folds, self.layer) <= 0:
            raise ContractError("all TrainConfig magnitudes must be positive")
        if self.patience > self.max_epochs:
            raise ContractError(
                f"patience {self.patience} exceeds max_epochs {self.max_epochs}")
        if self.ablation not in ABLATIONS:
            raise ContractError(f"unknown ablation {self.ablation!r}")


@dataclass
class Recording:
    """One recording ready for the model: stacked segments plus masks."""

    recording_id: str
    label: int | None
    segments: np.ndarray   # (M, T, F) float64
    masks: np.ndarray      # (M, T) bool

    def as_input(self) -> tuple[np.ndarray, np.ndarray]:
        return self.segments, self.masks


def load_recordings(manifest: Manifest, layer: int) -> list[Recording]:
    """Materialize one encoder layer of every manifest entry."""
    out = []
    for entry in manifest.entries:
        t = load_entry(manifest, entry)
        seqs = select_layer(t, layer)
        segments = np.stack([seq for seq, _ in seqs])
        masks = np.stack([mask for _, mask in seqs])
        out.append(Recording(entry.recording_id, t.label, segments, masks))
    return out


# ---------------------------------------------------------------------------
# feature standardization (train-split statistics only)

@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, recordings: list[Recording]) -> "FeatureScaler":
        frames = np.concatenate(
            [r.segments[r.masks] for r in recordings], axis=0)
        std = frames.std(axis=0)
        return cls(mean=frames.mean(axis=0), std=np.maximum(std, 1e-8))

    def transform(self, recordings: list[Recording]) -> list[Recording]:
        out = []
        for r in recordings:
            segs = (r.segments - self.mean) / self.std
            segs[~r.masks] = 0.0  # padding stays exactly zero
            out.append(Recording(r.recording_id, r.label, segs, r.masks))
        return out


# ---------------------------------------------------------------------------
# Adam

def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: tuple[list[np.ndarray], list[np.ndarray]] | None,
              t: int, config: TrainConfig):
    """One bias-corrected Adam update (pure function).

    ``state`` is (first moments, second moments) or None for a fresh start;
    returns (new_params, new_state). ``t`` is the 1-based step index.
    """
    if t < 1:
        raise ContractError(f"step index must be >= 1, got {t}")
    if state is None:
        state = ([np.zeros_like(p) for p in params],
                 [np.zeros_like(p) for p in params])
    ms, vs = state
    if not (len(params) == len(grads) == len(ms) == len(vs)):
        raise DimensionError("params/grads/state length mismatch")
    new_p, new_m, new_v = [], [], []
    b1, b2 = config.beta1, config.beta2
    for p, g, m, v in zip(params, grads, ms, vs):
        if p.shape != g.shape:
            raise DimensionError(f"param shape {p.shape} vs grad shape {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, (new_m, new_v)


class Adam:
    """Stateful wrapper around :func:`adam_step` for a fixed tensor list."""

    def __init__(self, params: list[Tensor], config: TrainConfig):
        self.params = params
        self.config = config
        self.t = 0
        self.state = None

    def step(self) -> None:
        self.t += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.params]
        new_p, self.state = adam_step([p.data for p in self.params], grads,
                                      self.state, self.t, self.config)
        for p, d in zip(self.params, new_p):
            p.data = d

    def zero_grad(self) -> None:
        tt.zero_grads(self.params)


# ---------------------------------------------------------------------------
# evaluation metrics

def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return 2 * precision * recall / (precision + recall) \
        if precision + recall > 0 else 0.0


def evaluate(model: DstcNet, recordings: list[Recording],
             batch_size: int = 64) -> dict:
    """Accuracy, positive-class F1, macro-F1, confusion counts, mean loss."""
    if not recordings:
        raise ContractError("evaluate needs a non-empty recording set")
    tp = fp = tn = fn = 0
    losses = []
    for off in range(0, len(recordings), batch_size):
        chunk = recordings[off:off + batch_size]
        logits, outputs = model.forward([r.as_input() for r in chunk])
        labels = [r.label for r in chunk]
        losses.append(tt.cross_entropy_logits(logits, labels).item() * len(chunk))
        for rec, out in zip(chunk, outputs):
            if rec.label == 1:
                tp += out.predicted == 1
                fn += out.predicted == 0
            else:
                tn += out.predicted == 0
                fp += out.predicted == 1
    total = len(recordings)
    f1_pos = _f1(tp, fp, fn)
    f1_neg = _f1(tn, fn, fp)
    return {
        "accuracy": (tp + tn) / total,
        "f1": f1_pos,
        "macro_f1": (f1_pos + f1_neg) / 2,
        "tp": int(tp), "fp": int(fp), "tn": int(tn), "fn": int(fn),
        "loss": sum(losses) / total,
    }


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainResult:
    model: DstcNet
    scaler: FeatureScaler | None
    history: dict


def train(train_recs: list[Recording], val_recs: list[Recording],
          config: TrainConfig) -> TrainResult:
    """Mini-batch cross-entropy training with early stopping.

    Tracks validation accuracy (ties broken by lower validation loss) each
    epoch, stops once ``patience`` epochs pass without improvement, and
    restores the parameters of the best epoch.
    """
    labels = {r.label for r in train_recs}
    if labels != {0, 1}:
        raise ContractError(
            f"training split must contain both classes, got labels {sorted(labels)}")
    if not val_recs:
        raise ContractError("validation split must be non-empty")

    scaler = FeatureScaler.fit(train_recs) if config.standardize else None
    if scaler is not None:
        train_recs = scaler.transform(train_recs)
        val_recs = scaler.transform(val_recs)

    rng = np.random.default_rng(config.seed)
    input_dim = train_recs[0].segments.shape[2]
    model = DstcNet(ModelConfig(
        input_dim=input_dim, hidden_size=config.hidden_size,
        repr_size=config.repr_size, ablation=config.ablation,
        dropout=config.dropout, head_layout=config.head_layout), rng)
    opt = Adam(model.parameters(), config)

    best = {"epoch": 0, "accuracy": -1.0, "loss": np.inf, "snapshot": model.snapshot()}
    history = {"train_loss": [], "val_accuracy": [], "val_loss": []}
    n = len(train_recs)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for off in range(0, n, config.batch_size):
            batch = [train_recs[i] for i in order[off:off + config.batch_size]]
            opt.zero_grad()
            with Tape() as tape:
                logits, _ = model.forward([r.as_input() for r in batch],
                                          train=True, rng=rng)
                loss = tt.cross_entropy_logits(logits, [r.label for r in batch])
            tape.backward(loss)
            opt.step()
            epoch_loss += loss.item() * len(batch)
        metrics = evaluate(model, val_recs)
        history["train_loss"].append(epoch_loss / n)
        history["val_accuracy"].append(metrics["accuracy"])
        history["val_loss"].append(metrics["loss"])
        improved = (metrics["accuracy"] > best["accuracy"]
                    or (metrics["accuracy"] == best["accuracy"]
                        and metrics["loss"] < best["loss"]))
        if improved:
            best = {"epoch": epoch, "accuracy": metrics["accuracy"],
                    "loss": metrics["loss"], "snapshot": model.snapshot()}
        elif epoch - best["epoch"] >= config.patience:
            break
    model.restore(best["snapshot"])
    history["best_epoch"] = best["epoch"]
    history["best_val_accuracy"] = best["accuracy"]
    return TrainResult(model=model, scaler=scaler, history=history)


# ---------------------------------------------------------------------------
# cross-validation

@dataclass(frozen=True)
class FoldSplit:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def kfold_split(recording_ids: list[str], labels: list[int], k: int,
                seed: int) -> list[FoldSplit]:
    """Stratified, leakage-free folds: per-class seeded shuffle, round-robin
    assignment; fold i tests on fold i, validates on fold (i+1) mod k, and
    trains on the remaining k-2 folds."""
    if len(recording_ids) != len(labels):
        raise ContractError("recording_ids and labels length mismatch")
    if k < 3:
        raise ContractError(f"need k >= 3 to keep train/val/test disjoint, got {k}")
    by_class: dict[int, list[str]] = {}
    for rid, lab in zip(recording_ids, labels):
        by_class.setdefault(lab, []).append(rid)
    min_count = min(len(v) for v in by_class.values())
    if k > min_count:
        raise ContractError(
            f"k={k} exceeds smallest class count {min_count}")
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    for lab in sorted(by_class):
        ids = sorted(by_class[lab])
        rng.shuffle(ids)
        for j, rid in enumerate(ids):
            folds[j % k].append(rid)
    splits = []
    for i in range(k):
        vi = (i + 1) % k
        train = tuple(rid for j in range(k) if j not in (i, vi) for rid in folds[j])
        splits.append(FoldSplit(train_ids=train, val_ids=tuple(folds[vi]),
                                test_ids=tuple(folds[i])))
    return splits


@dataclass
class FoldReport:
    """Per-fold metrics and their aggregate for one configuration."""

    config: dict
    folds: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"config": self.config, "folds": self.folds,
                   "aggregate": self.aggregate}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FoldReport":
        payload = json.loads(text)
        return cls(config=payload["config"], folds=payload["folds"],
                   aggregate=payload["aggregate"])


def _aggregate(folds: list[dict]) -> dict:
    agg = {}
    for key in ("accuracy", "f1", "macro_f1"):
        vals = np.array([f[key] for f in folds])
        agg[f"mean_{key}"] = float(vals.mean())
        agg[f"std_{key}"] = float(vals.std())
    agg["pooled_accuracy"] = float(
        sum(f["tp"] + f["tn"] for f in folds)
        / sum(f["tp"] + f["tn"] + f["fp"] + f["fn"] for f in folds))
    return agg


def run_cv(recordings: list[Recording], config: TrainConfig) -> FoldReport:
    """K-fold cross-validation; fold i trains with seed = config.seed + i."""
    ids = [r.recording_id for r in recordings]
    labels = [r.label for r in recordings]
    by_id = {r.recording_id: r for r in recordings}
    splits = kfold_split(ids, labels, config.folds, config.seed)
    report = FoldReport(config=_config_dict(config))
    for i, split in enumerate(splits):
        fold_config = replace(config, seed=config.seed + i)
        result = train([by_id[r] for r in split.train_ids],
                       [by_id[r] for r in split.val_ids], fold_config)
        test = [by_id[r] for r in split.test_ids]
        if result.scaler is not None:
            test = result.scaler.transform(test)
        metrics = evaluate(result.model, test)
        metrics["fold"] = i
        metrics["best_epoch"] = result.history["best_epoch"]
        metrics["epochs_run"] = len(result.history["train_loss"])
        metrics["train_loss_history"] = result.history["train_loss"]
        metrics["val_accuracy_history"] = result.history["val_accuracy"]
        report.folds.append(metrics)
    report.aggregate = _aggregate(report.folds)
    return report


def _config_dict(config: TrainConfig) -> dict:
    return {k: getattr(config, k) for k in sorted(config.__dataclass_fields__)}


def ablate(recordings: list[Recording], config: TrainConfig) -> dict[str, FoldReport]:
    """Run all four configurations on identical folds and seeds."""
    return {name: run_cv(recordings, replace(config, ablation=name))
            for name in ABLATIONS}


# ---------------------------------------------------------------------------
# layer x segment-length sweep

def sweep(manifests: dict[tuple[str, float], Manifest], layers: list[int],
          config: TrainConfig) -> dict[str, dict[int, dict[float, float | None]]]:
    """Mean CV accuracy for every (encoder, segment length, layer) cell.

    Returns {encoder: {layer: {seg_len: accuracy | None}}}; a missing
    manifest cell stays None.
    """
    encoders = sorted({enc for enc, _ in manifests})
    seg_lens = sorted({sl for _, sl in manifests})
    grid: dict[str, dict[int, dict[float, float | None]]] = {
        enc: {layer: {sl: None for sl in seg_lens} for layer in layers}
        for enc in encoders}
    for (enc, sl), manifest in sorted(manifests.items()):
        for layer in layers:
            recs = load_recordings(manifest, layer)
            report = run_cv(recs, replace(config, layer=layer))
            grid[enc][layer][sl] = report.aggregate["mean_accuracy"]
    return grid


def write_sweep_csv(grid: dict, out_dir) -> list[Path]:
    """One CSV per encoder: header row = segment lengths, first column =
    layer index; absent cells are empty."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for enc, rows in sorted(grid.items()):
        path = out_dir / f"sweep_{enc}.csv"
        seg_lens = sorted(next(iter(rows.values())).keys())
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["layer"] + [_fmt_seg(sl) for sl in seg_lens])
            for layer in sorted(rows):
                cells = [rows[layer][sl] for sl in seg_lens]
                writer.writerow([layer] + ["" if c is None else f"{c:.6f}"
                                           for c in cells])
        written.append(path)
    return written


def _fmt_seg(seg_len: float) -> str:
    return f"{seg_len:g}s"
