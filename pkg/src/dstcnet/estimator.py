"""Scikit-learn style estimator facade over the training engine.

``DstcNetClassifier`` follows the fit/predict/predict_proba contract with
``get_params``/``set_params`` from BaseEstimator, so it clones and composes
with the usual tooling. X is a list of recordings, each a FeatureTensor, a
``(segments, valid_frames)`` pair, or a bare (segments, frames, features)
array; y holds 0/1 labels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ContractError
from .trainer import Recording, TrainConfig, evaluate, train
from .validation import check_labels, coerce_dataset


class DstcNetClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier over segmented feature sequences.

    Trains with Adam, mini-batch cross-entropy, and early stopping on a
    validation split carved from the training data (stratified,
    ``validation_fraction``) unless an explicit ``validation`` set is given
    to ``fit``. Defaults mirror the reference configuration.
    """

    def __init__(self, layer: int = 1, ablation: str = "full",
                 hidden_size: int = 128, repr_size: int = 128,
                 learning_rate: float = 1e-4, batch_size: int = 32,
                 max_epochs: int = 200, patience: int = 50,
                 dropout: float = 0.3, standardize: bool = True,
                 validation_fraction: float = 0.15, random_state: int = 0):
        self.layer = layer
        self.ablation = ablation
        self.hidden_size = hidden_size
        self.repr_size = repr_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.dropout = dropout
        self.standardize = standardize
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            seed=self.random_state, ablation=self.ablation, layer=self.layer,
            hidden_size=self.hidden_size, repr_size=self.repr_size,
            dropout=self.dropout, standardize=self.standardize)

    def _stratified_val_split(self, recs: list[Recording], y: np.ndarray):
        if not (0.0 < self.validation_fraction < 0.5):
            raise ContractError(
                f"validation_fraction must be in (0, 0.5), "
                f"got {self.validation_fraction}")
        rng = np.random.default_rng(self.random_state)
        val_idx: list[int] = []
        for label in (0, 1):
            idx = np.flatnonzero(y == label)
            rng.shuffle(idx)
            take = max(1, int(round(len(idx) * self.validation_fraction)))
            if take >= len(idx):
                raise ContractError(
                    f"class {label} too small ({len(idx)} recordings) to "
                    "carve a validation split; pass validation= explicitly")
            val_idx.extend(idx[:take])
        val_set = set(val_idx)
        train_recs = [r for i, r in enumerate(recs) if i not in val_set]
        val_recs = [recs[i] for i in sorted(val_set)]
        return train_recs, val_recs

    def fit(self, X, y, validation=None):
        """Train on (X, y); ``validation`` is an optional (X_val, y_val)
        pair used for early stopping instead of the internal split."""
        recs = coerce_dataset(X, self.layer)
        y = check_labels(y, len(recs))
        for rec, label in zip(recs, y):
            rec.label = int(label)
        if validation is not None:
            X_val, y_val = validation
            val_recs = coerce_dataset(X_val, self.layer)
            y_val = check_labels(y_val, len(val_recs))
            for rec, label in zip(val_recs, y_val):
                rec.label = int(label)
            train_recs = recs
        else:
            train_recs, val_recs = self._stratified_val_split(recs, y)
        result = train(train_recs, val_recs, self._config())
        self.model_ = result.model
        self.scaler_ = result.scaler
        self.history_ = result.history
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = recs[0].segments.shape[2]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ContractError("estimator is not fitted; call fit first")

    def _prepare(self, X) -> list[Recording]:
        recs = coerce_dataset(X, self.layer)
        if self.scaler_ is not None:
            recs = self.scaler_.transform(recs)
        return recs

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        recs = self._prepare(X)
        probs = []
        for off in range(0, len(recs), 64):
            _, outputs = self.model_.forward(
                [r.as_input() for r in recs[off:off + 64]])
            probs.extend(out.probs for out in outputs)
        return np.stack(probs)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        # argmax with the deterministic tie rule: exact ties go to class 0
        return (proba[:, 1] > proba[:, 0]).astype(int)

    def score_report(self, X, y) -> dict:
        """Full metric set (accuracy, F1, macro-F1, confusion counts)."""
        self._check_fitted()
        recs = self._prepare(X)
        y = check_labels(y, len(recs))
        for rec, label in zip(recs, y):
            rec.label = int(label)
        return evaluate(self.model_, recs)
