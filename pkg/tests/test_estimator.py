"""Estimator facade: sklearn API contract (get_params/set_params/clone),
input coercion, and fit/predict behavior on separable synthetic data."""

import numpy as np
import pytest
from sklearn.base import clone

from dstcnet.errors import ContractError
from dstcnet.estimator import DstcNetClassifier
from dstcnet.feature_store import FeatureTensor
from dstcnet.validation import coerce_dataset


def separable_dataset(rng, n=16, m=2, t=5, f=4, shift=2.5):
    X, y = [], []
    for i in range(n):
        label = i % 2
        segs = rng.standard_normal((m, t, f))
        if label:
            segs[:, :, 0] += shift
        X.append(segs)
        y.append(label)
    return X, np.array(y)


def fast_estimator(**kw):
    base = dict(hidden_size=6, repr_size=6, learning_rate=3e-3, batch_size=8,
                max_epochs=25, patience=8, validation_fraction=0.25,
                random_state=0)
    base.update(kw)
    return DstcNetClassifier(**base)


def test_get_set_params_roundtrip():
    est = fast_estimator(layer=3, ablation="ista_only")
    params = est.get_params()
    assert params["layer"] == 3
    assert params["ablation"] == "ista_only"
    est2 = DstcNetClassifier().set_params(**params)
    assert est2.get_params() == params


def test_clone_is_unfitted_copy():
    rng = np.random.default_rng(0)
    X, y = separable_dataset(rng)
    est = fast_estimator().fit(X, y)
    fresh = clone(est)
    assert fresh.get_params() == est.get_params()
    assert hasattr(est, "model_") and not hasattr(fresh, "model_")


def test_fit_predict_separable():
    rng = np.random.default_rng(1)
    X, y = separable_dataset(rng, n=24)
    est = fast_estimator().fit(X, y)
    preds = est.predict(X)
    assert preds.shape == (24,)
    assert (preds == y).mean() >= 0.9
    proba = est.predict_proba(X)
    assert proba.shape == (24, 2)
    assert np.abs(proba.sum(axis=1) - 1.0).max() < 1e-9
    assert est.score(X, y) == (preds == y).mean()


def test_fit_is_deterministic_in_random_state():
    rng = np.random.default_rng(2)
    X, y = separable_dataset(rng, n=16)
    p1 = fast_estimator(random_state=7).fit(X, y).predict_proba(X)
    p2 = fast_estimator(random_state=7).fit(X, y).predict_proba(X)
    assert np.array_equal(p1, p2)


def test_explicit_validation_set():
    rng = np.random.default_rng(3)
    X, y = separable_dataset(rng, n=16)
    Xv, yv = separable_dataset(rng, n=8)
    est = fast_estimator().fit(X, y, validation=(Xv, yv))
    assert len(est.history_["val_accuracy"]) >= 1
    assert est.history_["best_val_accuracy"] >= 0.5


def test_accepts_feature_tensors_and_pairs():
    rng = np.random.default_rng(4)
    tensors, pairs, y = [], [], []
    for i in range(12):
        label = i % 2
        values = rng.standard_normal((2, 3, 6, 8)).astype(np.float32)
        if label:
            values[:, :, :, 0] += 2.5
        valid = np.array([6, 4, 6])
        tensors.append(FeatureTensor(values=values, valid_frames=valid,
                                     recording_id=f"r{i}", label=None))
        pairs.append((values[1].astype(np.float64), valid))
        y.append(label)
    est = fast_estimator(layer=2).fit(tensors, y)
    preds_t = est.predict(tensors)
    preds_p = est.predict(pairs)  # pairs = layer-2 slices of the tensors
    assert np.array_equal(preds_t, preds_p)


def test_input_validation_errors():
    rng = np.random.default_rng(5)
    X, y = separable_dataset(rng, n=8)
    with pytest.raises(ContractError):
        fast_estimator().fit(X, y[:4])
    with pytest.raises(ContractError):
        fast_estimator().fit(X, np.array([0, 1, 2, 0, 1, 0, 1, 0]))
    with pytest.raises(ContractError):
        fast_estimator().fit([], [])
    with pytest.raises(ContractError):
        coerce_dataset([np.zeros((2, 3))], layer=1)
    with pytest.raises(ContractError):
        coerce_dataset([(np.zeros((2, 3, 4)), np.array([5, 2]))], layer=1)
    with pytest.raises(ContractError):
        fast_estimator().predict(X)  # not fitted


def test_ablation_flag_changes_architecture():
    rng = np.random.default_rng(6)
    X, y = separable_dataset(rng, n=16)
    est = fast_estimator(ablation="baseline").fit(X, y)
    names = set(est.model_.named_parameters())
    assert names == {"classifier.w", "classifier.b"}
