import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from flowcast.classifier import FlowSizeClassifier
from flowcast.encoding import FirstPacketFeaturizer, label
from flowcast.tracegen import TraceConfig, generate


def toy_data(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 4))
    y = np.where(X[:, 0] > 0.5, 5, 1)
    return X, y


def small_clf(**kw):
    params = dict(hidden_layers=(16,), dropout=0.0, epochs=30, seed=0)
    params.update(kw)
    return FlowSizeClassifier(**params)


def test_fit_predict_separable():
    X, y = toy_data()
    clf = small_clf().fit(X, y)
    assert clf.score(X, y) >= 0.95
    assert set(clf.predict(X)) <= {1, 5}


def test_classes_inferred_from_labels():
    X, y = toy_data()
    clf = small_clf().fit(X, y)
    assert list(clf.classes_) == [1, 5]
    assert clf.network_.dims == [4, 16, 2]


def test_not_fitted_error():
    with pytest.raises(NotFittedError):
        FlowSizeClassifier().predict(np.zeros((1, 4)))


def test_get_set_params_and_clone():
    clf = FlowSizeClassifier(hidden_layers=(10, 10), dropout=0.1, epochs=2, seed=9)
    params = clf.get_params()
    assert params["hidden_layers"] == (10, 10)
    assert params["seed"] == 9
    cloned = clone(clf)
    assert cloned.get_params() == params
    clf.set_params(epochs=4)
    assert clf.epochs == 4


def test_fit_is_deterministic_per_seed():
    X, y = toy_data()
    a = small_clf(epochs=5).fit(X, y)
    b = small_clf(epochs=5).fit(X, y)
    assert a.network_ == b.network_


def test_partial_fit_requires_classes_first():
    X, y = toy_data()
    clf = small_clf()
    with pytest.raises(ValueError):
        clf.partial_fit(X, y)
    clf.partial_fit(X, y, classes=[1, 2, 3, 4, 5])
    for _ in range(20):
        clf.partial_fit(X, y)
    assert clf.score(X, y) >= 0.9


def test_partial_fit_rejects_undeclared_labels():
    X, y = toy_data()
    clf = small_clf()
    clf.partial_fit(X, y, classes=[1, 5])
    with pytest.raises(ValueError):
        clf.partial_fit(X, np.full(len(y), 3))


def test_predict_proba_rows_sum_to_one():
    X, y = toy_data()
    clf = small_clf(epochs=3).fit(X, y)
    proba = clf.predict_proba(X)
    assert proba.shape == (len(X), 2)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert np.array_equal(clf.classes_[np.argmax(proba, axis=1)], clf.predict(X))


def test_feature_count_mismatch_rejected():
    X, y = toy_data()
    clf = small_clf(epochs=1).fit(X, y)
    with pytest.raises(ValueError):
        clf.predict(np.zeros((2, 7)))


def test_pipeline_with_featurizer():
    records = generate(TraceConfig(n_flows=600, seed=2, signal=1.0))
    packets = [r.first for r in records]
    y = np.array([label(r.packet_count) for r in records])
    pipe = make_pipeline(
        FirstPacketFeaturizer(),
        FlowSizeClassifier(hidden_layers=(32,), dropout=0.0, epochs=20, seed=0),
    )
    pipe.fit(packets, y)
    assert pipe.score(packets, y) >= 0.9
