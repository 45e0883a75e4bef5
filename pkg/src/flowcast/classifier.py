"""scikit-learn estimator facade over the from-scratch network, so the
classifier drops into pipelines, grid searches, and cross-validation.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .nn import Network


class FlowSizeClassifier(ClassifierMixin, BaseEstimator):
    """Feed-forward size-class predictor with fit/partial_fit/predict.

    Parameters mirror the network defaults: three 50-unit ReLU hidden
    layers, 0.2 dropout, sigmoid outputs trained with normalized
    cross-entropy under Adadelta.  fit() runs `epochs` shuffled online
    passes; partial_fit() runs one pass per call for windowed training.
    """

    def __init__(self, hidden_layers=(50, 50, 50), hidden_activation="relu",
                 dropout=0.2, loss="cce", epochs=5, seed=0):
        self.hidden_layers = hidden_layers
        self.hidden_activation = hidden_activation
        self.dropout = dropout
        self.loss = loss
        self.epochs = epochs
        self.seed = seed

    def _validate(self, X, y=None, fitted=False):
        if y is not None:
            X, y = check_X_y(X, y, dtype=float)
            return X, y
        X = check_array(X, dtype=float)
        if fitted and X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected "
                             f"{self.n_features_in_}")
        return X

    def _init_net(self, n_features, classes):
        self.classes_ = np.asarray(classes)
        self.n_features_in_ = n_features
        dims = [n_features, *self.hidden_layers, len(self.classes_)]
        self.network_ = Network(dims, seed=self.seed,
                                hidden_activation=self.hidden_activation,
                                dropout=self.dropout, loss_mode=self.loss)
        self._rng = np.random.default_rng(self.seed)

    def _samples(self, X, y):
        index = {c: i for i, c in enumerate(self.classes_)}
        k = len(self.classes_)
        samples = []
        for row, cls in zip(X, y):
            t = np.zeros(k)
            t[index[cls]] = 1.0
            samples.append((row, t))
        return samples

    def fit(self, X, y):
        X, y = self._validate(X, y)
        self._init_net(X.shape[1], np.unique(y))
        samples = self._samples(X, y)
        for _ in range(self.epochs):
            self.network_.train_epoch(samples, self._rng)
        return self

    def partial_fit(self, X, y, classes=None):
        X, y = self._validate(X, y)
        if not hasattr(self, "network_"):
            if classes is None:
                raise ValueError("classes is required on the first partial_fit call")
            self._init_net(X.shape[1], np.sort(np.asarray(classes)))
        unknown = set(np.unique(y)) - set(self.classes_)
        if unknown:
            raise ValueError(f"labels outside declared classes: {sorted(unknown)}")
        self.network_.train_epoch(self._samples(X, y), self._rng)
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = self._validate(X, fitted=True)
        idx = np.argmax(self.network_.forward_batch(X), axis=1)
        return self.classes_[idx]

    def predict_proba(self, X):
        """Sigmoid outputs renormalized to sum to 1 per row (the same
        normalization the cross-entropy loss trains against)."""
        check_is_fitted(self, "network_")
        X = self._validate(X, fitted=True)
        q = np.clip(self.network_.forward_batch(X), 1e-7, 1.0)
        return q / q.sum(axis=1, keepdims=True)
