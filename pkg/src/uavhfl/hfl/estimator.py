"""Scikit-learn compatible front end to the hierarchical training loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from ..analytics import success_probabilities
from ..geometry import NetworkParams, associate, sample_topology
from .data import Dataset, partition_noniid
from .mlp import MLPShape, logits
from .training import TrainingConfig, train


class UnbiasedHFLClassifier(ClassifierMixin, BaseEstimator):
    """Train an MLP by simulated federated learning over a random UAV network.

    ``fit`` lays out devices and UAVs, associates them, computes link success
    probabilities, splits the samples across devices (label-skewed) and runs
    the selected aggregation variant. The fitted global model is used by
    ``predict``.
    """

    def __init__(self, variant="unbiased-hfl", n_devices=50, n_uavs=10, labels_per_device=2,
                 hidden=64, learning_rate=0.01, batch_size=64, local_period=2,
                 global_period=2, n_iterations=500, channel="montecarlo",
                 probability_floor=1e-3, network=None, random_state=0):
        self.variant = variant
        self.n_devices = n_devices
        self.n_uavs = n_uavs
        self.labels_per_device = labels_per_device
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.local_period = local_period
        self.global_period = global_period
        self.n_iterations = n_iterations
        self.channel = channel
        self.probability_floor = probability_floor
        self.network = network
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        need = self.n_devices * self.labels_per_device
        if X.shape[0] < need:
            raise ValueError(f"n_samples={X.shape[0]} is fewer than the {need} data shards "
                             "required by n_devices * labels_per_device")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        seed = int(self.random_state or 0)
        net = self.network or NetworkParams(n_devices=self.n_devices, n_uavs=self.n_uavs)
        topo = sample_topology(self.n_devices, self.n_uavs, net.radius, net.height, seed)
        assignment = associate(topo, net.channel, seed)
        probs = success_probabilities(topo, assignment, net, floor=self.probability_floor)
        data = Dataset(X, y_enc)
        partition = partition_noniid(y_enc, self.n_devices, self.labels_per_device,
                                     np.random.default_rng(seed))
        config = TrainingConfig(
            learning_rate=self.learning_rate, local_period=self.local_period,
            global_period=self.global_period, total_iterations=self.n_iterations,
            batch_size=self.batch_size, variant=self.variant, seed=seed,
            channel=self.channel, hidden=self.hidden,
            probability_floor=self.probability_floor)
        self.trace_ = train(topo, assignment, probs, partition, data, config, net)
        self.shape_ = MLPShape(X.shape[1], self.hidden, len(self.classes_))
        self.coef_ = self.trace_.final_params
        self.topology_ = topo
        self.assignment_ = assignment
        self.success_probabilities_ = probs
        return self

    def _logits(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return logits(self.shape_, self.coef_, X)

    def decision_function(self, X):
        """Class scores; a single margin column for two classes."""
        z = self._logits(X)
        return z[:, 1] - z[:, 0] if z.shape[1] == 2 else z

    def predict_proba(self, X):
        z = self._logits(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        z = self._logits(X)
        return self.classes_[np.argmax(z, axis=1)]
