import numpy as np
import pytest
from sklearn.exceptions import NotFittedError
from sklearn.utils.estimator_checks import check_estimator

from uavhfl.hfl.estimator import UnbiasedHFLClassifier
from uavhfl.hfl.data import synthetic_blobs


def _small(**kw):
    base = dict(n_devices=4, n_uavs=2, n_iterations=100, hidden=16, labels_per_device=2,
                learning_rate=0.1, channel="bernoulli")
    base.update(kw)
    return UnbiasedHFLClassifier(**base)


def test_sklearn_estimator_contract():
    check_estimator(_small())


def test_fit_predict_on_blobs():
    data = synthetic_blobs(1000, 4, 8, 2.0, 1.0, seed=0)
    labels = np.array(["a", "b", "c", "d"])[data.y]
    clf = _small(n_devices=10, n_uavs=3, n_iterations=200).fit(data.X, labels)
    assert set(clf.predict(data.X)) <= set(labels)
    assert clf.score(data.X, labels) > 0.8
    proba = clf.predict_proba(data.X[:5])
    assert proba.shape == (5, 4) and np.allclose(proba.sum(axis=1), 1)
    assert clf.trace_.iteration[-1] == 200


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        _small().predict(np.zeros((2, 3)))
