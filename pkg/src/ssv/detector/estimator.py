"""Estimator wrapper around the grid detector."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._util import check_feature_batch
from .net import TrainConfig, detect, load_weights, save_weights, train


class GridFaceDetector(BaseEstimator):
    """Face localiser over feature images.

    ``fit(X, y)`` takes byte feature images ``(n, H, W, 3)`` and one list of
    :class:`BBox` per image; ``predict(X)`` returns one list of
    :class:`Detection` per image.
    """

    def __init__(self, learning_rate=1e-3, momentum=0.9, weight_decay=5e-4, batch_size=64,
                 iterations=2000, seed=1, hflip=True, conf_threshold=0.25,
                 nms_threshold=0.4):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.iterations = iterations
        self.seed = seed
        self.hflip = hflip
        self.conf_threshold = conf_threshold
        self.nms_threshold = nms_threshold

    def _train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, momentum=self.momentum,
                           weight_decay=self.weight_decay, batch_size=self.batch_size,
                           iterations=self.iterations, seed=self.seed, hflip=self.hflip)

    def fit(self, X, y, log_path=None, callback=None):
        X = check_feature_batch(X)
        if len(y) != len(X):
            raise ValueError(f"{len(X)} images but {len(y)} target lists")
        self.net_, self.loss_curve_ = train(X, y, self._train_config(), log_path=log_path,
                                            callback=callback)
        return self

    def predict(self, X, conf_threshold=None):
        check_is_fitted(self, "net_")
        conf = self.conf_threshold if conf_threshold is None else conf_threshold
        return [detect(self.net_, f, conf, self.nms_threshold) for f in check_feature_batch(X)]

    def score(self, X, y):
        """TP rate at ``conf_threshold``."""
        from ..evalkit import roc_curve

        return roc_curve(self.predict(X), y, thresholds=(self.conf_threshold,))[0].tp_rate

    def save(self, path):
        check_is_fitted(self, "net_")
        return save_weights(self.net_, path)

    @classmethod
    def from_weights(cls, path, **params):
        est = cls(**params)
        est.net_ = load_weights(path)
        return est
