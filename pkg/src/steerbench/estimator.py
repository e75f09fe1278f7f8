"""scikit-learn style wrapper around the trainer and inference session."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .network import build_dave2
from .session import InferenceSession
from .training import DatasetIndex, DatasetRecord, TrainConfig, train
from .validation import check_angle_array, check_frame_array


class SteeringRegressor(BaseEstimator, RegressorMixin):
    """Maps camera frames to steering angles in degrees.

    fit(X, y) trains with plain SGD on MSE; predict(X) runs the trained
    network.  X is (n, h, w, 3) float frames in [0, 1] (or uint8, or flat
    rows); y is angles in degrees.  network=None uses the full-size
    architecture; pass a smaller NetworkSpec for quick experiments.
    """

    def __init__(self, network=None, steps=2000, batch_size=100, learning_rate=1e-4,
                 sampler="uniform", random_state=0, workers=1):
        self.network = network
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.sampler = sampler
        self.random_state = random_state
        self.workers = workers

    def _spec(self):
        return self.network if self.network is not None else build_dave2()

    def fit(self, X, y):
        spec = self._spec()
        X = check_frame_array(X, spec.input_shape)
        y = check_angle_array(y, X.shape[0])
        index = DatasetIndex(train=[DatasetRecord(frame=f, angle=a) for f, a in zip(X, y)])
        config = TrainConfig(batch_size=self.batch_size, steps=self.steps,
                             learning_rate=self.learning_rate, seed=self.random_state,
                             sampler=self.sampler)
        result = train(index, config, spec=spec)
        self.spec_ = spec
        self.store_ = result.store
        self.loss_history_ = result.loss_history
        self.n_features_in_ = int(np.prod(spec.input_shape))
        return self

    def predict(self, X):
        if not hasattr(self, "store_"):
            raise NotFittedError("this SteeringRegressor is not fitted; call fit first")
        X = check_frame_array(X, self.spec_.input_shape)
        with InferenceSession(self.spec_, self.store_, worker_count=self.workers) as sess:
            return sess.infer_many(X)
