"""scikit-learn style wrapper around the sequence regressor.

``X`` is a list of feature stacks (each ``(N, T, D_in)``), ``y`` a list of
target sequences (each ``(T_target, D_out)``). Targets may be misaligned with
their inputs when ``loss="softdtw"``.

>>> reg = SequenceRegressor(loss="softdtw", gamma=0.1, epochs=5)   # doctest: +SKIP
>>> reg.fit(stacks, targets).predict(stacks[:1])                    # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import model
from .evaluation import evaluate_pairs
from .seqcore import UsageError, check_sequence
from .trainer import TrainConfig, fit_loop


def check_stacks(X, n_layers=None, d_in=None):
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    stacks = [model.check_stack(x, n_layers, d_in) for x in X]
    if not stacks:
        raise UsageError("no feature stacks given")
    if n_layers is None:
        n_layers, d_in = stacks[0].shape[0], stacks[0].shape[2]
        for s in stacks:
            if (s.shape[0], s.shape[2]) != (n_layers, d_in):
                raise UsageError("all feature stacks must share N and D_in")
    return stacks


def check_targets(y, n):
    targets = [check_sequence(t, "target") for t in y]
    if len(targets) != n:
        raise UsageError(f"{n} inputs but {len(targets)} targets")
    if len({t.shape[1] for t in targets}) != 1:
        raise UsageError("all targets must share D_out")
    return targets


class SequenceRegressor(RegressorMixin, BaseEstimator):
    """Fusion + downsampling conv + bidirectional Elman RNN regressor.

    Parameters
    ----------
    loss : {"softdtw", "l1", "l2"}
        Training loss. ``l1``/``l2`` need frame-aligned pairs.
    gamma : float
        Soft-DTW smoothing, used for the softdtw loss and for validation-based
        epoch selection.
    epochs, learning_rate, optimizer, clip_norm
        Optimisation settings; one step per sequence.
    hidden, conv_channels, rnn_layers : int
        Network sizes.
    random_state : int
        Seeds both initialisation and the per-epoch shuffling.

    Attributes
    ----------
    params_ : RegressorParams
        Parameters from the epoch with the lowest validation soft-DTW.
    report_ : TrainReport
    fusion_weights_ : ndarray of shape (N,)
    """

    def __init__(self, loss="softdtw", gamma=1.0, cost="euclidean", epochs=30, learning_rate=1e-3,
                 optimizer="adam", clip_norm=5.0, hidden=16, conv_channels=16, rnn_layers=1,
                 random_state=0):
        self.loss = loss
        self.gamma = gamma
        self.cost = cost
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.clip_norm = clip_norm
        self.hidden = hidden
        self.conv_channels = conv_channels
        self.rnn_layers = rnn_layers
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(loss=self.loss, gamma=self.gamma, cost=self.cost, epochs=self.epochs,
                           lr=self.learning_rate, optimizer=self.optimizer, seed=self.random_state,
                           clip_norm=self.clip_norm)

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on ``(X, y)``; model selection uses ``(X_val, y_val)`` or the training data."""
        cfg = self._train_config()
        stacks = check_stacks(X)
        targets = check_targets(y, len(stacks))
        n_layers, d_in = stacks[0].shape[0], stacks[0].shape[2]
        if X_val is None:
            val = list(zip(stacks, targets))
        else:
            val_stacks = check_stacks(X_val, n_layers, d_in)
            val = list(zip(val_stacks, check_targets(y_val, len(val_stacks))))
        shape = model.ShapeConfig(n_layers=n_layers, d_in=d_in, hidden=self.hidden,
                                  d_out=targets[0].shape[1], conv_channels=self.conv_channels,
                                  rnn_layers=self.rnn_layers)
        init = model.init_params(self.random_state, shape)
        self.params_, self.report_ = fit_loop(init, list(zip(stacks, targets)), val, cfg)
        self.n_features_in_ = d_in
        self.n_layers_in_ = n_layers
        return self

    @property
    def fusion_weights_(self):
        check_is_fitted(self, "params_")
        return self.params_.fusion_weights

    def predict(self, X):
        """Predicted sequence for each stack, ``T // 2`` frames each."""
        check_is_fitted(self, "params_")
        stacks = check_stacks(X, self.n_layers_in_, self.n_features_in_)
        return [model.predict(self.params_, s) for s in stacks]

    def evaluate(self, X, y):
        check_is_fitted(self, "params_")
        stacks = check_stacks(X, self.n_layers_in_, self.n_features_in_)
        return evaluate_pairs(lambda s: model.predict(self.params_, s),
                              list(zip(stacks, check_targets(y, len(stacks)))))

    def score(self, X, y, sample_weight=None):
        """Negative mean DTW score, so that larger is better."""
        if sample_weight is not None:
            raise UsageError("sample_weight is not supported")
        return -self.evaluate(X, y).dtw_score

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.required = True
        tags.input_tags.two_d_array = False
        return tags
