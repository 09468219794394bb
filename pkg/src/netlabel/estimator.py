"""Scikit-learn flavored front end for the factor model.

The estimator is transductive: ``fit`` takes a
:class:`~netlabel.network.PartiallyLabeledNetwork` (features, edges, and the
known labels travel together), learns the factor weights with the configured
learner, and ``predict`` labels every node of the fitted (or a compatible
new) network.  Hyperparameters follow scikit-learn conventions — stored
verbatim in ``__init__``, validated in ``fit`` — so ``get_params``,
``set_params``, and ``clone`` compose with the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .deepnet import SgdConfig, embed_all, train_wide_deep
from .learning import (
    LearnerConfig,
    default_predict_method,
    predict as predict_config,
    train,
)
from .network import DatasetSplit, PartiallyLabeledNetwork, split_labels
from .validation import check_fitted, check_network


class FactorGraphClassifier(BaseEstimator, ClassifierMixin):
    """Semi-supervised node classifier over a partially labeled network.

    Parameters mirror :class:`~netlabel.learning.LearnerConfig` plus the
    optional embedding network.  ``learner`` is one of ``"lbp"``, ``"sr"``,
    ``"mh"``, ``"mh+"``.
    """

    def __init__(
        self,
        learner: str = "mh+",
        learning_rate: float | None = None,
        batch_size: int = 5000,
        eval_every: int = 1000,
        patience: int = 20,
        max_iter: int = 10_000,
        bp_sweeps: int = 50,
        bp_iterations: int = 100,
        l2: float = 0.0,
        use_deep: bool = False,
        deep_hidden: tuple[int, int] = (200, 100),
        deep_learning_rate: float = 0.01,
        deep_epochs: int = 100,
        deep_minibatch: int = 32,
        split: tuple[float, float, float] = (0.5, 0.1, 0.4),
        predict_steps: int | None = None,
        workers: int = 1,
        seed: int = 0,
    ):
        self.learner = learner
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.eval_every = eval_every
        self.patience = patience
        self.max_iter = max_iter
        self.bp_sweeps = bp_sweeps
        self.bp_iterations = bp_iterations
        self.l2 = l2
        self.use_deep = use_deep
        self.deep_hidden = deep_hidden
        self.deep_learning_rate = deep_learning_rate
        self.deep_epochs = deep_epochs
        self.deep_minibatch = deep_minibatch
        self.split = split
        self.predict_steps = predict_steps
        self.workers = workers
        self.seed = seed

    def _config(self) -> LearnerConfig:
        return LearnerConfig(
            learner=self.learner,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            eval_every=self.eval_every,
            patience=self.patience,
            max_iterations=self.max_iter,
            bp_sweeps=self.bp_sweeps,
            bp_iterations=self.bp_iterations,
            seed=self.seed,
            workers=self.workers,
            l2=self.l2,
        )

    def fit(self, network: PartiallyLabeledNetwork, y=None, split: DatasetSplit | None = None):
        """Learn factor weights from the network's train/validation labels.

        ``y`` is accepted for scikit-learn signature compatibility and must be
        None: labels live in the network.  ``split`` overrides the internal
        label split (otherwise ``self.split`` fractions with ``self.seed``).
        """
        if y is not None:
            raise ValueError("labels are carried by the network; pass y=None")
        check_network(network)
        config = self._config()
        if split is None:
            split = split_labels(network, self.split, self.seed)
        self.split_ = split

        init_attr = init_deep = None
        if self.use_deep:
            sgd = SgdConfig(
                learning_rate=self.deep_learning_rate,
                epochs=self.deep_epochs,
                minibatch=self.deep_minibatch,
                seed=self.seed,
            )
            self.deep_ = train_wide_deep(network, split, sgd, self.deep_hidden)
            self.embeddings_ = embed_all(self.deep_, network)
            init_attr, init_deep = self.deep_.head_wide, self.deep_.head_deep
        else:
            self.deep_ = None
            self.embeddings_ = None

        self.run_ = train(
            network, split, config, self.embeddings_,
            init_attr=init_attr, init_deep=init_deep,
        )
        self.params_ = self.run_.best_params
        self.network_ = network
        self.classes_ = np.asarray(network.category_names)
        self.history_ = self.run_.history
        self.stop_reason_ = self.run_.stop_reason
        return self

    def predict(self, network: PartiallyLabeledNetwork | None = None) -> np.ndarray:
        """Dense category ids for every node, known labels held fixed.

        On the fitted network the clamped labels are the train + validation
        partitions (test labels stay hidden); on a new network, its label map.
        Use ``classes_[ids]`` for the original label names.
        """
        check_fitted(self, "params_")
        if network is None:
            network = self.network_
            clamp = {
                i: network.labels[i]
                for i in (self.split_.train | self.split_.validation)
            }
            embeddings = self.embeddings_
        else:
            check_network(network)
            clamp = dict(network.labels)
            embeddings = (
                embed_all(self.deep_, network) if self.deep_ is not None else None
            )
        method = default_predict_method(self.learner)
        steps = self.predict_steps
        return predict_config(
            network,
            self.params_,
            embeddings,
            method=method,
            steps=steps,
            clamp=clamp,
            seed=self.seed,
            bp_sweeps=self.bp_sweeps,
        )

    def score(self, network: PartiallyLabeledNetwork | None = None, y=None) -> float:
        """Micro accuracy on the fitted network's test partition."""
        check_fitted(self, "params_")
        if network is not None and network is not self.network_:
            raise ValueError("score evaluates the fitted network's test partition")
        predicted = self.predict()
        test = sorted(self.split_.test)
        if not test:
            raise ValueError("the label split has an empty test partition")
        truth = np.asarray([self.network_.labels[i] for i in test])
        return float((predicted[test] == truth).mean())
