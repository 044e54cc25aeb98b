"""Scikit-learn facade over the simulated federated training pipeline."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .embedding import derive_params, embed_matrix
from .experiment import ExperimentConfig, run_pipeline

__all__ = ["FederatedKernelClassifier"]


class FederatedKernelClassifier(ClassifierMixin, BaseEstimator):
    """Kernel classifier trained by simulated federated gradient descent.

    ``fit`` shards the data non-IID across simulated edge clients, embeds
    it with shared-seed Fourier features, and trains a linear model under
    the chosen aggregation scheme and network model.  The accuracy trace
    against the simulated wall clock is exposed as ``trace_``.

    Data is trimmed to a whole number of equal shards; the per-iteration
    accuracy in ``trace_`` is measured on the (trimmed) training set.

    Parameters
    ----------
    scheme : "coded", "naive", or "greedy" aggregation at the server.
    n_clients : number of simulated edge clients.
    epochs : passes over the training data.
    batches_per_epoch : global mini-batch steps per epoch.
    q, sigma : feature-map dimension and kernel bandwidth.
    lr, lr_decay, lr_decay_epochs, weight_decay : step-size schedule.
    delta : server redundancy as a fraction of the global mini-batch.
    psi : fraction of clients the greedy scheme abandons.
    random_state : master seed for every stochastic component.
    """

    def __init__(
        self,
        scheme: str = "coded",
        n_clients: int = 5,
        epochs: int = 30,
        batches_per_epoch: int = 1,
        q: int = 256,
        sigma: float = 5.0,
        lr: float = 6.0,
        lr_decay: float = 0.8,
        lr_decay_epochs: tuple[int, ...] = (),
        weight_decay: float = 0.0,
        delta: float = 0.1,
        psi: float = 0.1,
        random_state: int = 0,
    ):
        self.scheme = scheme
        self.n_clients = n_clients
        self.epochs = epochs
        self.batches_per_epoch = batches_per_epoch
        self.q = q
        self.sigma = sigma
        self.lr = lr
        self.lr_decay = lr_decay
        self.lr_decay_epochs = lr_decay_epochs
        self.weight_decay = weight_decay
        self.delta = delta
        self.psi = psi
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]

        group = self.n_clients * self.batches_per_epoch
        keep = (X.shape[0] // group) * group
        if keep == 0:
            raise ValueError(
                f"need at least {group} samples for {self.n_clients} clients "
                f"x {self.batches_per_epoch} batches"
            )
        X, y = X[:keep], y[:keep]
        onehot = (y[:, None] == self.classes_[None, :]).astype(np.float64)

        m = keep // self.batches_per_epoch
        config = ExperimentConfig(
            n_clients=self.n_clients,
            q=self.q,
            sigma=self.sigma,
            rff_seed=self.random_state,
            m=m,
            delta=self.delta,
            psi=self.psi,
            epochs=self.epochs,
            lr=self.lr,
            lr_decay=self.lr_decay,
            lr_decay_epochs=tuple(self.lr_decay_epochs),
            weight_decay=self.weight_decay,
            schemes=(self.scheme,),
            master_seed=self.random_state,
        )
        result = run_pipeline(config, X, onehot, X, onehot)
        trace = result.traces[0]
        self.theta_ = trace.final_theta
        self.trace_ = trace
        self.allocation_ = result.allocation
        self.params_ = derive_params(
            self.random_state, self.n_features_in_, self.q, self.sigma
        )
        return self

    def decision_function(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        embedded = embed_matrix(
            self.params_, X, np.zeros((X.shape[0], len(self.classes_)))
        )
        return embedded.features @ self.theta_

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]
