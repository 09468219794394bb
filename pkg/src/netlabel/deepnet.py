"""Two-layer ReLU embedding network with a wide-and-deep softmax head.

The network is trained on labeled nodes only, by SGD on the squared loss
between the softmax output and the one-hot target.  After training, the
second hidden layer provides a frozen per-node embedding for the factor
model, and the head weights seed the corresponding factor weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoTrainingLabels
from .network import DatasetSplit, PartiallyLabeledNetwork


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    minibatch: int = 32
    seed: int = 0


@dataclass
class DeepNet:
    W1: np.ndarray         # (H1, D)
    b1: np.ndarray         # (H1,)
    W2: np.ndarray         # (H2, H1)
    b2: np.ndarray         # (H2,)
    head_wide: np.ndarray  # (C, D) softmax head over raw features
    head_deep: np.ndarray  # (C, H2) softmax head over the embedding

    @classmethod
    def init(
        cls,
        num_categories: int,
        num_features: int,
        hidden1: int = 200,
        hidden2: int = 100,
        seed: int = 0,
    ) -> "DeepNet":
        rng = np.random.default_rng(seed)

        def uniform(rows, cols):
            bound = 1.0 / np.sqrt(max(cols, 1))
            return rng.uniform(-bound, bound, (rows, cols))

        return cls(
            W1=uniform(hidden1, num_features),
            b1=np.zeros(hidden1),
            W2=uniform(hidden2, hidden1),
            b2=np.zeros(hidden2),
            head_wide=uniform(num_categories, num_features),
            head_deep=uniform(num_categories, hidden2),
        )

    @property
    def embed_dim(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "DeepNet":
        return DeepNet(
            self.W1.copy(), self.b1.copy(), self.W2.copy(),
            self.b2.copy(), self.head_wide.copy(), self.head_deep.copy(),
        )

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Hidden activations (h1, h2) for one feature vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.W1.shape[1],):
            raise DimensionMismatch(
                f"input has shape {x.shape}, expected ({self.W1.shape[1]},)"
            )
        h1 = np.maximum(self.W1 @ x + self.b1, 0.0)
        h2 = np.maximum(self.W2 @ h1 + self.b2, 0.0)
        return h1, h2

    def forward_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z1 = X @ self.W1.T + self.b1
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ self.W2.T + self.b2
        h2 = np.maximum(z2, 0.0)
        return h1, h2

    def head_probabilities(self, X: np.ndarray) -> np.ndarray:
        _, h2 = self.forward_batch(X)
        logits = X @ self.head_wide.T + h2 @ self.head_deep.T
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs


def squared_loss(deep: DeepNet, X: np.ndarray, targets: np.ndarray) -> float:
    """Mean over rows of the squared distance between softmax and one-hot."""
    probs = deep.head_probabilities(X)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(targets)), targets] = 1.0
    return float(((probs - onehot) ** 2).sum(axis=1).mean())


def loss_and_gradients(deep: DeepNet, X: np.ndarray, targets: np.ndarray):
    """Squared loss on a batch and its gradients for every weight array."""
    n = X.shape[0]
    z1 = X @ deep.W1.T + deep.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ deep.W2.T + deep.b2
    h2 = np.maximum(z2, 0.0)
    logits = X @ deep.head_wide.T + h2 @ deep.head_deep.T
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), targets] = 1.0

    loss = float(((probs - onehot) ** 2).sum(axis=1).mean())
    d_probs = 2.0 * (probs - onehot) / n
    d_logits = probs * (d_probs - (d_probs * probs).sum(axis=1, keepdims=True))
    d_h2 = d_logits @ deep.head_deep
    d_z2 = d_h2 * (z2 > 0)
    d_h1 = d_z2 @ deep.W2
    d_z1 = d_h1 * (z1 > 0)
    grads = {
        "head_wide": d_logits.T @ X,
        "head_deep": d_logits.T @ h2,
        "W2": d_z2.T @ h1,
        "b2": d_z2.sum(axis=0),
        "W1": d_z1.T @ X,
        "b1": d_z1.sum(axis=0),
    }
    return loss, grads


def train_wide_deep(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    sgd: SgdConfig | None = None,
    hidden: tuple[int, int] = (200, 100),
) -> DeepNet:
    """SGD training on training-split labels; returns the best-validation epoch.

    Only training and validation labels are ever read.  With a fixed seed the
    result is bit-reproducible.
    """
    sgd = sgd or SgdConfig()
    train_nodes = sorted(split.train)
    if not train_nodes:
        raise NoTrainingLabels("deep training requires labeled training nodes")
    val_nodes = sorted(split.validation)
    X_train = net.features[train_nodes]
    y_train = np.asarray([net.labels[i] for i in train_nodes])
    X_val = net.features[val_nodes] if val_nodes else None
    y_val = np.asarray([net.labels[i] for i in val_nodes]) if val_nodes else None

    deep = DeepNet.init(
        net.num_categories, net.num_features, hidden[0], hidden[1], sgd.seed
    )
    rng = np.random.default_rng(sgd.seed)
    best = deep.copy()
    best_acc = -1.0
    for _ in range(sgd.epochs):
        order = rng.permutation(len(train_nodes))
        for start in range(0, len(order), sgd.minibatch):
            batch = order[start : start + sgd.minibatch]
            _, grads = loss_and_gradients(deep, X_train[batch], y_train[batch])
            for name, grad in grads.items():
                getattr(deep, name)[...] -= sgd.learning_rate * grad
        if X_val is not None and len(X_val):
            acc = float(
                (deep.head_probabilities(X_val).argmax(axis=1) == y_val).mean()
            )
        else:
            acc = float(
                (deep.head_probabilities(X_train).argmax(axis=1) == y_train).mean()
            )
        if acc > best_acc:
            best_acc = acc
            best = deep.copy()
    return best


def embed_all(deep: DeepNet, net: PartiallyLabeledNetwork) -> np.ndarray:
    """Frozen (N, H2) embedding matrix, one row per node."""
    _, h2 = deep.forward_batch(net.features)
    h2.flags.writeable = False
    return h2
