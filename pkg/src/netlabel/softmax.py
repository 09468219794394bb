"""Numerically stable softmax utilities and a deterministic ascent routine.

``ascend`` maximizes a concave objective by gradient ascent with Armijo
backtracking and step growth; it is monotone by construction, which the
regression-style learners rely on.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def ascend(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-6,
    initial_step: float = 1e-2,
) -> tuple[np.ndarray, bool]:
    """Backtracking gradient ascent; returns (argmax estimate, converged).

    Accepts a step when it improves the objective by at least the Armijo
    fraction of the predicted gain, doubling the step after success and
    halving after failure.  Iterates never decrease the objective.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    value, grad = value_and_grad(x)
    step = initial_step
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < tol:
            return x, True
        sq = float(grad @ grad)
        while step > 1e-18:
            candidate = x + step * grad
            new_value, new_grad = value_and_grad(candidate)
            if new_value >= value + 1e-4 * step * sq:
                x, value, grad = candidate, new_value, new_grad
                step = min(step * 2.0, 1e6)
                break
            step *= 0.5
        else:
            # no float-representable step improves the objective
            return x, False
    return x, False


def multinomial_value_and_grad(
    weights: np.ndarray,
    features: np.ndarray,
    targets: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Log-likelihood (sum over rows) and gradient for shared-feature softmax.

    ``weights`` is (C, D); logits are ``features @ weights.T``.
    """
    logits = features @ weights.T
    logp = log_softmax(logits)
    n = len(targets)
    value = float(logp[np.arange(n), targets].sum()) - 0.5 * l2 * float(
        (weights**2).sum()
    )
    residual = -np.exp(logp)
    residual[np.arange(n), targets] += 1.0
    grad = residual.T @ features - l2 * weights
    return value, grad


def fit_multinomial(
    features: np.ndarray,
    targets: np.ndarray,
    num_categories: int,
    l2: float = 0.0,
    init: np.ndarray | None = None,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> np.ndarray:
    """Maximum-likelihood multinomial regression weights, deterministic."""
    d = features.shape[1]
    w0 = np.zeros((num_categories, d)) if init is None else np.asarray(init, float)

    def value_and_grad(flat):
        value, grad = multinomial_value_and_grad(
            flat.reshape(num_categories, d), features, targets, l2
        )
        return value, grad.ravel()

    flat, _ = ascend(value_and_grad, w0.ravel(), max_iter=max_iter, tol=tol)
    return flat.reshape(num_categories, d)
