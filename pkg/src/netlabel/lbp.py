"""Loopy belief propagation over the pairwise model.

Sum-product estimates node and edge marginals (exact on trees); the same
message machinery with (max, +) decodes an approximate most-likely
configuration.  Messages live in log-domain, are max-normalized after every
update, and follow a synchronous flooding schedule with optional damping, so
one sweep is order-independent and can be computed with vectorized array ops.

Complexity per learning iteration is O(sweeps * (N*C + E*C^2)); the outer
gradient loop multiplies this by its own iteration count, which is what makes
this learner expensive on large graphs.

Clamping replaces a labeled node's unary row with a large negative constant
outside its label, which turns its outgoing messages into deltas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .factors import _symmetric_undirected, unary_log_potentials
from .network import PartiallyLabeledNetwork
from .params import ParameterVector, SufficientStatistics

NEG = -1e30


@dataclass
class MessageStore:
    """Per-edge message pairs: ``into_dst`` flows src -> dst, ``into_src`` back."""

    into_dst: np.ndarray  # (E, C)
    into_src: np.ndarray  # (E, C)
    residual: float = np.inf


@dataclass
class BeliefPropagationResult:
    node_marginals: np.ndarray          # (N, C), rows sum to 1
    edge_marginals: np.ndarray | None   # (E, C, C), oriented src -> dst
    beliefs: np.ndarray                 # (N, C) unnormalized log-beliefs
    converged: bool
    sweeps: int
    residual: float


def _clamped_unary(net, params, embeddings, clamp_labels, labels):
    unary = unary_log_potentials(net, params, embeddings).copy()
    if clamp_labels:
        if labels is None:
            labels = net.labels
        for node, cat in labels.items():
            keep = unary[node, cat]
            unary[node, :] = NEG
            unary[node, cat] = keep
    return unary


def _edge_matrices(params):
    return params.corr_directed, _symmetric_undirected(params)


def _logsumexp_mid(t):
    """logsumexp over axis 1 of an (E, C, C) tensor, NEG-safe."""
    m = t.max(axis=1)
    return m + np.log(np.exp(t - m[:, None, :]).sum(axis=1))


def _node_sums(n, c, src, dst, into_dst, into_src, out):
    for k in range(c):
        out[:, k] += np.bincount(dst, weights=into_dst[:, k], minlength=n)
        out[:, k] += np.bincount(src, weights=into_src[:, k], minlength=n)
    return out


def _propagate(net, params, unary, max_sweeps, tol, damping, use_max):
    n, c = unary.shape
    adj = net.adjacency
    src, dst, directed = adj.src, adj.dst, adj.is_directed
    e = len(src)
    gamma_d, gamma_u = _edge_matrices(params)

    store = MessageStore(np.zeros((e, c)), np.zeros((e, c)))
    if e == 0:
        store.residual = 0.0
        return store, unary.copy(), True, 0
    sweeps = 0
    converged = False
    for sweeps in range(1, max_sweeps + 1):
        beliefs = _node_sums(n, c, src, dst, store.into_dst, store.into_src, unary.copy())
        from_src = beliefs[src] - store.into_src   # cavity at src, per edge
        from_dst = beliefs[dst] - store.into_dst   # cavity at dst, per edge
        new_into_dst = np.empty_like(store.into_dst)
        new_into_src = np.empty_like(store.into_src)
        for mask, gamma in ((directed, gamma_d), (~directed, gamma_u)):
            if not mask.any():
                continue
            fwd = from_src[mask][:, :, None] + gamma[None, :, :]
            bwd = from_dst[mask][:, None, :] + gamma[None, :, :]
            if use_max:
                new_into_dst[mask] = fwd.max(axis=1)
                new_into_src[mask] = bwd.max(axis=2)
            else:
                new_into_dst[mask] = _logsumexp_mid(fwd)
                new_into_src[mask] = _logsumexp_mid(bwd.transpose(0, 2, 1))
        if damping:
            new_into_dst = damping * store.into_dst + (1 - damping) * new_into_dst
            new_into_src = damping * store.into_src + (1 - damping) * new_into_src
        new_into_dst -= new_into_dst.max(axis=1, keepdims=True)
        new_into_src -= new_into_src.max(axis=1, keepdims=True)
        store.residual = max(
            float(np.abs(new_into_dst - store.into_dst).max()),
            float(np.abs(new_into_src - store.into_src).max()),
        )
        store.into_dst, store.into_src = new_into_dst, new_into_src
        if store.residual < tol:
            converged = True
            break
    beliefs = _node_sums(n, c, src, dst, store.into_dst, store.into_src, unary.copy())
    return store, beliefs, converged, sweeps


def sum_product(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    clamp_labels: bool = False,
    labels: Mapping[int, int] | None = None,
    max_sweeps: int = 50,
    tol: float = 1e-6,
    damping: float = 0.5,
) -> BeliefPropagationResult:
    """Estimate node and pairwise edge marginals.

    Non-convergence within ``max_sweeps`` is reported through the result's
    ``converged`` flag, never raised.
    """
    unary = _clamped_unary(net, params, embeddings, clamp_labels, labels)
    store, beliefs, converged, sweeps = _propagate(
        net, params, unary, max_sweeps, tol, damping, use_max=False
    )
    shifted = beliefs - beliefs.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    adj = net.adjacency
    e, c = len(adj.src), params.num_categories
    edge_marginals = np.zeros((e, c, c))
    if e:
        gamma_d, gamma_u = _edge_matrices(params)
        from_src = beliefs[adj.src] - store.into_src
        from_dst = beliefs[adj.dst] - store.into_dst
        for mask, gamma in ((adj.is_directed, gamma_d), (~adj.is_directed, gamma_u)):
            if not mask.any():
                continue
            logq = (
                from_src[mask][:, :, None]
                + from_dst[mask][:, None, :]
                + gamma[None, :, :]
            )
            logq -= logq.max(axis=(1, 2), keepdims=True)
            q = np.exp(logq)
            q /= q.sum(axis=(1, 2), keepdims=True)
            edge_marginals[mask] = q
    return BeliefPropagationResult(
        node_marginals=probs,
        edge_marginals=edge_marginals,
        beliefs=beliefs,
        converged=converged,
        sweeps=sweeps,
        residual=store.residual,
    )


def max_sum_decode(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    clamp_labels: bool = False,
    labels: Mapping[int, int] | None = None,
    max_sweeps: int = 50,
    tol: float = 1e-6,
    damping: float = 0.5,
) -> np.ndarray:
    """Decode an approximate most-likely configuration (exact on trees).

    Per-node ties break toward the smallest category id; clamped nodes keep
    their labels.
    """
    unary = _clamped_unary(net, params, embeddings, clamp_labels, labels)
    _, beliefs, _, _ = _propagate(
        net, params, unary, max_sweeps, tol, damping, use_max=True
    )
    return np.argmax(beliefs, axis=1).astype(np.int64)


def expected_statistics_from_marginals(
    net: PartiallyLabeledNetwork,
    shape: tuple[int, int, int],
    node_marginals: np.ndarray,
    edge_marginals: np.ndarray,
    embeddings: np.ndarray | None = None,
) -> SufficientStatistics:
    """Expectation of the sufficient statistics under factored marginals."""
    c, d, h = shape
    stats = ParameterVector.zeros(c, d, h)
    stats.attr += node_marginals.T @ net.features
    if h:
        stats.deep += node_marginals.T @ embeddings
    adj = net.adjacency
    for k in range(len(adj.src)):
        q = edge_marginals[k]
        if adj.is_directed[k]:
            stats.corr_directed += q
        else:
            stats.corr_undirected += (q + q.T) / 2.0
    return stats
