"""Factor evaluation and sufficient statistics.

The model scores a full label configuration Y with three factor families, all
kept in log-domain:

- per node: attribute score ``attr[y_i] . x_i``,
- per node: embedding score ``deep[y_i] . h_i`` over a frozen embedding row,
- per edge: correlation score ``corr[kind][y_src, y_dst]``.

``log_potential`` is the sum of all factor scores (the log of the
unnormalized joint), and equals ``params.dot(global_statistics(Y))`` exactly.
The undirected correlation block is always read through its symmetric part
``(g + g.T) / 2`` — equal to ``g`` itself under the maintained symmetry
invariant — which keeps the potential/statistics identity exact for any
parameter value.

Statistics conventions
----------------------
``local_statistics`` (one summand per node) put each incident edge's cell
weight at 1/2 so node-wise sums reproduce the per-edge-once global aggregate:
an undirected edge contributes 1/2 at (y_i, y_j) to node i and 1/2 at
(y_j, y_i) to node j; a directed edge contributes 1/2 at (y_src, y_dst) to
both endpoints.  ``softmax_local_statistics`` instead use full weight 1 per
incident edge; their dot with the parameters gives the exact conditional
logits of one node given the rest.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionMismatch
from .network import EdgeKind, PartiallyLabeledNetwork
from .params import ParameterVector, SufficientStatistics


def unary_log_potentials(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
) -> np.ndarray:
    """(N, C) table of attribute + embedding scores for every node/category."""
    table = net.features @ params.attr.T
    if params.embed_dim:
        if embeddings is None:
            raise DimensionMismatch(
                "params carry embedding weights but no embedding matrix was given"
            )
        if embeddings.shape != (net.num_nodes, params.embed_dim):
            raise DimensionMismatch(
                f"embedding matrix shape {embeddings.shape} does not match "
                f"({net.num_nodes}, {params.embed_dim})"
            )
        table = table + embeddings @ params.deep.T
    return table


def log_attribute_factor(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    node: int,
    category: int,
) -> float:
    """Log of the attribute factor: dot of the category's weight row with x."""
    return float(params.attr[category] @ net.features[node])


def log_deep_factor(net, params, deep, node: int, category: int) -> float:
    """Log of the embedding factor; ``deep`` is a trained embedding network."""
    h2 = deep.forward(net.features[node])[1]
    if h2.shape[0] != params.embed_dim:
        raise DimensionMismatch(
            f"embedding width {h2.shape[0]} does not match parameter block "
            f"width {params.embed_dim}"
        )
    return float(params.deep[category] @ h2)


def _symmetric_undirected(params: ParameterVector) -> np.ndarray:
    g = params.corr_undirected
    return (g + g.T) / 2.0


def log_correlation_factor(
    params: ParameterVector, kind: EdgeKind, cat_i: int, cat_j: int
) -> float:
    """Correlation weight for an edge of ``kind`` joining the two categories."""
    if kind is EdgeKind.UNDIRECTED:
        return float(_symmetric_undirected(params)[cat_i, cat_j])
    return float(params.corr_directed[cat_i, cat_j])


def log_potential(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    config: Sequence[int],
    embeddings: np.ndarray | None = None,
) -> float:
    """Log of the unnormalized joint score of a full configuration."""
    config = np.asarray(config, dtype=np.int64)
    unary = unary_log_potentials(net, params, embeddings)
    total = float(unary[np.arange(net.num_nodes), config].sum())
    adj = net.adjacency
    if len(net.edges):
        s_cats = config[adj.src]
        d_cats = config[adj.dst]
        directed = adj.is_directed
        total += float(params.corr_directed[s_cats[directed], d_cats[directed]].sum())
        total += float(
            _symmetric_undirected(params)[s_cats[~directed], d_cats[~directed]].sum()
        )
    return total


def _half_edge_cells(adj, config, node: int):
    """Yield ((row, col), weight, directed) cells of node's incident edges."""
    y = config[node]
    for j in adj.undirected[node]:
        yield (y, config[j]), False
    for j in adj.outgoing[node]:
        yield (y, config[j]), True
    for j in adj.incoming[node]:
        yield (config[j], y), True


def local_statistics(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    config: Sequence[int],
    node: int,
    embeddings: np.ndarray | None = None,
) -> SufficientStatistics:
    """Per-node statistics with half-weight edge cells (sums to the global)."""
    config = np.asarray(config, dtype=np.int64)
    stats = ParameterVector.zeros(*params.shape)
    y = int(config[node])
    stats.attr[y] += net.features[node]
    if params.embed_dim:
        stats.deep[y] += embeddings[node]
    for (row, col), directed in _half_edge_cells(net.adjacency, config, node):
        block = stats.corr_directed if directed else stats.corr_undirected
        block[row, col] += 0.5
    return stats


def softmax_local_statistics(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    config: Sequence[int],
    node: int,
    category: int,
    embeddings: np.ndarray | None = None,
) -> SufficientStatistics:
    """Full-weight statistics with the node's own label forced to ``category``.

    ``params.dot(result)`` is the exact conditional logit of assigning
    ``category`` to ``node`` given every other label in ``config``.
    """
    config = np.asarray(config, dtype=np.int64).copy()
    config[node] = category
    stats = ParameterVector.zeros(*params.shape)
    stats.attr[category] += net.features[node]
    if params.embed_dim:
        stats.deep[category] += embeddings[node]
    for (row, col), directed in _half_edge_cells(net.adjacency, config, node):
        block = stats.corr_directed if directed else stats.corr_undirected
        block[row, col] += 1.0
    return stats


def global_statistics(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    config: Sequence[int],
    embeddings: np.ndarray | None = None,
) -> SufficientStatistics:
    """Whole-configuration statistics; each edge cell counted exactly once.

    Undirected edges split their unit weight over the two mirrored cells, so
    aggregates stay symmetric and dots with symmetric weights are exact.
    """
    config = np.asarray(config, dtype=np.int64)
    c, d, h = params.shape
    stats = ParameterVector.zeros(c, d, h)
    onehot = np.zeros((net.num_nodes, c))
    onehot[np.arange(net.num_nodes), config] = 1.0
    stats.attr += onehot.T @ net.features
    if h:
        stats.deep += onehot.T @ embeddings
    adj = net.adjacency
    if len(net.edges):
        s_cats = config[adj.src]
        d_cats = config[adj.dst]
        directed = adj.is_directed
        np.add.at(stats.corr_directed, (s_cats[directed], d_cats[directed]), 1.0)
        und_s, und_d = s_cats[~directed], d_cats[~directed]
        np.add.at(stats.corr_undirected, (und_s, und_d), 0.5)
        np.add.at(stats.corr_undirected, (und_d, und_s), 0.5)
    return stats


def conditional_logits(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    config: Sequence[int],
    node: int,
    embeddings: np.ndarray | None = None,
) -> np.ndarray:
    """Logits of p(y_node = . | all other labels); softmax gives the marginal."""
    scorer = FactorScorer(net, params, embeddings)
    return scorer.conditional_logits(np.asarray(config, dtype=np.int64), node)


class FactorScorer:
    """Bound evaluator over (network, params, embeddings) with fast lookups.

    Precomputes the unary table and keeps correlation blocks as nested lists
    so single-site deltas run in O(degree) with plain Python indexing — this
    is the hot path of every sampling-based learner.  Call :meth:`refresh`
    after mutating the bound parameters.
    """

    def __init__(
        self,
        net: PartiallyLabeledNetwork,
        params: ParameterVector,
        embeddings: np.ndarray | None = None,
    ):
        self.net = net
        self.params = params
        self.embeddings = embeddings
        self.adj = net.adjacency
        self.refresh()

    def refresh(self) -> None:
        self.unary = unary_log_potentials(self.net, self.params, self.embeddings)
        self.unary_rows = self.unary.tolist()
        self.corr_d = self.params.corr_directed.tolist()
        self.corr_u = _symmetric_undirected(self.params).tolist()

    def log_potential(self, config) -> float:
        return log_potential(self.net, self.params, config, self.embeddings)

    def delta(self, config, node: int, new_category: int) -> float:
        """log_potential(config with node := new_category) - log_potential(config).

        O(degree(node)); ``config`` must support integer indexing.
        """
        old = config[node]
        if new_category == old:
            return 0.0
        row = self.unary_rows[node]
        d = row[new_category] - row[old]
        cu, cd = self.corr_u, self.corr_d
        new_u, old_u = cu[new_category], cu[old]
        for j in self.adj.undirected[node]:
            m = config[j]
            d += new_u[m] - old_u[m]
        new_d, old_d = cd[new_category], cd[old]
        for j in self.adj.outgoing[node]:
            m = config[j]
            d += new_d[m] - old_d[m]
        for j in self.adj.incoming[node]:
            row_m = cd[config[j]]
            d += row_m[new_category] - row_m[old]
        return d

    def conditional_logits(self, config, node: int) -> np.ndarray:
        logits = self.unary[node].copy()
        gu, gd = _symmetric_undirected(self.params), self.params.corr_directed
        for j in self.adj.undirected[node]:
            logits += gu[:, config[j]]
        for j in self.adj.outgoing[node]:
            logits += gd[:, config[j]]
        for j in self.adj.incoming[node]:
            logits += gd[config[j], :]
        return logits
