"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from netlabel.network import Edge, EdgeKind, PartiallyLabeledNetwork
from netlabel.params import ParameterVector


def make_network(features, edges, labels, num_categories, node_ids=None):
    """Build a network from plain Python inputs.

    ``edges`` entries are (src, dst, "D"|"U") triples.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    node_ids = node_ids or tuple(f"n{i}" for i in range(n))
    edge_tuples = []
    for src, dst, kind in edges:
        kind = EdgeKind(kind)
        if kind is EdgeKind.UNDIRECTED and src > dst:
            src, dst = dst, src
        edge_tuples.append(Edge(src, dst, kind))
    return PartiallyLabeledNetwork(
        node_ids=tuple(node_ids),
        features=features,
        edges=tuple(edge_tuples),
        labels=dict(labels),
        category_names=tuple(str(c) for c in range(num_categories)),
    )


def random_instance(rng, n=5, c=3, d=2, edge_prob=0.5, label_prob=0.5, scale=0.7):
    """Random small network plus parameters for property loops.

    The undirected correlation block is symmetrized, matching the model
    invariant that learners maintain.
    """
    features = rng.normal(size=(n, d))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                kind = "U" if rng.random() < 0.5 else "D"
                if kind == "D" and rng.random() < 0.5:
                    edges.append((j, i, kind))
                else:
                    edges.append((i, j, kind))
    labels = {
        int(i): int(rng.integers(0, c))
        for i in range(n)
        if rng.random() < label_prob
    }
    net = make_network(features, edges, labels, c)
    params = random_params(rng, c, d, scale=scale)
    return net, params


def random_params(rng, c, d, h=0, scale=0.7):
    params = ParameterVector(
        attr=rng.normal(size=(c, d)) * scale,
        deep=rng.normal(size=(c, h)) * scale,
        corr_directed=rng.normal(size=(c, c)) * scale,
        corr_undirected=rng.normal(size=(c, c)) * scale,
    )
    params.symmetrize_undirected()
    return params


def random_tree(rng, n, c, d=2, label_prob=0.4, scale=0.7, directed_prob=0.3):
    """Random tree instance (each node attaches to an earlier node)."""
    features = rng.normal(size=(n, d))
    edges = []
    for j in range(1, n):
        i = int(rng.integers(0, j))
        kind = "D" if rng.random() < directed_prob else "U"
        if kind == "D" and rng.random() < 0.5:
            edges.append((j, i, kind))
        else:
            edges.append((i, j, kind))
    labels = {
        int(i): int(rng.integers(0, c))
        for i in range(n)
        if rng.random() < label_prob
    }
    net = make_network(features, edges, labels, c)
    return net, random_params(rng, c, d, scale=scale)


def brute_force_log_potential(net, params, config, embeddings=None):
    """Straight-line score of one configuration, written from the definitions."""
    total = 0.0
    for i in range(net.num_nodes):
        total += float(params.attr[config[i]] @ net.features[i])
        if params.embed_dim:
            total += float(params.deep[config[i]] @ embeddings[i])
    for e in net.edges:
        a, b = config[e.src], config[e.dst]
        if e.kind is EdgeKind.UNDIRECTED:
            g = params.corr_undirected
            total += float(g[a, b] + g[b, a]) / 2.0
        else:
            total += float(params.corr_directed[a, b])
    return total


def all_configs(n, c):
    """All label configurations of n nodes, lexicographic order."""
    if n == 0:
        yield ()
        return
    for rest in all_configs(n - 1, c):
        for y in range(c):
            yield rest + (y,)


def central_difference(func, x, h=1e-5):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        grad[k] = (func(x + step) - func(x - step)) / (2 * h)
    return grad
