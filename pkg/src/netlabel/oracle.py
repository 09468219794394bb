"""Brute-force enumeration oracle for small instances.

Enumerates every label configuration (optionally restricted to those that
agree with the known labels) and computes exact partition values, marginals,
expectations of the sufficient statistics, and the exact likelihood gradient.
All scores are recomputed here from the factor definitions, independent of
the optimized evaluation paths, so this module can serve as the ground truth
in tests for potentials, samplers, belief propagation, and learners.

Guarded at 10^7 configurations; practical CPython comfort is far below that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InstanceTooLarge
from .network import EdgeKind, PartiallyLabeledNetwork
from .params import ParameterVector, SufficientStatistics

ENUMERATION_GUARD = 10**7


@dataclass
class ExactSummary:
    """Exact quantities for the unconditional and label-conditioned models.

    ``node_marginals``, ``edge_marginals`` (indexed like ``net.edges``,
    oriented src -> dst) and ``map_config`` describe the distribution selected
    by the ``clamp_labels`` argument of :func:`enumerate_summary`; both
    normalization constants and both expectation vectors are always filled.
    """

    log_partition: float
    log_partition_conditional: float
    node_marginals: np.ndarray
    edge_marginals: np.ndarray
    expected_stats_model: SufficientStatistics
    expected_stats_data: SufficientStatistics
    map_config: np.ndarray


def _corr_matrix(params: ParameterVector, kind: EdgeKind) -> np.ndarray:
    if kind is EdgeKind.UNDIRECTED:
        g = params.corr_undirected
        return (g + g.T) / 2.0
    return params.corr_directed


def _enumerate_once(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None,
    fixed: Mapping[int, int],
):
    c = params.num_categories
    n = net.num_nodes
    unary = net.features @ params.attr.T
    if params.embed_dim:
        unary = unary + embeddings @ params.deep.T

    free = [i for i in range(n) if i not in fixed]
    total = c ** len(free)
    if total > ENUMERATION_GUARD:
        raise InstanceTooLarge(
            f"{c}^{len(free)} = {total} configurations exceeds the "
            f"{ENUMERATION_GUARD} guard"
        )
    pos = {node: p for p, node in enumerate(free)}
    idx = np.arange(total, dtype=np.int64)

    def digits(node: int) -> np.ndarray:
        stride = c ** (len(free) - 1 - pos[node])
        return (idx // stride) % c

    log_pot = np.zeros(total)
    log_pot += sum(unary[i, y] for i, y in fixed.items())
    for i in free:
        log_pot += unary[i][digits(i)]
    for e in net.edges:
        m = _corr_matrix(params, e.kind)
        s_fixed, d_fixed = e.src in fixed, e.dst in fixed
        if s_fixed and d_fixed:
            log_pot += m[fixed[e.src], fixed[e.dst]]
        elif s_fixed:
            log_pot += m[fixed[e.src], :][digits(e.dst)]
        elif d_fixed:
            log_pot += m[:, fixed[e.dst]][digits(e.src)]
        else:
            log_pot += m[digits(e.src), digits(e.dst)]

    top = float(log_pot.max())
    log_z = top + float(np.log(np.exp(log_pot - top).sum()))
    weights = np.exp(log_pot - log_z)

    marginals = np.zeros((n, c))
    for i in range(n):
        if i in fixed:
            marginals[i, fixed[i]] = 1.0
        else:
            marginals[i] = np.bincount(digits(i), weights=weights, minlength=c)

    edge_joints = np.zeros((len(net.edges), c, c))
    for k, e in enumerate(net.edges):
        s_fixed, d_fixed = e.src in fixed, e.dst in fixed
        if s_fixed and d_fixed:
            edge_joints[k, fixed[e.src], fixed[e.dst]] = 1.0
        elif s_fixed:
            edge_joints[k, fixed[e.src], :] = marginals[e.dst]
        elif d_fixed:
            edge_joints[k, :, fixed[e.dst]] = marginals[e.src]
        else:
            flat = np.bincount(
                digits(e.src) * c + digits(e.dst), weights=weights, minlength=c * c
            )
            edge_joints[k] = flat.reshape(c, c)

    stats = ParameterVector.zeros(*params.shape)
    stats.attr += marginals.T @ net.features
    if params.embed_dim:
        stats.deep += marginals.T @ embeddings
    for k, e in enumerate(net.edges):
        if e.kind is EdgeKind.UNDIRECTED:
            stats.corr_undirected += (edge_joints[k] + edge_joints[k].T) / 2.0
        else:
            stats.corr_directed += edge_joints[k]

    best = int(np.argmax(log_pot))
    map_config = np.zeros(n, dtype=np.int64)
    for i, y in fixed.items():
        map_config[i] = y
    for i in free:
        stride = c ** (len(free) - 1 - pos[i])
        map_config[i] = (best // stride) % c

    return log_z, marginals, edge_joints, stats, map_config


def enumerate_summary(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    labels: Mapping[int, int] | None = None,
    clamp_labels: bool = False,
) -> ExactSummary:
    """Exhaustive summary of the model on a small instance.

    ``labels`` defaults to the network's label map and defines the
    conditioned distribution; ``clamp_labels`` selects which distribution the
    marginal/MAP fields describe.  MAP ties resolve to the configuration that
    is lexicographically smallest.
    """
    if labels is None:
        labels = net.labels
    log_z, marg_m, joints_m, stats_m, map_m = _enumerate_once(
        net, params, embeddings, {}
    )
    log_z_cond, marg_d, joints_d, stats_d, map_d = _enumerate_once(
        net, params, embeddings, dict(labels)
    )
    return ExactSummary(
        log_partition=log_z,
        log_partition_conditional=log_z_cond,
        node_marginals=marg_d if clamp_labels else marg_m,
        edge_marginals=joints_d if clamp_labels else joints_m,
        expected_stats_model=stats_m,
        expected_stats_data=stats_d,
        map_config=map_d if clamp_labels else map_m,
    )


def exact_gradient(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    labels: Mapping[int, int] | None = None,
) -> SufficientStatistics:
    """Exact gradient of the marginal log-likelihood of the known labels.

    Difference of the statistics expectation under the label-conditioned
    distribution and under the unconditional one.
    """
    summary = enumerate_summary(net, params, embeddings, labels)
    return summary.expected_stats_data - summary.expected_stats_model


def log_marginal_objective(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    labels: Mapping[int, int] | None = None,
) -> float:
    """Exact marginal log-likelihood of the known labels under the model."""
    summary = enumerate_summary(net, params, embeddings, labels)
    return summary.log_partition_conditional - summary.log_partition
