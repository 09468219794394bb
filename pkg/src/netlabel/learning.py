"""Training algorithms for the factor model.

Four learners share the same contract (network + split + config -> run):

- ``train_lbp``: gradient ascent where both expectation terms of the exact
  likelihood gradient are estimated by sum-product belief propagation, once
  unclamped and once clamped to training labels.
- ``train_sr``: regression bootstrap.  Fit attribute weights on labeled rows,
  predict everything, then alternate between refitting the full parameter
  vector on conditional-softmax features (neighbor labels taken from the
  current predicted configuration) and re-predicting, while validation
  accuracy strictly increases.
- ``train_mh``: single unclamped chain; on accepted moves that change
  training accuracy in the direction opposite to the likelihood change, nudge
  the parameters by the local statistics difference.
- ``train_mh_plus``: two coupled chains sharing proposals, one clamped to
  training labels and one free; accepted proposals contribute the difference
  of the chains' local statistics to a mini-batch gradient estimate of the
  marginal-likelihood gradient.

``train_parallel`` distributes the two-chain sampler over worker processes,
each owning an independent chain pair and a deterministic random stream; the
coordinator sums per-worker batch gradients in a fixed-order pairwise tree
and applies one update per round.  Learners read labels only for the train
and validation partitions, never for test nodes.  Undirected correlation
updates are symmetrized on application, keeping that block exactly symmetric.
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import NoTrainingLabels
from .factors import _symmetric_undirected, log_potential, unary_log_potentials
from .lbp import expected_statistics_from_marginals, max_sum_decode, sum_product
from .network import DatasetSplit, PartiallyLabeledNetwork
from .params import ParameterVector, SufficientStatistics
from .sampling import sample_map, stream
from .softmax import ascend, fit_multinomial, log_softmax

LEARNERS = ("lbp", "sr", "mh", "mh+")
_GRADIENT_TOL = 1e-6
_BP_TOL = 1e-9


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters shared by the learners.

    ``max_iterations`` counts the learner's outer unit: refit rounds for sr,
    sampling steps for mh, mini-batches for mh+, and is unused by lbp (which
    runs ``bp_iterations`` gradient iterations).  ``eval_every`` counts the
    same unit between validation evaluations, and ``patience`` the number of
    consecutive non-improving evaluations tolerated before stopping.
    """

    learner: str = "mh+"
    learning_rate: float | None = None
    batch_size: int = 5000
    eval_every: int = 1000
    patience: int = 20
    max_iterations: int = 10_000
    bp_sweeps: int = 50
    bp_iterations: int = 100
    seed: int = 0
    workers: int = 1
    l2: float = 0.0

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.eval_every < 1 or self.patience < 1:
            raise ValueError("batch_size, eval_every and patience must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return 1.0 if self.learner == "mh+" else 0.1


class StopReason(Enum):
    EARLY_STOPPED = "early_stopped"
    MAX_ITERATIONS = "max_iterations"
    CONVERGED = "converged"


class HistoryEntry(NamedTuple):
    iteration: int
    train_metric: float
    validation_accuracy: float
    log_potential_proxy: float


@dataclass
class TrainingRun:
    config: LearnerConfig
    history: list[HistoryEntry]
    best_params: ParameterVector
    best_validation_accuracy: float
    best_iteration: int
    stop_reason: StopReason
    seconds: float
    initial_params: ParameterVector | None = None


def save_history_csv(run: TrainingRun, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "train_acc", "val_acc", "log_potential_proxy"])
        for entry in run.history:
            writer.writerow(
                [
                    entry.iteration,
                    f"{entry.train_metric:.6f}",
                    f"{entry.validation_accuracy:.6f}",
                    f"{entry.log_potential_proxy:.6f}",
                ]
            )


class _Tracker:
    """History plus best-on-validation snapshots with patience."""

    def __init__(self, patience: int):
        self.patience = patience
        self.history: list[HistoryEntry] = []
        self.best_accuracy = -1.0
        self.best_iteration = -1
        self.best_params: ParameterVector | None = None
        self.stale = 0

    def record(self, iteration, train_metric, val_accuracy, proxy, params) -> bool:
        """Append an entry; True when patience is exhausted."""
        self.history.append(
            HistoryEntry(iteration, train_metric, val_accuracy, proxy)
        )
        if val_accuracy > self.best_accuracy:
            self.best_accuracy = val_accuracy
            self.best_iteration = iteration
            self.best_params = params.copy()
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _split_labels_view(net, nodes) -> dict[int, int]:
    return {i: net.labels[i] for i in nodes}


def _accuracy(config, labels: Mapping[int, int]) -> float:
    if not labels:
        return 0.0
    return sum(config[i] == cat for i, cat in labels.items()) / len(labels)


def _apply_gradient(params: ParameterVector, grad: SufficientStatistics, scale):
    """Ascent step with the undirected block symmetrized on application."""
    params.attr += scale * grad.attr
    if params.embed_dim:
        params.deep += scale * grad.deep
    params.corr_directed += scale * grad.corr_directed
    g = grad.corr_undirected
    params.corr_undirected += scale * (g + g.T) / 2.0


# ---------------------------------------------------------------------------
# Regression learner
# ---------------------------------------------------------------------------


def fit_attribute_model(
    net: PartiallyLabeledNetwork,
    train_nodes: Sequence[int],
    targets: Sequence[int],
    l2: float = 0.0,
    embeddings: np.ndarray | None = None,
    init_attr: np.ndarray | None = None,
    init_deep: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial regression of labels on node features (+ embeddings).

    Returns the attribute and embedding weight blocks; this is also the
    attribute-only baseline model.
    """
    c = net.num_categories
    h = 0 if embeddings is None else embeddings.shape[1]
    rows = net.features[list(train_nodes)]
    if h:
        rows = np.hstack([rows, embeddings[list(train_nodes)]])
    init = None
    if init_attr is not None:
        init = init_attr if not h else np.hstack([init_attr, init_deep])
    weights = fit_multinomial(
        rows, np.asarray(targets), c, l2=l2, init=init
    )
    d = net.num_features
    return weights[:, :d].copy(), weights[:, d:].copy()


class _PairGroup:
    """Edges incident to training rows, presorted for segment reductions.

    Pairs are sorted by training row so per-iteration logit contributions are
    a gather followed by ``np.add.reduceat``; per-round label groupings make
    the gradient scatter a handful of fancy-indexed sums instead of
    element-wise ``np.add.at`` calls.
    """

    def __init__(self, pairs: list[tuple[int, int]]):
        if pairs:
            arr = np.asarray(pairs, dtype=np.int64)
            order = np.argsort(arr[:, 0], kind="stable")
            self.rows = arr[order, 0]
            self.neighbors = arr[order, 1]
            self.seg_rows, self.seg_starts = np.unique(self.rows, return_index=True)
        else:
            self.rows = self.neighbors = np.zeros(0, dtype=np.int64)
            self.seg_rows = self.seg_starts = np.zeros(0, dtype=np.int64)
        self.labels = None
        self.by_label: list[np.ndarray] = []

    def __len__(self):
        return len(self.rows)

    def set_config(self, config: np.ndarray, num_categories: int) -> None:
        self.labels = config[self.neighbors]
        self.by_label = [
            np.flatnonzero(self.labels == k) for k in range(num_categories)
        ]

    def add_logits(self, logits: np.ndarray, lookup_rows: np.ndarray) -> None:
        if not len(self.rows):
            return
        sums = np.add.reduceat(lookup_rows[self.labels], self.seg_starts, axis=0)
        logits[self.seg_rows] += sums

    def label_sums(self, residual: np.ndarray, num_categories: int) -> np.ndarray:
        """(C, C) matrix whose column k sums residual rows with neighbor label k."""
        acc = np.zeros((num_categories, num_categories))
        for k, idx in enumerate(self.by_label):
            if len(idx):
                acc[:, k] = residual[self.rows[idx]].sum(axis=0)
        return acc


class _StructuredProblem:
    """Conditional-softmax objective over the full parameter vector.

    Training rows are labeled training nodes; each row's logits combine its
    unary scores with correlation lookups against the neighbor labels frozen
    in the current full configuration.
    """

    def __init__(self, net, train_nodes, targets, l2, embeddings=None):
        self.net = net
        self.train_nodes = list(train_nodes)
        self.targets = np.asarray(targets)
        self.l2 = l2
        self.embeddings = embeddings
        self.x = net.features[self.train_nodes]
        self.e = embeddings[self.train_nodes] if embeddings is not None else None
        adj = net.adjacency
        und_pairs, out_pairs, in_pairs = [], [], []
        for r, node in enumerate(self.train_nodes):
            for j in adj.undirected[node]:
                und_pairs.append((r, j))
            for j in adj.outgoing[node]:
                out_pairs.append((r, j))
            for j in adj.incoming[node]:
                in_pairs.append((r, j))
        self.und = _PairGroup(und_pairs)
        self.out = _PairGroup(out_pairs)
        self.inc = _PairGroup(in_pairs)

    def set_config(self, config: np.ndarray) -> None:
        c = self.net.num_categories
        for group in (self.und, self.out, self.inc):
            group.set_config(np.asarray(config), c)

    def _logits(self, params: ParameterVector) -> np.ndarray:
        logits = self.x @ params.attr.T
        if self.e is not None and params.embed_dim:
            logits = logits + self.e @ params.deep.T
        else:
            logits = logits.copy()
        gd = params.corr_directed
        self.und.add_logits(logits, _symmetric_undirected(params))
        self.out.add_logits(logits, np.ascontiguousarray(gd.T))
        self.inc.add_logits(logits, gd)
        return logits

    def value_and_grad(self, flat: np.ndarray) -> tuple[float, np.ndarray]:
        c, d, h = self.shape
        params = ParameterVector.from_flat(flat, c, d, h)
        logits = self._logits(params)
        logp = log_softmax(logits)
        n = len(self.targets)
        value = float(logp[np.arange(n), self.targets].sum())
        value -= 0.5 * self.l2 * float(flat @ flat)
        residual = -np.exp(logp)
        residual[np.arange(n), self.targets] += 1.0

        grad = ParameterVector.zeros(c, d, h)
        grad.attr += residual.T @ self.x
        if h and self.e is not None:
            grad.deep += residual.T @ self.e
        if len(self.und):
            acc = self.und.label_sums(residual, c)
            grad.corr_undirected += (acc + acc.T) / 2.0
        if len(self.out):
            grad.corr_directed += self.out.label_sums(residual, c)
        if len(self.inc):
            grad.corr_directed += self.inc.label_sums(residual, c).T
        flat_grad = grad.to_flat() - self.l2 * flat
        return value, flat_grad

    @property
    def shape(self):
        h = 0 if self.embeddings is None else self.embeddings.shape[1]
        return (self.net.num_categories, self.net.num_features, h)


def conditional_sweep(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    config: np.ndarray,
    fixed: Mapping[int, int],
    embeddings: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One synchronous conditional-argmax update of every label.

    Returns (new configuration with ``fixed`` reimposed, raw argmax over all
    nodes).  Ties go to the smallest category id.
    """
    logits = unary_log_potentials(net, params, embeddings).copy()
    adj = net.adjacency
    if len(adj.src):
        sym_u = _symmetric_undirected(params)
        gd = params.corr_directed
        directed = adj.is_directed
        s_u, d_u = adj.src[~directed], adj.dst[~directed]
        s_d, d_d = adj.src[directed], adj.dst[directed]
        if len(s_u):
            np.add.at(logits, s_u, sym_u[config[d_u]])
            np.add.at(logits, d_u, sym_u[config[s_u]])
        if len(s_d):
            np.add.at(logits, s_d, gd.T[config[d_d]])
            np.add.at(logits, d_d, gd[config[s_d]])
    raw = logits.argmax(axis=1).astype(np.int64)
    out = raw.copy()
    for node, cat in fixed.items():
        out[node] = cat
    return out, raw


def train_sr(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    config: LearnerConfig,
    embeddings: np.ndarray | None = None,
    init_attr: np.ndarray | None = None,
    init_deep: np.ndarray | None = None,
) -> TrainingRun:
    """Regression bootstrap learner.

    Rounds continue while validation accuracy strictly increases (an empty
    validation set yields exactly one refinement round).
    """
    started = time.perf_counter()
    train_nodes = sorted(split.train)
    if not train_nodes:
        raise NoTrainingLabels("regression learner needs labeled training nodes")
    targets = [net.labels[i] for i in train_nodes]
    train_map = dict(zip(train_nodes, targets))
    val_map = _split_labels_view(net, split.validation)
    c, d = net.num_categories, net.num_features
    h = 0 if embeddings is None else embeddings.shape[1]

    attr, deep = fit_attribute_model(
        net, train_nodes, targets, config.l2, embeddings, init_attr, init_deep
    )
    params = ParameterVector.zeros(c, d, h)
    params.attr[...] = attr
    if h:
        params.deep[...] = deep

    full_config, raw = conditional_sweep(
        net, params, np.zeros(net.num_nodes, dtype=np.int64), train_map, embeddings
    )
    problem = _StructuredProblem(net, train_nodes, targets, config.l2, embeddings)
    tracker = _Tracker(patience=1)
    value, _ = _structured_value(problem, params, full_config)
    tracker.record(
        0, _accuracy(raw, train_map), _accuracy(full_config, val_map), value, params
    )

    stop_reason = StopReason.MAX_ITERATIONS
    for round_index in range(1, config.max_iterations + 1):
        problem.set_config(full_config)
        flat, _ = ascend(problem.value_and_grad, params.to_flat())
        params = ParameterVector.from_flat(flat, c, d, h)
        full_config, raw = conditional_sweep(
            net, params, full_config, train_map, embeddings
        )
        value, _ = _structured_value(problem, params, full_config)
        stop = tracker.record(
            round_index,
            _accuracy(raw, train_map),
            _accuracy(full_config, val_map),
            value,
            params,
        )
        if stop:
            stop_reason = StopReason.EARLY_STOPPED
            break
    return TrainingRun(
        config=config,
        history=tracker.history,
        best_params=tracker.best_params,
        best_validation_accuracy=tracker.best_accuracy,
        best_iteration=tracker.best_iteration,
        stop_reason=stop_reason,
        seconds=time.perf_counter() - started,
    )


def _structured_value(problem, params, full_config):
    problem.set_config(np.asarray(full_config))
    return problem.value_and_grad(params.to_flat())


# ---------------------------------------------------------------------------
# Belief-propagation learner
# ---------------------------------------------------------------------------


def train_lbp(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    config: LearnerConfig,
    embeddings: np.ndarray | None = None,
    init_params: ParameterVector | None = None,
) -> TrainingRun:
    """Gradient ascent with both expectations estimated by sum-product.

    Per iteration cost is O(sweeps * (N*C + E*C^2)) for each of the two
    propagation runs, which dominates everything else.
    """
    started = time.perf_counter()
    train_map = _split_labels_view(net, split.train)
    val_map = _split_labels_view(net, split.validation)
    c, d = net.num_categories, net.num_features
    h = 0 if embeddings is None else embeddings.shape[1]
    params = init_params.copy() if init_params is not None else ParameterVector.zeros(c, d, h)
    lr = config.resolved_learning_rate()
    tracker = _Tracker(config.patience)
    stop_reason = StopReason.MAX_ITERATIONS

    for iteration in range(1, config.bp_iterations + 1):
        free_run = sum_product(
            net, params, embeddings, max_sweeps=config.bp_sweeps, tol=_BP_TOL
        )
        clamped_run = sum_product(
            net, params, embeddings, clamp_labels=True, labels=train_map,
            max_sweeps=config.bp_sweeps, tol=_BP_TOL,
        )
        shape = (c, d, h)
        expected_model = expected_statistics_from_marginals(
            net, shape, free_run.node_marginals, free_run.edge_marginals, embeddings
        )
        expected_data = expected_statistics_from_marginals(
            net, shape, clamped_run.node_marginals, clamped_run.edge_marginals,
            embeddings,
        )
        grad = expected_data - expected_model
        converged = grad.max_abs() < _GRADIENT_TOL
        is_last = converged or iteration == config.bp_iterations
        if iteration % config.eval_every == 0 or is_last:
            train_metric = _accuracy(free_run.node_marginals.argmax(axis=1), train_map)
            val_acc = _accuracy(clamped_run.node_marginals.argmax(axis=1), val_map)
            proxy = params.dot(expected_data)
            if tracker.record(iteration, train_metric, val_acc, proxy, params):
                stop_reason = StopReason.EARLY_STOPPED
                break
        if converged:
            stop_reason = StopReason.CONVERGED
            break
        _apply_gradient(params, grad, lr)

    return TrainingRun(
        config=config,
        history=tracker.history,
        best_params=tracker.best_params if tracker.best_params is not None else params,
        best_validation_accuracy=tracker.best_accuracy,
        best_iteration=tracker.best_iteration,
        stop_reason=stop_reason,
        seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Sampling learners
# ---------------------------------------------------------------------------


def mh_update_sign(gained_accuracy: bool, lost_accuracy: bool, delta: float) -> float:
    """Update direction of the accuracy-guided rule.

    +1 when the move raises training accuracy but lowers the likelihood,
    -1 when it lowers accuracy but raises the likelihood, else 0 (the model
    already ranks the configurations consistently).
    """
    if gained_accuracy and delta < 0.0:
        return 1.0
    if lost_accuracy and delta > 0.0:
        return -1.0
    return 0.0


class _LazyUnary:
    """Per-node unary score rows, recomputed lazily after parameter updates."""

    def __init__(self, net, params, embeddings):
        self.x_rows = [net.features[i] for i in range(net.num_nodes)]
        self.e_rows = (
            [embeddings[i] for i in range(net.num_nodes)]
            if embeddings is not None and params.embed_dim
            else None
        )
        self.params = params
        self.version = 0
        self.row_version = [-1] * net.num_nodes
        self.rows: list[list[float] | None] = [None] * net.num_nodes

    def bump(self) -> None:
        self.version += 1

    def row(self, i: int) -> list[float]:
        if self.row_version[i] != self.version:
            values = self.params.attr @ self.x_rows[i]
            if self.e_rows is not None:
                values = values + self.params.deep @ self.e_rows[i]
            self.rows[i] = values.tolist()
            self.row_version[i] = self.version
        return self.rows[i]


def _local_statistics_delta(
    stats: SufficientStatistics, net, embeddings, config, node, old, new, scale
):
    """stats += scale * (S(config with node:=new) - S(config with node:=old))."""
    stats.attr[new] += scale * net.features[node]
    stats.attr[old] -= scale * net.features[node]
    if stats.embed_dim:
        stats.deep[new] += scale * embeddings[node]
        stats.deep[old] -= scale * embeddings[node]
    adj = net.adjacency
    for j in adj.undirected[node]:
        m = config[j]
        stats.corr_undirected[new, m] += 0.5 * scale
        stats.corr_undirected[m, new] += 0.5 * scale
        stats.corr_undirected[old, m] -= 0.5 * scale
        stats.corr_undirected[m, old] -= 0.5 * scale
    for j in adj.outgoing[node]:
        m = config[j]
        stats.corr_directed[new, m] += scale
        stats.corr_directed[old, m] -= scale
    for j in adj.incoming[node]:
        m = config[j]
        stats.corr_directed[m, new] += scale
        stats.corr_directed[m, old] -= scale


def train_mh(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    config: LearnerConfig,
    embeddings: np.ndarray | None = None,
    init_attr: np.ndarray | None = None,
    init_deep: np.ndarray | None = None,
) -> TrainingRun:
    """Accuracy-guided chain learner, initialized from the regression learner.

    A single unclamped chain; parameters move only on accepted flips of
    training-labeled nodes whose accuracy change disagrees in sign with the
    likelihood change, by the local statistics difference of the move.
    """
    started = time.perf_counter()
    sr_run = train_sr(
        net, split, replace(config, learner="sr"), embeddings, init_attr, init_deep
    )
    params = sr_run.best_params.copy()
    initial = params.copy()
    c = net.num_categories
    if c < 2:
        return replace(
            sr_run, config=config, initial_params=initial,
            seconds=time.perf_counter() - started,
        )
    lr = config.resolved_learning_rate()
    train_map = _split_labels_view(net, split.train)
    val_map = _split_labels_view(net, split.validation)
    n = net.num_nodes
    rng = stream(config.seed, 0)

    conf = rng.integers(0, c, n).tolist()
    train_truth = [-1] * n
    for i, cat in train_map.items():
        train_truth[i] = cat
    val_truth = [-1] * n
    for i, cat in val_map.items():
        val_truth[i] = cat
    correct = sum(conf[i] == cat for i, cat in train_map.items())
    val_correct = sum(conf[i] == cat for i, cat in val_map.items())

    unary = _LazyUnary(net, params, embeddings)
    corr_d = params.corr_directed.tolist()
    corr_u = _symmetric_undirected(params).tolist()
    adj = net.adjacency
    und, out, inn = adj.undirected, adj.outgoing, adj.incoming
    exp = math.exp
    tracker = _Tracker(config.patience)
    stop_reason = StopReason.MAX_ITERATIONS
    n_train = max(len(train_map), 1)
    n_val = max(len(val_map), 1)

    def evaluate(step):
        proxy = log_potential(net, params, conf, embeddings)
        return tracker.record(
            step, correct / n_train, val_correct / n_val, proxy, params
        )

    chunk = 4096
    step = 0
    stopped = False
    while step < config.max_iterations and not stopped:
        k = min(chunk, config.max_iterations - step)
        nodes = rng.integers(0, n, k).tolist()
        offs = rng.integers(0, c - 1, k).tolist()
        us = rng.random(k).tolist()
        for t in range(k):
            i = nodes[t]
            old = conf[i]
            off = offs[t]
            cat = off + (off >= old)
            row = unary.row(i)
            delta = row[cat] - row[old]
            ru_new, ru_old = corr_u[cat], corr_u[old]
            for j in und[i]:
                m = conf[j]
                delta += ru_new[m] - ru_old[m]
            rd_new, rd_old = corr_d[cat], corr_d[old]
            for j in out[i]:
                m = conf[j]
                delta += rd_new[m] - rd_old[m]
            for j in inn[i]:
                rm = corr_d[conf[j]]
                delta += rm[cat] - rm[old]
            if delta >= 0.0 or us[t] < exp(delta):
                truth = train_truth[i]
                if truth >= 0:
                    gained = cat == truth
                    lost = old == truth
                    sign = lr * mh_update_sign(gained, lost, delta)
                    if sign:
                        delta_stats = ParameterVector.zeros(*params.shape)
                        _local_statistics_delta(
                            delta_stats, net, embeddings, conf, i, old, cat, 1.0
                        )
                        _apply_gradient(params, delta_stats, sign)
                        unary.bump()
                        corr_d = params.corr_directed.tolist()
                        corr_u = _symmetric_undirected(params).tolist()
                    correct += int(gained) - int(lost)
                vt = val_truth[i]
                if vt >= 0:
                    val_correct += int(cat == vt) - int(old == vt)
                conf[i] = cat
            step_now = step + t + 1
            if step_now % config.eval_every == 0:
                if evaluate(step_now):
                    stop_reason = StopReason.EARLY_STOPPED
                    stopped = True
                    break
        step = step_now if stopped else step + k

    if not stopped and (not tracker.history or tracker.history[-1].iteration != step):
        evaluate(step)
    return TrainingRun(
        config=config,
        history=tracker.history,
        best_params=tracker.best_params,
        best_validation_accuracy=tracker.best_accuracy,
        best_iteration=tracker.best_iteration,
        stop_reason=stop_reason,
        seconds=time.perf_counter() - started,
        initial_params=initial,
    )


class _PairChains:
    """Worker state for the two-chain learner: one clamped and one free chain.

    Chains share each proposal (same node, same candidate category drawn
    uniformly over all categories; proposing the current value is a no-op for
    that chain) but accept independently, so the clamped chain samples the
    label-conditioned distribution and the free chain the unconditional one.
    """

    def __init__(self, net, train_map, val_map, params, embeddings, rng):
        self.net = net
        self.embeddings = embeddings
        self.rng = rng
        self.num_categories = params.num_categories
        n = net.num_nodes
        c = self.num_categories
        self.clamped = [False] * n
        for i in train_map:
            self.clamped[i] = True
        free = [i for i in range(n) if not self.clamped[i]]
        self.y1 = [0] * n
        for i, cat in train_map.items():
            self.y1[i] = cat
        if free:
            draws = rng.integers(0, c, len(free)).tolist()
            for i, v in zip(free, draws):
                self.y1[i] = v
        self.y2 = rng.integers(0, c, n).tolist()

        self.train_truth = [-1] * n
        for i, cat in train_map.items():
            self.train_truth[i] = cat
        self.val_truth = [-1] * n
        for i, cat in val_map.items():
            self.val_truth[i] = cat
        self.n_val = len(val_map)
        self.val1_correct = sum(
            self.y1[i] == cat for i, cat in val_map.items()
        )
        self.train2_correct = sum(
            self.y2[i] == cat for i, cat in train_map.items()
        )
        adj = net.adjacency
        self.und, self.out, self.inn = adj.undirected, adj.outgoing, adj.incoming
        self.features = net.features
        self.set_params(params)

    def set_params(self, params: ParameterVector) -> None:
        # Unary scores are computed per batch for the proposed nodes only, so
        # a parameter update costs O(C^2), not O(N*C); workers stay cheap.
        self.params = params
        self.corr_d = params.corr_directed.tolist()
        self.corr_u = _symmetric_undirected(params).tolist()

    def chain1_log_potential(self) -> float:
        return log_potential(self.net, self.params, self.y1, self.embeddings)

    def run_batch(self, steps: int):
        """Advance both chains ``steps`` shared proposals; return raw gradient.

        The undirected block of the returned statistics is unsymmetrized; the
        coordinator symmetrizes on application.
        """
        c = self.num_categories
        n = len(self.y1)
        rng = self.rng
        node_array = rng.integers(0, n, steps)
        nodes = node_array.tolist()
        cats = rng.integers(0, c, steps).tolist()
        u1s = rng.random(steps).tolist()
        u2s = rng.random(steps).tolist()

        unary = self.features[node_array] @ self.params.attr.T
        if self.embeddings is not None and self.params.embed_dim:
            unary += self.embeddings[node_array] @ self.params.deep.T
        batch_rows = unary.tolist()

        y1, y2 = self.y1, self.y2
        clamped = self.clamped
        corr_u, corr_d = self.corr_u, self.corr_d
        und, out, inn = self.und, self.out, self.inn
        val_truth, train_truth = self.val_truth, self.train_truth
        exp = math.exp

        plus = [[] for _ in range(c)]
        minus = [[] for _ in range(c)]
        gu_acc = [[0.0] * c for _ in range(c)]
        gd_acc = [[0.0] * c for _ in range(c)]
        accepted = 0

        for t in range(steps):
            i = nodes[t]
            cat = cats[t]
            row = batch_rows[t]
            acc1 = False
            old1 = y1[i]
            if not clamped[i] and cat != old1:
                d = row[cat] - row[old1]
                ru_new, ru_old = corr_u[cat], corr_u[old1]
                for j in und[i]:
                    m = y1[j]
                    d += ru_new[m] - ru_old[m]
                rd_new, rd_old = corr_d[cat], corr_d[old1]
                for j in out[i]:
                    m = y1[j]
                    d += rd_new[m] - rd_old[m]
                for j in inn[i]:
                    rm = corr_d[y1[j]]
                    d += rm[cat] - rm[old1]
                if d >= 0.0 or u1s[t] < exp(d):
                    y1[i] = cat
                    acc1 = True
                    vt = val_truth[i]
                    if vt >= 0:
                        self.val1_correct += int(cat == vt) - int(old1 == vt)
            acc2 = False
            old2 = y2[i]
            if cat != old2:
                d = row[cat] - row[old2]
                ru_new, ru_old = corr_u[cat], corr_u[old2]
                for j in und[i]:
                    m = y2[j]
                    d += ru_new[m] - ru_old[m]
                rd_new, rd_old = corr_d[cat], corr_d[old2]
                for j in out[i]:
                    m = y2[j]
                    d += rd_new[m] - rd_old[m]
                for j in inn[i]:
                    rm = corr_d[y2[j]]
                    d += rm[cat] - rm[old2]
                if d >= 0.0 or u2s[t] < exp(d):
                    y2[i] = cat
                    acc2 = True
                    tt = train_truth[i]
                    if tt >= 0:
                        self.train2_correct += int(cat == tt) - int(old2 == tt)
            if acc1 or acc2:
                accepted += 1
                c1, c2 = y1[i], y2[i]
                if c1 != c2:
                    plus[c1].append(i)
                    minus[c2].append(i)
                g1, g2 = gu_acc[c1], gu_acc[c2]
                for j in und[i]:
                    g1[y1[j]] += 0.5
                    g2[y2[j]] -= 0.5
                g1, g2 = gd_acc[c1], gd_acc[c2]
                for j in out[i]:
                    g1[y1[j]] += 0.5
                    g2[y2[j]] -= 0.5
                for j in inn[i]:
                    gd_acc[y1[j]][c1] += 0.5
                    gd_acc[y2[j]][c2] -= 0.5

        grad = ParameterVector.zeros(
            c, self.net.num_features,
            0 if self.embeddings is None else self.embeddings.shape[1],
        )
        for cat in range(c):
            if plus[cat]:
                grad.attr[cat] += self.features[plus[cat]].sum(axis=0)
                if grad.embed_dim:
                    grad.deep[cat] += self.embeddings[plus[cat]].sum(axis=0)
            if minus[cat]:
                grad.attr[cat] -= self.features[minus[cat]].sum(axis=0)
                if grad.embed_dim:
                    grad.deep[cat] -= self.embeddings[minus[cat]].sum(axis=0)
        grad.corr_undirected += np.asarray(gu_acc)
        grad.corr_directed += np.asarray(gd_acc)
        return grad, accepted


def _run_pair_rounds(
    net, split, config, params, embeddings, engines, round_steps, tracker,
    send_round=None, recv_round=None,
):
    """Shared round loop for serial and parallel two-chain training.

    ``engines`` is a list of in-process _PairChains for the serial path; the
    parallel path passes ``send_round``/``recv_round`` callbacks instead.
    """
    lr = config.resolved_learning_rate()
    n_val = max(len(split.validation), 1)
    workers = len(round_steps)
    stop_reason = StopReason.MAX_ITERATIONS
    for batch in range(1, config.max_iterations + 1):
        evaluate = batch % config.eval_every == 0 or batch == config.max_iterations
        if engines is not None:
            results = [
                engine.run_batch(steps)
                for engine, steps in zip(engines, round_steps)
            ]
            grads = [grad for grad, _ in results]
            val_correct = sum(engine.val1_correct for engine in engines)
            train2 = sum(engine.train2_correct for engine in engines)
            proxy = engines[0].chain1_log_potential() if evaluate else 0.0
        else:
            send_round(params, evaluate)
            grads, val_correct, train2, proxy = recv_round()
        grad = _tree_sum(grads)
        _apply_gradient(params, grad, lr)
        if engines is not None:
            for engine in engines:
                engine.set_params(params)
        if evaluate:
            val_acc = val_correct / (workers * n_val)
            train_metric = train2 / (workers * max(len(split.train), 1))
            if tracker.record(batch, train_metric, val_acc, proxy, params):
                return StopReason.EARLY_STOPPED
    return stop_reason


def _tree_sum(grads: list[SufficientStatistics]) -> SufficientStatistics:
    """Fixed-order pairwise-tree reduction, independent of worker timing."""
    items = list(grads)
    while len(items) > 1:
        items = [
            items[k] + items[k + 1] if k + 1 < len(items) else items[k]
            for k in range(0, len(items), 2)
        ]
    return items[0]


def _round_steps(batch_size: int, workers: int) -> list[int]:
    base, remainder = divmod(batch_size, workers)
    return [base + (1 if w < remainder else 0) for w in range(workers)]


def train_mh_plus(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    config: LearnerConfig,
    embeddings: np.ndarray | None = None,
    gradient_oracle: Callable[[ParameterVector], SufficientStatistics] | None = None,
    init_attr: np.ndarray | None = None,
    init_deep: np.ndarray | None = None,
) -> TrainingRun:
    """Two-chain mini-batch learner, initialized from the regression learner.

    ``gradient_oracle`` replaces the sampled batch gradient with an exact one
    (testing hook that isolates the ascent loop from estimator noise); in that
    mode the loop runs to convergence or the iteration cap without patience.
    """
    started = time.perf_counter()
    sr_run = train_sr(
        net, split, replace(config, learner="sr"), embeddings, init_attr, init_deep
    )
    params = sr_run.best_params.copy()
    initial = params.copy()
    if net.num_categories < 2 and gradient_oracle is None:
        return replace(
            sr_run, config=config, initial_params=initial,
            seconds=time.perf_counter() - started,
        )
    tracker = _Tracker(config.patience)
    train_map = _split_labels_view(net, split.train)
    val_map = _split_labels_view(net, split.validation)

    if gradient_oracle is not None:
        lr = config.resolved_learning_rate()
        stop_reason = StopReason.MAX_ITERATIONS
        full_config = net.label_array().copy()
        for batch in range(1, config.max_iterations + 1):
            grad = gradient_oracle(params)
            if grad.max_abs() < 1e-9:
                stop_reason = StopReason.CONVERGED
                break
            _apply_gradient(params, grad, lr)
            if batch % config.eval_every == 0:
                full_config, _ = conditional_sweep(
                    net, params, full_config, train_map, embeddings
                )
                tracker.record(
                    batch, 0.0, _accuracy(full_config, val_map),
                    grad.max_abs(), params,
                )
        if tracker.best_params is None:
            tracker.best_params = params.copy()
        return TrainingRun(
            config=config,
            history=tracker.history,
            best_params=params.copy(),
            best_validation_accuracy=tracker.best_accuracy,
            best_iteration=tracker.best_iteration,
            stop_reason=stop_reason,
            seconds=time.perf_counter() - started,
            initial_params=initial,
        )

    engine = _PairChains(
        net, train_map, val_map, params, embeddings, stream(config.seed, 0)
    )
    stop_reason = _run_pair_rounds(
        net, split, config, params, embeddings, [engine], [config.batch_size],
        tracker,
    )
    if tracker.best_params is None:
        tracker.best_params = params.copy()
    return TrainingRun(
        config=config,
        history=tracker.history,
        best_params=tracker.best_params,
        best_validation_accuracy=tracker.best_accuracy,
        best_iteration=tracker.best_iteration,
        stop_reason=stop_reason,
        seconds=time.perf_counter() - started,
        initial_params=initial,
    )


def _pair_worker(conn, net, train_map, val_map, config, embeddings, blocks, index, steps):
    """Subprocess body: owns one chain pair, answers per-round run requests."""
    params = ParameterVector(*[b.copy() for b in blocks])
    engine = _PairChains(
        net, train_map, val_map, params, embeddings, stream(config.seed, index)
    )
    try:
        while True:
            message = conn.recv()
            if message[0] == "stop":
                break
            _, new_blocks, evaluate = message
            engine.set_params(ParameterVector(*new_blocks))
            grad, _ = engine.run_batch(steps)
            proxy = engine.chain1_log_potential() if evaluate else 0.0
            conn.send(
                (grad.blocks(), engine.val1_correct, engine.train2_correct, proxy)
            )
    finally:
        conn.close()


def train_parallel(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    config: LearnerConfig,
    embeddings: np.ndarray | None = None,
    init_attr: np.ndarray | None = None,
    init_deep: np.ndarray | None = None,
) -> TrainingRun:
    """Two-chain learner with the batch divided across worker processes.

    Each worker owns an independent chain pair and the stream for its index;
    the coordinator sums worker gradients in a fixed order and applies one
    update per round.  With ``workers=1`` this is exactly the serial learner.
    """
    if config.workers <= 1:
        return train_mh_plus(
            net, split, config, embeddings,
            init_attr=init_attr, init_deep=init_deep,
        )
    started = time.perf_counter()
    sr_run = train_sr(
        net, split, replace(config, learner="sr"), embeddings, init_attr, init_deep
    )
    params = sr_run.best_params.copy()
    initial = params.copy()
    if net.num_categories < 2:
        return replace(
            sr_run, config=config, initial_params=initial,
            seconds=time.perf_counter() - started,
        )
    train_map = _split_labels_view(net, split.train)
    val_map = _split_labels_view(net, split.validation)
    steps = _round_steps(config.batch_size, config.workers)

    ctx = mp.get_context()
    pipes, processes = [], []
    for index in range(config.workers):
        parent, child = ctx.Pipe()
        process = ctx.Process(
            target=_pair_worker,
            args=(
                child, net, train_map, val_map, config, embeddings,
                params.blocks(), index, steps[index],
            ),
        )
        process.start()
        child.close()
        pipes.append(parent)
        processes.append(process)

    def send_round(current, evaluate):
        for pipe in pipes:
            pipe.send(("run", current.blocks(), evaluate))

    def recv_round():
        grads, val_correct, train2, proxy = [], 0, 0, 0.0
        for pipe in pipes:
            blocks, vc, t2, lp = pipe.recv()
            grads.append(ParameterVector(*blocks))
            val_correct += vc
            train2 += t2
            proxy += lp / len(pipes)
        return grads, val_correct, train2, proxy

    tracker = _Tracker(config.patience)
    try:
        stop_reason = _run_pair_rounds(
            net, split, config, params, embeddings, None, steps, tracker,
            send_round=send_round, recv_round=recv_round,
        )
    finally:
        for pipe in pipes:
            try:
                pipe.send(("stop",))
            except (BrokenPipeError, OSError):
                pass
        for process in processes:
            process.join(timeout=30)
            if process.is_alive():
                process.terminate()
        for pipe in pipes:
            pipe.close()
    if tracker.best_params is None:
        tracker.best_params = params.copy()
    return TrainingRun(
        config=config,
        history=tracker.history,
        best_params=tracker.best_params,
        best_validation_accuracy=tracker.best_accuracy,
        best_iteration=tracker.best_iteration,
        stop_reason=stop_reason,
        seconds=time.perf_counter() - started,
        initial_params=initial,
    )


def train(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    config: LearnerConfig,
    embeddings: np.ndarray | None = None,
    init_attr: np.ndarray | None = None,
    init_deep: np.ndarray | None = None,
) -> TrainingRun:
    """Dispatch to the configured learner (parallel for mh+ with workers > 1)."""
    if config.learner == "lbp":
        return train_lbp(net, split, config, embeddings)
    if config.learner == "sr":
        return train_sr(net, split, config, embeddings, init_attr, init_deep)
    if config.learner == "mh":
        return train_mh(net, split, config, embeddings, init_attr, init_deep)
    if config.workers > 1:
        return train_parallel(
            net, split, config, embeddings,
            init_attr=init_attr, init_deep=init_deep,
        )
    return train_mh_plus(
        net, split, config, embeddings,
        init_attr=init_attr, init_deep=init_deep,
    )


def default_predict_method(learner: str) -> str:
    return "max-sum" if learner == "lbp" else "mh"


def predict(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    method: str = "mh",
    steps: int | None = None,
    clamp: Mapping[int, int] | None = None,
    seed: int = 0,
    bp_sweeps: int = 50,
) -> np.ndarray:
    """Full label configuration with the known labels held fixed.

    ``clamp`` defaults to every label the network carries; pass the labels
    actually known at prediction time (e.g. train + validation) when held-out
    labels must stay hidden.  ``method`` is ``"max-sum"`` (belief-propagation
    decoding) or ``"mh"`` (best configuration found by sampling).
    """
    clamp = dict(net.labels) if clamp is None else dict(clamp)
    out = np.zeros(net.num_nodes, dtype=np.int64)
    for node, cat in clamp.items():
        out[node] = cat
    if params.num_categories < 2 or len(clamp) == net.num_nodes:
        return out
    if method == "max-sum":
        return max_sum_decode(
            net, params, embeddings, clamp_labels=True, labels=clamp,
            max_sweeps=bp_sweeps,
        )
    if method != "mh":
        raise ValueError(f"unknown prediction method {method!r}")
    if steps is None:
        steps = max(10_000, 20 * net.num_nodes)
    return sample_map(
        net, params, embeddings, clamp=clamp, steps=steps, rng=stream(seed)
    )
