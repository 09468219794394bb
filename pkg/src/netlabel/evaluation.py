"""Multi-class metrics, simple baselines, and the synthetic network generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .learning import conditional_sweep, fit_attribute_model
from .network import DatasetSplit, Edge, EdgeKind, PartiallyLabeledNetwork
from .params import ParameterVector


@dataclass
class CategoryMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int


@dataclass
class MetricsReport:
    """Confusion-matrix derived metrics.

    Macro values are unweighted means over all categories; a category that is
    never predicted contributes precision 0 (and one never present in the
    truth contributes recall 0).  Such categories are listed in
    ``undefined_precision`` / ``undefined_recall`` so reports can flag them.
    """

    micro_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_category: list[CategoryMetrics]
    confusion: np.ndarray
    undefined_precision: tuple[int, ...]
    undefined_recall: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "micro_accuracy": self.micro_accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_category": [
                {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "predicted": m.predicted,
                }
                for m in self.per_category
            ],
            "confusion": self.confusion.tolist(),
            "undefined_precision": list(self.undefined_precision),
            "undefined_recall": list(self.undefined_recall),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def format_table(self, category_names: Sequence[str] | None = None) -> str:
        names = category_names or [str(c) for c in range(len(self.per_category))]
        lines = [
            f"micro accuracy  {self.micro_accuracy:.4f}",
            f"macro precision {self.macro_precision:.4f}",
            f"macro recall    {self.macro_recall:.4f}",
            f"macro f1        {self.macro_f1:.4f}",
            "",
            f"{'category':>12}  {'prec':>7}  {'recall':>7}  {'f1':>7}  {'support':>7}",
        ]
        for name, m in zip(names, self.per_category):
            flag = " *" if m.predicted == 0 else ""
            lines.append(
                f"{name:>12}  {m.precision:7.4f}  {m.recall:7.4f}  "
                f"{m.f1:7.4f}  {m.support:7d}{flag}"
            )
        if self.undefined_precision:
            lines.append("* never predicted; precision set to 0 by convention")
        return "\n".join(lines)


def evaluate(
    truth: Mapping[int, int],
    predicted: Sequence[int],
    num_categories: int | None = None,
) -> MetricsReport:
    """Exact counting metrics of ``predicted`` against ``truth`` nodes."""
    if not truth:
        raise ValueError("truth label map is empty")
    if num_categories is None:
        num_categories = max(truth.values()) + 1
    c = num_categories
    confusion = np.zeros((c, c), dtype=np.int64)
    for node, actual in truth.items():
        confusion[actual, int(predicted[node])] += 1
    support = confusion.sum(axis=1)
    predicted_counts = confusion.sum(axis=0)
    diag = np.diag(confusion)

    per_category = []
    undefined_p, undefined_r = [], []
    for k in range(c):
        if predicted_counts[k] == 0:
            undefined_p.append(k)
            precision = 0.0
        else:
            precision = diag[k] / predicted_counts[k]
        if support[k] == 0:
            undefined_r.append(k)
            recall = 0.0
        else:
            recall = diag[k] / support[k]
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        per_category.append(
            CategoryMetrics(
                float(precision), float(recall), float(f1),
                int(support[k]), int(predicted_counts[k]),
            )
        )
    return MetricsReport(
        micro_accuracy=float(diag.sum() / confusion.sum()),
        macro_precision=float(np.mean([m.precision for m in per_category])),
        macro_recall=float(np.mean([m.recall for m in per_category])),
        macro_f1=float(np.mean([m.f1 for m in per_category])),
        per_category=per_category,
        confusion=confusion,
        undefined_precision=tuple(undefined_p),
        undefined_recall=tuple(undefined_r),
    )


def glp_baseline(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    max_rounds: int = 100,
) -> np.ndarray:
    """Iterative neighbor majority vote seeded with train + validation labels.

    Synchronous rounds; ties take the smallest category id; nodes that never
    receive a labeled neighbor fall back to the most common training label.
    """
    c = net.num_categories
    seeds = {i: net.labels[i] for i in (split.train | split.validation)}
    train_counts = np.zeros(c, dtype=np.int64)
    for i in split.train:
        train_counts[net.labels[i]] += 1
    fallback = int(np.argmax(train_counts)) if train_counts.sum() else 0

    neighbors = [[] for _ in range(net.num_nodes)]
    for e in net.edges:
        neighbors[e.src].append(e.dst)
        neighbors[e.dst].append(e.src)

    assigned = np.full(net.num_nodes, -1, dtype=np.int64)
    for node, cat in seeds.items():
        assigned[node] = cat
    for _ in range(max_rounds):
        previous = assigned.copy()
        for node in range(net.num_nodes):
            if node in seeds:
                continue
            votes = np.zeros(c, dtype=np.int64)
            for j in neighbors[node]:
                if previous[j] >= 0:
                    votes[previous[j]] += 1
            if votes.sum():
                assigned[node] = int(np.argmax(votes))
        if np.array_equal(assigned, previous):
            break
    assigned[assigned < 0] = fallback
    return assigned


def logistic_baseline(
    net: PartiallyLabeledNetwork,
    split: DatasetSplit,
    l2: float = 0.0,
) -> np.ndarray:
    """Attribute-only multinomial regression on training labels.

    Identical to the regression learner's first stage applied to every node
    outside the training partition.
    """
    train_nodes = sorted(split.train)
    targets = [net.labels[i] for i in train_nodes]
    attr, _ = fit_attribute_model(net, train_nodes, targets, l2)
    params = ParameterVector.zeros(net.num_categories, net.num_features)
    params.attr[...] = attr
    config, _ = conditional_sweep(
        net,
        params,
        np.zeros(net.num_nodes, dtype=np.int64),
        {i: net.labels[i] for i in train_nodes},
    )
    return config


@dataclass(frozen=True)
class SyntheticSpec:
    """Homophily network with Gaussian category-signal features.

    ``p_same`` defaults to the strong intra-category mention preference
    observed for US users in the motivating measurements.
    """

    num_nodes: int
    num_categories: int
    p_same: float = 0.95
    mean_degree: float = 8.0
    feature_signal: float = 1.0
    labeled_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_same <= 1.0:
            raise ValueError("p_same must lie in [0, 1]")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ValueError("labeled_fraction must lie in (0, 1]")
        if self.num_nodes < 2 or self.num_categories < 1:
            raise ValueError("need at least 2 nodes and 1 category")


def generate_synthetic(spec: SyntheticSpec) -> PartiallyLabeledNetwork:
    """Deterministic synthetic instance: undirected homophily graph.

    Categories are uniform; each of ~N*mean_degree/2 edges joins two nodes of
    the same category with probability ``p_same`` (otherwise a uniformly
    chosen different category); features are a one-hot category mean scaled
    by ``feature_signal`` plus unit Gaussian noise.
    """
    rng = np.random.default_rng(spec.seed)
    n, c = spec.num_nodes, spec.num_categories
    cats = rng.integers(0, c, n)
    pools = [np.flatnonzero(cats == k) for k in range(c)]

    target = int(round(n * spec.mean_degree / 2.0))
    edges: list[Edge] = []
    seen: set[tuple[int, int]] = set()
    chunk = max(1024, target)
    while len(edges) < target:
        firsts = rng.integers(0, n, chunk).tolist()
        coins = (rng.random(chunk) < spec.p_same).tolist()
        cat_picks = rng.random(chunk).tolist()
        node_picks = rng.random(chunk).tolist()
        for u, same, rc, rv in zip(firsts, coins, cat_picks, node_picks):
            cat = int(cats[u])
            if same or c == 1:
                pool = pools[cat]
            else:
                other = int(rc * (c - 1))
                other += other >= cat
                pool = pools[other]
            if len(pool) == 0:
                continue
            v = int(pool[int(rv * len(pool))])
            if v == u:
                continue
            key = (u, v) if u < v else (v, u)
            if key in seen:
                continue
            seen.add(key)
            edges.append(Edge(key[0], key[1], EdgeKind.UNDIRECTED))
            if len(edges) == target:
                break

    features = rng.standard_normal((n, c))
    features[np.arange(n), cats] += spec.feature_signal

    labeled_count = int(round(n * spec.labeled_fraction))
    labeled = rng.permutation(n)[:labeled_count]
    labels = {int(i): int(cats[i]) for i in labeled}
    return PartiallyLabeledNetwork(
        node_ids=tuple(f"n{i}" for i in range(n)),
        features=features,
        edges=tuple(edges),
        labels=labels,
        category_names=tuple(str(k) for k in range(c)),
    )
