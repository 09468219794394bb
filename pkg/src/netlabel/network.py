"""Partially labeled networks: the input object every other module consumes.

A network couples a node table (dense indices, one feature row per node), a
typed edge list, and a partial label map over a dense category range.  Objects
are immutable after construction and safe to share across worker processes.

File formats
------------
Node file (UTF-8, tab-separated, newline-terminated, no BOM)::

    id<TAB>label<TAB>f0<TAB>f1...      # header
    u17<TAB>paris<TAB>0.5<TAB>1.25     # label empty string when unlabeled

Edge file (no header)::

    src<TAB>dst<TAB>D|U                # D = directed, U = undirected

The category dictionary (JSON map name -> dense id) is persisted beside any
trained model so predictions can be mapped back to the original label names.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    AllLabelsRemoved,
    DuplicateEdge,
    EmptyLabelSet,
    InconsistentFeatureArity,
    NetworkFormatError,
    NonFiniteFeature,
    SelfLoopEdge,
    UnknownNodeInEdge,
)


class EdgeKind(Enum):
    DIRECTED = "D"
    UNDIRECTED = "U"


class Edge(NamedTuple):
    src: int
    dst: int
    kind: EdgeKind


@dataclass(frozen=True)
class LoadOptions:
    """Options for :func:`load_network`.

    categories: reuse an existing name -> id dictionary (e.g. the one stored
        in a model checkpoint) instead of building a fresh one; labels not in
        the dictionary are rejected.
    """

    categories: Mapping[str, int] | None = None


class Adjacency:
    """Per-node incidence lists plus flat edge arrays for vectorized passes.

    For node ``i``:

    - ``undirected[i]``: neighbors across undirected edges,
    - ``outgoing[i]``: ``j`` for directed edges ``i -> j``,
    - ``incoming[i]``: ``j`` for directed edges ``j -> i``.

    ``src``/``dst``/``is_directed`` mirror the edge list as numpy arrays.
    """

    def __init__(self, num_nodes: int, edges: Sequence[Edge]):
        self.undirected = [[] for _ in range(num_nodes)]
        self.outgoing = [[] for _ in range(num_nodes)]
        self.incoming = [[] for _ in range(num_nodes)]
        src, dst, direct = [], [], []
        for e in edges:
            src.append(e.src)
            dst.append(e.dst)
            direct.append(e.kind is EdgeKind.DIRECTED)
            if e.kind is EdgeKind.UNDIRECTED:
                self.undirected[e.src].append(e.dst)
                self.undirected[e.dst].append(e.src)
            else:
                self.outgoing[e.src].append(e.dst)
                self.incoming[e.dst].append(e.src)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.is_directed = np.asarray(direct, dtype=bool)


@dataclass(frozen=True)
class PartiallyLabeledNetwork:
    """Immutable graph with features on all nodes and labels on a subset.

    node_ids: original string ids, position = dense node index.
    features: (N, D) float64 matrix, one row per node, read-only.
    edges: validated edge tuples; undirected edges stored once with src < dst.
    labels: dense node index -> dense category id, for labeled nodes only.
    category_names: position = dense category id.
    """

    node_ids: tuple[str, ...]
    features: np.ndarray
    edges: tuple[Edge, ...]
    labels: dict[int, int]
    category_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2 or feats.shape[0] != len(self.node_ids):
            raise NetworkFormatError(
                f"feature matrix shape {feats.shape} does not match "
                f"{len(self.node_ids)} nodes"
            )
        if not np.all(np.isfinite(feats)):
            raise NonFiniteFeature("feature matrix contains non-finite values")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        object.__setattr__(self, "category_names", tuple(self.category_names))
        object.__setattr__(self, "labels", dict(self.labels))
        self._validate()

    def _validate(self):
        n = self.num_nodes
        seen = set()
        for e in self.edges:
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise UnknownNodeInEdge(f"edge {e} references an invalid node index")
            if e.src == e.dst:
                raise SelfLoopEdge(f"self-loop at node {e.src}")
            if e.kind is EdgeKind.UNDIRECTED and e.src > e.dst:
                raise NetworkFormatError(
                    f"undirected edge {e} must be stored with src < dst"
                )
            if e in seen:
                raise DuplicateEdge(f"duplicate edge {e}")
            seen.add(e)
        c = self.num_categories
        for node, cat in self.labels.items():
            if not (0 <= node < n):
                raise NetworkFormatError(f"label on invalid node index {node}")
            if not (0 <= cat < c):
                raise NetworkFormatError(f"label {cat} outside [0, {c}) on node {node}")

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_categories(self) -> int:
        return len(self.category_names)

    @property
    def labeled_nodes(self) -> frozenset[int]:
        return frozenset(self.labels)

    @property
    def unlabeled_nodes(self) -> frozenset[int]:
        return frozenset(range(self.num_nodes)) - self.labeled_nodes

    @cached_property
    def adjacency(self) -> Adjacency:
        return Adjacency(self.num_nodes, self.edges)

    def label_array(self, fill: int = -1) -> np.ndarray:
        """Dense label view: category id where labeled, ``fill`` elsewhere."""
        out = np.full(self.num_nodes, fill, dtype=np.int64)
        for node, cat in self.labels.items():
            out[node] = cat
        return out

    def with_labels(
        self,
        labels: Mapping[int, int],
        category_names: Sequence[str] | None = None,
    ) -> "PartiallyLabeledNetwork":
        """Same graph and features with a replaced label map."""
        return PartiallyLabeledNetwork(
            node_ids=self.node_ids,
            features=self.features,
            edges=self.edges,
            labels=dict(labels),
            category_names=tuple(
                self.category_names if category_names is None else category_names
            ),
        )


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint partition of the labeled node set."""

    train: frozenset[int]
    validation: frozenset[int]
    test: frozenset[int]

    def __post_init__(self):
        if self.train & self.validation or self.train & self.test or self.validation & self.test:
            raise ValueError("split parts must be pairwise disjoint")

    @property
    def all_labeled(self) -> frozenset[int]:
        return self.train | self.validation | self.test


def _parse_float(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise NetworkFormatError(f"cannot parse feature value {token!r}", line) from None
    if not math.isfinite(value):
        raise NonFiniteFeature(f"non-finite feature value {token!r}", line)
    return value


def load_network(
    node_file: str | Path,
    edge_file: str | Path,
    options: LoadOptions | None = None,
) -> PartiallyLabeledNetwork:
    """Read and validate a network from the tab-separated file pair.

    Categories are re-indexed densely: either through ``options.categories``
    or by sorting the distinct label names seen in the node file.  Malformed
    rows raise with the 1-based line number in the message.
    """
    options = options or LoadOptions()
    node_path, edge_path = Path(node_file), Path(edge_file)

    node_ids: list[str] = []
    index_of: dict[str, int] = {}
    raw_labels: list[str | None] = []
    rows: list[list[float]] = []
    arity: int | None = None

    with node_path.open("r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise NetworkFormatError("empty node file", 1)
        cols = header.rstrip("\n").split("\t")
        if len(cols) < 2 or cols[0] != "id" or cols[1] != "label":
            raise NetworkFormatError("node header must start with id<TAB>label", 1)
        arity = len(cols) - 2
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) - 2 != arity:
                raise InconsistentFeatureArity(
                    f"expected {arity} features, found {len(parts) - 2}", lineno
                )
            node_id, label = parts[0], parts[1]
            if node_id in index_of:
                raise NetworkFormatError(f"duplicate node id {node_id!r}", lineno)
            index_of[node_id] = len(node_ids)
            node_ids.append(node_id)
            raw_labels.append(label or None)
            rows.append([_parse_float(tok, lineno) for tok in parts[2:]])

    if options.categories is not None:
        cat_index = dict(options.categories)
        names = [None] * len(cat_index)
        for name, idx in cat_index.items():
            names[idx] = name
        category_names = tuple(names)
    else:
        seen_names = sorted({lab for lab in raw_labels if lab is not None})
        cat_index = {name: i for i, name in enumerate(seen_names)}
        category_names = tuple(seen_names)

    labels: dict[int, int] = {}
    for idx, lab in enumerate(raw_labels):
        if lab is None:
            continue
        if lab not in cat_index:
            raise NetworkFormatError(
                f"label {lab!r} not present in the category dictionary", idx + 2
            )
        labels[idx] = cat_index[lab]

    edges: list[Edge] = []
    seen_edges: set[Edge] = set()
    with edge_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise NetworkFormatError("edge rows are src<TAB>dst<TAB>D|U", lineno)
            src_id, dst_id, kind_tok = parts
            if src_id not in index_of:
                raise UnknownNodeInEdge(f"unknown node id {src_id!r}", lineno)
            if dst_id not in index_of:
                raise UnknownNodeInEdge(f"unknown node id {dst_id!r}", lineno)
            try:
                kind = EdgeKind(kind_tok)
            except ValueError:
                raise NetworkFormatError(
                    f"edge kind must be D or U, found {kind_tok!r}", lineno
                ) from None
            src, dst = index_of[src_id], index_of[dst_id]
            if src == dst:
                raise SelfLoopEdge(f"self-loop on node id {src_id!r}", lineno)
            if kind is EdgeKind.UNDIRECTED and src > dst:
                src, dst = dst, src
            edge = Edge(src, dst, kind)
            if edge in seen_edges:
                raise DuplicateEdge(f"duplicate edge {src_id!r} -> {dst_id!r}", lineno)
            seen_edges.add(edge)
            edges.append(edge)

    features = np.asarray(rows, dtype=np.float64).reshape(len(node_ids), arity)
    return PartiallyLabeledNetwork(
        node_ids=tuple(node_ids),
        features=features,
        edges=tuple(edges),
        labels=labels,
        category_names=category_names,
    )


def save_network(
    net: PartiallyLabeledNetwork,
    node_file: str | Path,
    edge_file: str | Path,
) -> None:
    """Write the canonical file pair; reloading reproduces the network."""
    with Path(node_file).open("w", encoding="utf-8", newline="\n") as fh:
        header = ["id", "label"] + [f"f{j}" for j in range(net.num_features)]
        fh.write("\t".join(header) + "\n")
        for i, node_id in enumerate(net.node_ids):
            label = net.category_names[net.labels[i]] if i in net.labels else ""
            feats = "\t".join(repr(v) for v in net.features[i].tolist())
            row = f"{node_id}\t{label}"
            if net.num_features:
                row += "\t" + feats
            fh.write(row + "\n")
    with Path(edge_file).open("w", encoding="utf-8", newline="\n") as fh:
        for e in net.edges:
            fh.write(f"{net.node_ids[e.src]}\t{net.node_ids[e.dst]}\t{e.kind.value}\n")


def save_category_dictionary(net: PartiallyLabeledNetwork, path: str | Path) -> None:
    mapping = {name: i for i, name in enumerate(net.category_names)}
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(mapping, fh, sort_keys=True, indent=0)
        fh.write("\n")


def load_category_dictionary(path: str | Path) -> dict[str, int]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return {str(k): int(v) for k, v in json.load(fh).items()}


def filter_rare_categories(
    net: PartiallyLabeledNetwork, min_count: int = 10
) -> PartiallyLabeledNetwork:
    """Drop labels whose category has fewer than ``min_count`` labeled nodes.

    Affected nodes become unlabeled; the surviving categories are re-indexed
    densely (name order preserved).  Idempotent at a fixed ``min_count``.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = np.zeros(net.num_categories, dtype=np.int64)
    for cat in net.labels.values():
        counts[cat] += 1
    keep = [c for c in range(net.num_categories) if counts[c] >= min_count]
    if not keep:
        raise AllLabelsRemoved(
            f"no category has {min_count} or more labeled nodes"
        )
    if len(keep) == net.num_categories:
        return net
    remap = {old: new for new, old in enumerate(keep)}
    labels = {
        node: remap[cat] for node, cat in net.labels.items() if cat in remap
    }
    names = tuple(net.category_names[c] for c in keep)
    return net.with_labels(labels, names)


def partition_ids(
    ids: Sequence[int], fractions: Sequence[float], seed: int
) -> tuple[frozenset[int], ...]:
    """Uniform random partition of ``ids`` with largest-remainder rounding.

    Deterministic for a fixed seed.  Shared by :func:`split_labels` and the
    feature pipeline so both derive the identical train partition.
    """
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    ids = sorted(ids)
    n = len(ids)
    raw = [n * f for f in fractions]
    sizes = [int(math.floor(r)) for r in raw]
    leftover = n - sum(sizes)
    by_remainder = sorted(
        range(len(fractions)), key=lambda k: (-(raw[k] - sizes[k]), k)
    )
    for k in by_remainder[:leftover]:
        sizes[k] += 1
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    parts, start = [], 0
    for size in sizes:
        chunk = order[start : start + size]
        parts.append(frozenset(ids[j] for j in chunk))
        start += size
    return tuple(parts)


def split_labels(
    net: PartiallyLabeledNetwork,
    fractions: Sequence[float] = (0.5, 0.1, 0.4),
    seed: int = 0,
) -> DatasetSplit:
    """Partition the labeled node set into train/validation/test."""
    if not net.labels:
        raise EmptyLabelSet("network has no labeled nodes to split")
    train, validation, test = partition_ids(sorted(net.labels), fractions, seed)
    return DatasetSplit(train=train, validation=validation, test=test)
