"""Network loading, validation, filtering, and label splitting."""

import numpy as np
import pytest

from netlabel.errors import (
    AllLabelsRemoved,
    DuplicateEdge,
    EmptyLabelSet,
    InconsistentFeatureArity,
    NonFiniteFeature,
    SelfLoopEdge,
    UnknownNodeInEdge,
)
from netlabel.network import (
    EdgeKind,
    LoadOptions,
    filter_rare_categories,
    load_category_dictionary,
    load_network,
    save_category_dictionary,
    save_network,
    split_labels,
)

from util import make_network


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def small_files(tmp_path, node_rows=None, edge_rows=None):
    nodes = write(
        tmp_path / "nodes.tsv",
        "id\tlabel\tf0\tf1\n"
        + "\n".join(
            node_rows
            or ["a\tx\t1.0\t2.0", "b\ty\t0.5\t-1.0", "c\t\t0.0\t0.0"]
        )
        + "\n",
    )
    edges = write(
        tmp_path / "edges.tsv",
        "\n".join(edge_rows if edge_rows is not None else ["a\tb\tU", "b\tc\tD"]) + "\n",
    )
    return nodes, edges


class TestLoadNetwork:
    def test_basic_load(self, tmp_path):
        net = load_network(*small_files(tmp_path))
        assert net.num_nodes == 3
        assert net.num_categories == 2
        assert len(net.edges) == 2
        assert net.labels == {0: 0, 1: 1}
        assert net.category_names == ("x", "y")
        np.testing.assert_array_equal(net.features[0], [1.0, 2.0])

    def test_unknown_node_in_edge(self, tmp_path):
        files = small_files(tmp_path, edge_rows=["a\tnode99\tU"])
        with pytest.raises(UnknownNodeInEdge):
            load_network(*files)

    def test_nan_feature_rejected(self, tmp_path):
        files = small_files(
            tmp_path, node_rows=["a\tx\tNaN\t2.0", "b\ty\t0.5\t-1.0"]
        )
        with pytest.raises(NonFiniteFeature):
            load_network(*files)

    def test_arity_mismatch(self, tmp_path):
        files = small_files(tmp_path, node_rows=["a\tx\t1.0", "b\ty\t0.5\t-1.0"])
        with pytest.raises(InconsistentFeatureArity) as err:
            load_network(*files)
        assert "line 2" in str(err.value)

    def test_duplicate_edge(self, tmp_path):
        files = small_files(tmp_path, edge_rows=["a\tb\tU", "b\ta\tU"])
        with pytest.raises(DuplicateEdge):
            load_network(*files)

    def test_directed_pair_is_not_duplicate(self, tmp_path):
        net = load_network(*small_files(tmp_path, edge_rows=["a\tb\tD", "b\ta\tD"]))
        assert len(net.edges) == 2

    def test_self_loop_rejected(self, tmp_path):
        files = small_files(tmp_path, edge_rows=["a\ta\tU"])
        with pytest.raises(SelfLoopEdge):
            load_network(*files)

    def test_undirected_normalized(self, tmp_path):
        net = load_network(*small_files(tmp_path, edge_rows=["b\ta\tU"]))
        assert net.edges[0].src == 0 and net.edges[0].dst == 1
        assert net.edges[0].kind is EdgeKind.UNDIRECTED

    def test_category_dictionary_reuse(self, tmp_path):
        files = small_files(tmp_path)
        net = load_network(*files, LoadOptions(categories={"x": 1, "y": 0}))
        assert net.labels == {0: 1, 1: 0}
        assert net.category_names == ("y", "x")

    def test_category_dictionary_round_trip(self, tmp_path):
        net = load_network(*small_files(tmp_path))
        path = tmp_path / "categories.json"
        save_category_dictionary(net, path)
        assert load_category_dictionary(path) == {"x": 0, "y": 1}

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        net = make_network(
            rng.normal(size=(5, 3)),
            [(0, 1, "U"), (2, 1, "D"), (3, 4, "U")],
            {0: 1, 3: 0},
            2,
        )
        save_network(net, tmp_path / "n.tsv", tmp_path / "e.tsv")
        again = load_network(tmp_path / "n.tsv", tmp_path / "e.tsv")
        assert again.node_ids == net.node_ids
        assert again.edges == net.edges
        assert again.labels == net.labels
        assert again.category_names == net.category_names
        np.testing.assert_array_equal(again.features, net.features)


class TestFilterRareCategories:
    def net_with_counts(self, count_a, count_b):
        n = count_a + count_b + 1
        labels = {i: 0 for i in range(count_a)}
        labels.update({count_a + i: 1 for i in range(count_b)})
        return make_network(np.zeros((n, 1)), [], labels, 2)

    def test_threshold(self):
        net = filter_rare_categories(self.net_with_counts(12, 3), min_count=10)
        assert net.num_categories == 1
        assert set(net.labels.values()) == {0}
        assert len(net.labels) == 12

    def test_noop(self):
        original = self.net_with_counts(12, 12)
        net = filter_rare_categories(original, min_count=10)
        assert net.labels == original.labels
        assert net.num_categories == 2

    def test_all_removed(self):
        with pytest.raises(AllLabelsRemoved):
            filter_rare_categories(self.net_with_counts(2, 0), min_count=10)

    def test_idempotent(self):
        once = filter_rare_categories(self.net_with_counts(12, 3), min_count=10)
        twice = filter_rare_categories(once, min_count=10)
        assert once.labels == twice.labels
        assert once.category_names == twice.category_names


class TestSplitLabels:
    def labeled_net(self, n):
        return make_network(
            np.zeros((n, 1)), [], {i: i % 2 for i in range(n)}, 2
        )

    def test_sizes_100(self):
        split = split_labels(self.labeled_net(100), (0.5, 0.1, 0.4), seed=1)
        assert (len(split.train), len(split.validation), len(split.test)) == (50, 10, 40)

    def test_deterministic(self):
        net = self.labeled_net(40)
        a = split_labels(net, (0.5, 0.1, 0.4), seed=7)
        b = split_labels(net, (0.5, 0.1, 0.4), seed=7)
        assert (a.train, a.validation, a.test) == (b.train, b.validation, b.test)

    def test_largest_remainder_rounding(self):
        split = split_labels(self.labeled_net(10), (0.5, 0.1, 0.4), seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (5, 1, 4)
        # 7 labels: floors (3, 0, 2), remainders (.5, .7, .8) -> test then val
        split = split_labels(self.labeled_net(7), (0.5, 0.1, 0.4), seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (3, 1, 3)

    def test_partition_covers_labeled_set(self):
        for seed in range(5):
            net = self.labeled_net(23)
            split = split_labels(net, (0.5, 0.1, 0.4), seed=seed)
            assert split.all_labeled == net.labeled_nodes

    def test_empty_label_set(self):
        net = make_network(np.zeros((3, 1)), [], {}, 0)
        with pytest.raises(EmptyLabelSet):
            split_labels(net)

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            split_labels(self.labeled_net(10), (0.5, 0.2, 0.4))
