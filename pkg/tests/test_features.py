"""Feature pipeline: MI tables, content aggregation, profile encoding."""

import json
import math

import numpy as np
import pytest

from netlabel.errors import EmptyCorpus, NetworkFormatError, SchemaMismatch
from netlabel.features import (
    FeatureSchema,
    ProfileField,
    RawUserRecord,
    build_mi_table,
    content_features,
    encode_profile,
    featurize,
    fit_schema,
    infer_field_kinds,
    read_raw_records,
    whitespace_tokenize,
    write_node_file,
)
from netlabel.network import load_network


def user(uid, label, docs, profile=None):
    return RawUserRecord(uid, profile or {}, docs, label)


def hand_mi(records, token, category_names):
    """Independent contingency computation of the smoothed, clamped score."""
    n = len(records)
    c = len(category_names)
    out = []
    for cat in category_names:
        n_wc = sum(
            1 for r in records
            if r.label == cat and any(token in d for d in r.docs)
        )
        n_w = sum(1 for r in records if any(token in d for d in r.docs))
        n_c = sum(1 for r in records if r.label == cat)
        denom = n + 2.0 * c
        p_joint = (n_wc + 1.0) / denom
        p_word = (n_w + c) / denom
        p_cat = (n_c + 2.0) / denom
        out.append(max(0.0, p_joint * math.log(p_joint / (p_word * p_cat))))
    return out


class TestTokenizer:
    def test_splits_on_space_and_punctuation(self):
        assert whitespace_tokenize("hello, world! foo.bar") == [
            "hello", "world", "foo", "bar",
        ]

    def test_keeps_hashtags_and_mentions(self):
        assert whitespace_tokenize("go @user #tag") == ["go", "@user", "#tag"]


class TestRawRecords:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "users.jsonl"
        rows = [
            {"id": "u1", "profile": {"tz": "utc"}, "docs": [["a", "b"]], "label": "x"},
            {"id": "u2", "profile": {}, "docs": [], "label": None},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        records = read_raw_records(path)
        assert [r.user_id for r in records] == ["u1", "u2"]
        assert records[0].docs == [["a", "b"]]
        assert records[1].label is None

    def test_malformed_json_line_numbered(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "u1", "docs": []}\n{oops\n')
        with pytest.raises(NetworkFormatError) as err:
            read_raw_records(path)
        assert "line 2" in str(err.value)


def toy_corpus():
    return [
        user("a1", "A", [["local", "common"]]),
        user("a2", "A", [["local", "common"]]),
        user("a3", "A", [["local", "common", "rare"]]),
        user("b1", "B", [["common", "other"]]),
        user("b2", "B", [["common", "other"]]),
        user("b3", "B", [["common"]]),
    ]


class TestMiTable:
    def test_exclusive_token_scores_its_category(self):
        table = build_mi_table(toy_corpus(), min_occurrence=1)
        row = table.scores[table.vocabulary["local"]]
        a, b = table.categories["A"], table.categories["B"]
        assert row[a] > 0.0
        assert row[b] == 0.0  # clamped at zero under smoothing

    def test_ubiquitous_token_near_zero(self):
        table = build_mi_table(toy_corpus(), min_occurrence=1)
        row = table.scores[table.vocabulary["common"]]
        assert np.all(np.abs(row) < 1e-9)

    def test_matches_hand_contingency(self):
        records = toy_corpus()
        table = build_mi_table(records, min_occurrence=1)
        names = sorted(table.categories)
        for token, r in table.vocabulary.items():
            np.testing.assert_allclose(
                table.scores[r], hand_mi(records, token, names), atol=1e-12
            )

    def test_min_occurrence_drops_rare_tokens(self):
        table = build_mi_table(toy_corpus(), min_occurrence=2)
        assert "rare" not in table.vocabulary
        assert "local" in table.vocabulary

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_mi_table([user("u", None, [["a"]])])


class TestContentFeatures:
    def table(self):
        return build_mi_table(toy_corpus(), min_occurrence=1)

    def test_no_known_tokens_zero_vector(self):
        vec = content_features(user("q", None, [["unseen"]]), self.table())
        np.testing.assert_array_equal(vec, np.zeros(4))

    def test_single_token_max_equals_mean(self):
        table = self.table()
        vec = content_features(user("q", None, [["local"]]), table)
        row = table.scores[table.vocabulary["local"]]
        np.testing.assert_allclose(vec[0::2], row)
        np.testing.assert_allclose(vec[1::2], row)

    def test_mean_over_distinct_tokens(self):
        table = self.table()
        vec = content_features(user("q", None, [["local", "common", "other"]]), table)
        rows = table.scores[
            [table.vocabulary[t] for t in ("common", "local", "other")]
        ]
        np.testing.assert_allclose(vec[1::2], rows.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(vec[0::2], rows.max(axis=0), atol=1e-12)

    def test_duplicates_ignored_by_default(self):
        table = self.table()
        once = content_features(user("q", None, [["local", "common"]]), table)
        many = content_features(
            user("q", None, [["local"], ["local", "common", "local"]]), table
        )
        np.testing.assert_array_equal(once, many)

    def test_token_order_irrelevant(self):
        table = self.table()
        a = content_features(user("q", None, [["local", "common", "other"]]), table)
        b = content_features(user("q", None, [["other"], ["common", "local"]]), table)
        np.testing.assert_array_equal(a, b)

    def test_occurrence_weighted_mean(self):
        table = self.table()
        vec = content_features(
            user("q", None, [["local", "local", "common"]]), table,
            occurrence_weighted=True,
        )
        r_local = table.scores[table.vocabulary["local"]]
        r_common = table.scores[table.vocabulary["common"]]
        np.testing.assert_allclose(vec[1::2], (2 * r_local + r_common) / 3.0)


class TestProfileEncoding:
    def schema(self):
        return FeatureSchema(
            (
                ProfileField("followers", "numeric"),
                ProfileField("lang", "categorical", ("en", "fr")),
            )
        )

    def test_unseen_categorical_maps_to_other(self):
        vec = encode_profile(user("u", None, [], {"lang": "de"}), self.schema())
        np.testing.assert_array_equal(vec, [0.0, 0.0, 0.0, 1.0])

    def test_log1p_zero(self):
        vec = encode_profile(user("u", None, [], {"followers": 0}), self.schema())
        assert vec[0] == 0.0

    def test_field_order_matches_schema(self):
        vec = encode_profile(
            user("u", None, [], {"lang": "fr", "followers": 9}), self.schema()
        )
        np.testing.assert_allclose(vec, [math.log1p(9), 0.0, 1.0, 0.0])

    def test_non_numeric_value_rejected(self):
        with pytest.raises(SchemaMismatch):
            encode_profile(
                user("u", None, [], {"followers": "many"}), self.schema()
            )

    def test_encoding_is_stable(self):
        record = user("u", None, [], {"lang": "en", "followers": 3})
        a = encode_profile(record, self.schema())
        b = encode_profile(record, self.schema())
        np.testing.assert_array_equal(a, b)

    def test_kind_inference(self):
        records = [
            user("a", None, [], {"n": 1, "lang": "en"}),
            user("b", None, [], {"n": 2.5, "lang": "fr"}),
        ]
        assert infer_field_kinds(records) == {"n": "numeric", "lang": "categorical"}


class TestFeaturize:
    def records(self):
        rng = np.random.default_rng(0)
        out = []
        for k in range(30):
            label = "A" if k % 2 == 0 else "B"
            tokens = ["hello", label.lower() * 3] + [f"w{rng.integers(5)}"]
            out.append(
                user(
                    f"u{k}",
                    label if k < 24 else None,
                    [tokens] * 3,
                    {"followers": int(rng.integers(100)), "lang": "en"},
                )
            )
        return out

    def test_representation_ignores_non_train_users(self):
        records = self.records()
        base = featurize(records, seed=3, min_docs=1, min_occurrence=1)
        # perturb documents of every user outside the train partition
        from netlabel.network import partition_ids

        labeled = [i for i, r in enumerate(records) if r.label is not None]
        train, _, _ = partition_ids(labeled, (0.5, 0.1, 0.4), 3)
        mutated = [
            RawUserRecord(r.user_id, r.profile, [["zzz", "qqq"]] * 3, r.label)
            if i not in train
            else r
            for i, r in enumerate(records)
        ]
        shuffled = featurize(mutated, seed=3, min_docs=1, min_occurrence=1)
        assert base.mi_table.vocabulary == shuffled.mi_table.vocabulary
        np.testing.assert_array_equal(base.mi_table.scores, shuffled.mi_table.scores)
        assert base.schema == shuffled.schema

    def test_min_docs_filter(self):
        records = self.records()
        records.append(user("thin", "A", [["hello"]]))
        dataset = featurize(records, seed=0, min_docs=2, min_occurrence=1)
        assert "thin" not in dataset.node_ids

    def test_split_matches_network_split(self, tmp_path):
        # the train partition chosen here must equal the one split_labels
        # derives later from the emitted node file (same fractions and seed)
        from netlabel.network import partition_ids, split_labels

        records = self.records()
        dataset = featurize(records, fractions=(0.5, 0.1, 0.4), seed=11,
                            min_docs=1, min_occurrence=1)
        node_path = tmp_path / "nodes.tsv"
        write_node_file(dataset, node_path)
        edge_path = tmp_path / "edges.tsv"
        edge_path.write_text("u0\tu1\tU\n")
        net = load_network(node_path, edge_path)
        split = split_labels(net, (0.5, 0.1, 0.4), seed=11)

        labeled_positions = [
            i for i, label in enumerate(dataset.labels) if label is not None
        ]
        train_positions, _, _ = partition_ids(labeled_positions, (0.5, 0.1, 0.4), 11)
        assert train_positions == split.train

    def test_node_file_round_trip(self, tmp_path):
        dataset = featurize(self.records(), seed=1, min_docs=1, min_occurrence=1)
        node_path = tmp_path / "nodes.tsv"
        write_node_file(dataset, node_path)
        edge_path = tmp_path / "edges.tsv"
        edge_path.write_text("u0\tu1\tU\n")
        net = load_network(node_path, edge_path)
        assert net.num_nodes == len(dataset.node_ids)
        np.testing.assert_allclose(net.features, dataset.features)
