"""Raw user records to feature rows: profile encoding and MI content scores.

Raw records arrive as JSON-lines, one user per line::

    {"id": "u1", "profile": {...}, "docs": [["tok", ...], ...], "label": "x"|null}

Everything fitted here (categorical vocabularies, the mutual-information
table) depends only on training-partition users, so validation and test
content never leaks into the representation.  The train partition is derived
with the same deterministic splitter the network module uses, so a later
``split_labels`` call with the same fractions and seed reproduces it.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyCorpus, NetworkFormatError, SchemaMismatch
from .network import partition_ids

Tokenizer = Callable[[str], list[str]]

_TOKEN_SPLIT = re.compile(r"[^\w#@]+", re.UNICODE)


def whitespace_tokenize(text: str) -> list[str]:
    """Reference tokenizer: split on spaces and punctuation."""
    return [tok for tok in _TOKEN_SPLIT.split(text) if tok]


@dataclass
class RawUserRecord:
    user_id: str
    profile: dict
    docs: list[list[str]]
    label: str | None = None


def read_raw_records(path) -> list[RawUserRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise NetworkFormatError(f"invalid JSON: {err}", lineno) from None
            if "id" not in obj:
                raise NetworkFormatError("record missing 'id'", lineno)
            docs = obj.get("docs", [])
            if not all(isinstance(doc, list) for doc in docs):
                raise NetworkFormatError("'docs' must be lists of tokens", lineno)
            records.append(
                RawUserRecord(
                    user_id=str(obj["id"]),
                    profile=dict(obj.get("profile", {})),
                    docs=[[str(t) for t in doc] for doc in docs],
                    label=obj.get("label"),
                )
            )
    return records


# ---------------------------------------------------------------------------
# Mutual-information content features
# ---------------------------------------------------------------------------


@dataclass
class MITable:
    """Token score table: one row per vocabulary token, one column per category.

    Scores are the add-one-smoothed pointwise term
    ``P(w,c) * log(P(w,c) / (P(w) P(c)))`` over user-level token presence,
    clamped at zero so entries are always finite and non-negative.
    """

    vocabulary: dict[str, int]
    scores: np.ndarray
    doc_frequency: np.ndarray
    categories: dict[str, int]


def build_mi_table(
    records: Sequence[RawUserRecord], min_occurrence: int = 5
) -> MITable:
    """Fit the table on labeled training users only.

    Tokens with fewer than ``min_occurrence`` total occurrences are dropped.
    """
    labeled = [r for r in records if r.label is not None and r.docs]
    if not labeled:
        raise EmptyCorpus("no labeled user with documents")
    category_names = sorted({r.label for r in labeled})
    categories = {name: k for k, name in enumerate(category_names)}
    c = len(categories)

    occurrences: dict[str, int] = {}
    user_presence: dict[str, int] = {}
    presence_by_cat: dict[str, np.ndarray] = {}
    cat_counts = np.zeros(c, dtype=np.int64)
    for record in labeled:
        cat = categories[record.label]
        cat_counts[cat] += 1
        seen = set()
        for doc in record.docs:
            for token in doc:
                occurrences[token] = occurrences.get(token, 0) + 1
                seen.add(token)
        for token in seen:
            user_presence[token] = user_presence.get(token, 0) + 1
            row = presence_by_cat.get(token)
            if row is None:
                row = presence_by_cat[token] = np.zeros(c, dtype=np.int64)
            row[cat] += 1

    kept = sorted(t for t, n in occurrences.items() if n >= min_occurrence)
    if not kept:
        raise EmptyCorpus(
            f"no token reaches {min_occurrence} occurrences in the training corpus"
        )
    vocabulary = {token: k for k, token in enumerate(kept)}
    n_users = len(labeled)
    denom = n_users + 2.0 * c
    p_cat = (cat_counts + 2.0) / denom

    scores = np.zeros((len(kept), c))
    doc_frequency = np.zeros(len(kept), dtype=np.int64)
    for token, row_index in vocabulary.items():
        n_wc = presence_by_cat[token]
        n_w = user_presence[token]
        doc_frequency[row_index] = n_w
        p_joint = (n_wc + 1.0) / denom
        p_word = (n_w + c) / denom
        with np.errstate(divide="ignore"):
            ratio = np.log(p_joint / (p_word * p_cat))
        scores[row_index] = np.maximum(p_joint * ratio, 0.0)
    return MITable(
        vocabulary=vocabulary,
        scores=scores,
        doc_frequency=doc_frequency,
        categories=categories,
    )


def content_features(
    record: RawUserRecord,
    table: MITable,
    occurrence_weighted: bool = False,
) -> np.ndarray:
    """Per-category (max, mean) aggregation of the user's token scores.

    Features are laid out [max_0, mean_0, max_1, mean_1, ...].  The mean runs
    over the user's distinct in-vocabulary tokens by default, or weighted by
    occurrence counts with ``occurrence_weighted``; no known token gives the
    zero vector.
    """
    counts: dict[int, int] = {}
    for doc in record.docs:
        for token in doc:
            row = table.vocabulary.get(token)
            if row is not None:
                counts[row] = counts.get(row, 0) + 1
    c = table.scores.shape[1]
    out = np.zeros(2 * c)
    if not counts:
        return out
    rows = sorted(counts)
    block = table.scores[rows]
    maxima = block.max(axis=0)
    if occurrence_weighted:
        weights = np.asarray([counts[r] for r in rows], dtype=np.float64)
        means = weights @ block / weights.sum()
    else:
        means = block.mean(axis=0)
    out[0::2] = maxima
    out[1::2] = means
    return out


# ---------------------------------------------------------------------------
# Profile features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileField:
    name: str
    kind: str  # "categorical" | "numeric"
    vocabulary: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return len(self.vocabulary) + 1 if self.kind == "categorical" else 1


@dataclass(frozen=True)
class FeatureSchema:
    fields: tuple[ProfileField, ...]

    @property
    def width(self) -> int:
        return sum(f.width for f in self.fields)


def infer_field_kinds(records: Sequence[RawUserRecord]) -> dict[str, str]:
    """Numeric when every present value is a number, categorical otherwise."""
    kinds: dict[str, str] = {}
    names = sorted({name for r in records for name in r.profile})
    for name in names:
        values = [r.profile[name] for r in records if r.profile.get(name) is not None]
        numeric = all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        )
        kinds[name] = "numeric" if numeric and values else "categorical"
    return kinds


def fit_schema(
    records: Sequence[RawUserRecord],
    field_kinds: Mapping[str, str] | None = None,
) -> FeatureSchema:
    """Declare field order and fit categorical vocabularies on training users."""
    kinds = dict(field_kinds) if field_kinds is not None else infer_field_kinds(records)
    fields = []
    for name in sorted(kinds):
        kind = kinds[name]
        if kind not in ("categorical", "numeric"):
            raise SchemaMismatch(f"field {name!r} has unknown kind {kind!r}")
        vocabulary: tuple[str, ...] = ()
        if kind == "categorical":
            values = {
                str(r.profile[name])
                for r in records
                if r.profile.get(name) is not None
            }
            vocabulary = tuple(sorted(values))
        fields.append(ProfileField(name, kind, vocabulary))
    return FeatureSchema(tuple(fields))


def encode_profile(record: RawUserRecord, schema: FeatureSchema) -> np.ndarray:
    """Fixed-width vector in schema field order.

    Categorical fields one-hot over the training vocabulary with a trailing
    slot for unseen values; numeric fields map through log1p (missing -> 0).
    """
    parts = []
    for field in schema.fields:
        value = record.profile.get(field.name)
        if field.kind == "categorical":
            slot = np.zeros(field.width)
            if value is None:
                slot[-1] = 1.0
            else:
                text = str(value)
                try:
                    slot[field.vocabulary.index(text)] = 1.0
                except ValueError:
                    slot[-1] = 1.0
            parts.append(slot)
        else:
            if value is None:
                number = 0.0
            else:
                try:
                    number = float(value)
                except (TypeError, ValueError):
                    raise SchemaMismatch(
                        f"field {field.name!r} expects a number, got {value!r}"
                    ) from None
            if number <= -1.0:
                raise SchemaMismatch(
                    f"field {field.name!r} value {number} is outside log1p domain"
                )
            parts.append(np.asarray([math.log1p(number)]))
    return np.concatenate(parts) if parts else np.zeros(0)


# ---------------------------------------------------------------------------
# End-to-end featurization
# ---------------------------------------------------------------------------


@dataclass
class FeaturizedDataset:
    node_ids: tuple[str, ...]
    labels: tuple[str | None, ...]
    features: np.ndarray
    schema: FeatureSchema
    mi_table: MITable


def featurize(
    records: Sequence[RawUserRecord],
    fractions: Sequence[float] = (0.5, 0.1, 0.4),
    seed: int = 0,
    min_docs: int = 10,
    min_occurrence: int = 5,
    field_kinds: Mapping[str, str] | None = None,
    occurrence_weighted: bool = False,
) -> FeaturizedDataset:
    """Drop thin users, fit representations on the train partition, encode all.

    The train partition is the first part of ``partition_ids`` over labeled
    record positions; training a model later on the emitted node file with
    the same fractions and seed selects the identical users.
    """
    kept = [r for r in records if len(r.docs) >= min_docs]
    if not kept:
        raise EmptyCorpus(f"no user has at least {min_docs} documents")
    labeled_positions = [i for i, r in enumerate(kept) if r.label is not None]
    if not labeled_positions:
        raise EmptyCorpus("no labeled users after document filtering")
    train_positions, _, _ = partition_ids(labeled_positions, fractions, seed)
    train_records = [kept[i] for i in sorted(train_positions)]

    schema = fit_schema(train_records, field_kinds)
    table = build_mi_table(train_records, min_occurrence)
    rows = [
        np.concatenate(
            [
                encode_profile(r, schema),
                content_features(r, table, occurrence_weighted),
            ]
        )
        for r in kept
    ]
    return FeaturizedDataset(
        node_ids=tuple(r.user_id for r in kept),
        labels=tuple(r.label for r in kept),
        features=np.asarray(rows),
        schema=schema,
        mi_table=table,
    )


def write_node_file(dataset: FeaturizedDataset, path) -> None:
    """Emit the dataset in the network module's node-file format."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        width = dataset.features.shape[1]
        fh.write("\t".join(["id", "label"] + [f"f{j}" for j in range(width)]) + "\n")
        for node_id, label, row in zip(
            dataset.node_ids, dataset.labels, dataset.features
        ):
            cells = [node_id, label or ""] + [repr(v) for v in row.tolist()]
            fh.write("\t".join(cells) + "\n")
