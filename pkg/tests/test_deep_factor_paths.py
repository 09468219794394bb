"""Embedding-block behavior across factors, oracle, propagation, samplers."""

import numpy as np
import pytest

from netlabel.deepnet import DeepNet
from netlabel.factors import (
    FactorScorer,
    global_statistics,
    local_statistics,
    log_deep_factor,
    log_potential,
)
from netlabel.learning import LearnerConfig, train_mh_plus
from netlabel.lbp import sum_product
from netlabel.network import DatasetSplit, split_labels
from netlabel.oracle import enumerate_summary, exact_gradient, log_marginal_objective
from netlabel.params import ParameterVector

from util import central_difference, make_network, random_instance, random_params


def with_embeddings(rng, n=5, c=3, d=2, h=4):
    net, _ = random_instance(rng, n=n, c=c, d=d, label_prob=0.5)
    params = random_params(rng, c, d, h=h)
    embeddings = np.abs(rng.normal(size=(n, h)))
    return net, params, embeddings


class TestLogDeepFactor:
    def test_zero_network_gives_zero(self):
        net = make_network([[1.0, -2.0]], [], {}, 2)
        deep = DeepNet.init(2, 2, hidden1=3, hidden2=2, seed=0)
        deep.W1[...] = 0
        deep.W2[...] = 0
        params = ParameterVector.zeros(2, 2, 2)
        params.deep[...] = 1.0
        assert log_deep_factor(net, params, deep, 0, 1) == 0.0

    def test_identity_network_passes_feature_through(self):
        net = make_network([[2.0, 5.0]], [], {}, 2)
        deep = DeepNet.init(2, 2, hidden1=2, hidden2=2, seed=0)
        deep.W1[...] = np.eye(2)
        deep.b1[...] = 0
        deep.W2[...] = np.eye(2)
        deep.b2[...] = 0
        params = ParameterVector.zeros(2, 2, 2)
        params.deep[1] = [0.0, 1.0]  # picks embedding coordinate 1
        assert log_deep_factor(net, params, deep, 0, 1) == pytest.approx(5.0)

    def test_negative_preactivations_clamp_to_zero(self):
        net = make_network([[1.0, 1.0]], [], {}, 2)
        deep = DeepNet.init(2, 2, hidden1=2, hidden2=2, seed=0)
        deep.W1[...] = -np.eye(2)
        deep.b1[...] = 0
        params = ParameterVector.zeros(2, 2, 2)
        params.deep[...] = 3.0
        assert log_deep_factor(net, params, deep, 0, 0) == 0.0


class TestStatisticsWithEmbeddings:
    def test_potential_equals_dot_of_statistics(self):
        rng = np.random.default_rng(200)
        for _ in range(10):
            net, params, emb = with_embeddings(rng)
            config = rng.integers(0, 3, net.num_nodes)
            lp = log_potential(net, params, config, emb)
            stats = global_statistics(net, params, config, emb)
            assert abs(lp - params.dot(stats)) < 1e-10

    def test_local_sum_equals_global(self):
        rng = np.random.default_rng(201)
        net, params, emb = with_embeddings(rng)
        config = rng.integers(0, 3, net.num_nodes)
        total = ParameterVector.zeros(*params.shape)
        for i in range(net.num_nodes):
            total.add_scaled(local_statistics(net, params, config, i, emb), 1.0)
        expected = global_statistics(net, params, config, emb)
        for got, want in zip(total.blocks(), expected.blocks()):
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_scorer_delta_with_embeddings(self):
        rng = np.random.default_rng(202)
        net, params, emb = with_embeddings(rng)
        scorer = FactorScorer(net, params, emb)
        config = rng.integers(0, 3, net.num_nodes).tolist()
        for _ in range(60):
            node = int(rng.integers(0, net.num_nodes))
            cat = int(rng.integers(0, 3))
            moved = list(config)
            moved[node] = cat
            want = log_potential(net, params, moved, emb) - log_potential(
                net, params, config, emb
            )
            assert scorer.delta(config, node, cat) == pytest.approx(want, abs=1e-9)


class TestOracleWithEmbeddings:
    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(203)
        net, params, emb = with_embeddings(rng, n=4, c=2, h=3)
        if not net.labels:
            net = net.with_labels({0: 1})
        c, d, h = params.shape

        def objective(flat):
            p = ParameterVector.from_flat(flat, c, d, h)
            return log_marginal_objective(net, p, emb)

        grad = exact_gradient(net, params, emb).to_flat()
        fd = central_difference(objective, params.to_flat(), h=1e-5)
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.max(np.abs(grad - fd) / scale) < 1e-6

    def test_sum_product_matches_oracle_on_tree(self):
        rng = np.random.default_rng(204)
        net = make_network(
            rng.normal(size=(5, 2)),
            [(0, 1, "U"), (1, 2, "D"), (1, 3, "U"), (3, 4, "U")],
            {0: 1},
            2,
        )
        params = random_params(rng, 2, 2, h=3)
        emb = rng.normal(size=(5, 3))
        result = sum_product(
            net, params, emb, clamp_labels=True, max_sweeps=40,
            tol=1e-13, damping=0.0,
        )
        exact = enumerate_summary(net, params, emb, clamp_labels=True)
        np.testing.assert_allclose(
            result.node_marginals, exact.node_marginals, atol=1e-9
        )


class TestLearnersWithEmbeddings:
    def test_two_chain_learner_runs_with_embeddings(self):
        rng = np.random.default_rng(205)
        cats = rng.integers(0, 2, 40)
        feats = np.eye(2)[cats] + rng.normal(size=(40, 2)) * 0.3
        labels = {int(i): int(cats[i]) for i in range(40)}
        net = make_network(feats, [(i, i + 1, "U") for i in range(39)], labels, 2)
        split = split_labels(net, (0.5, 0.25, 0.25), seed=0)
        emb = np.abs(rng.normal(size=(40, 3)))
        run = train_mh_plus(
            net, split,
            LearnerConfig(learner="mh+", learning_rate=1e-3, batch_size=200,
                          max_iterations=10, eval_every=5, patience=5, seed=0),
            embeddings=emb,
        )
        assert run.best_params.embed_dim == 3
        assert run.best_params.all_finite()
        assert run.best_params.max_undirected_asymmetry() == 0.0
