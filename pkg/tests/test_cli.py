"""CLI subcommands, file formats, exit codes, determinism."""

import json

import numpy as np
import pytest

from netlabel.cli import main
from netlabel.network import load_network, partition_ids


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def generated(tmp_path):
    nodes = tmp_path / "nodes.tsv"
    edges = tmp_path / "edges.tsv"
    code = run(
        "generate", "--n", "120", "--c", "3", "--p-same", "0.85",
        "--mean-degree", "6", "--feature-signal", "1.5",
        "--labeled-frac", "0.7", "--seed", "1",
        "--out-nodes", str(nodes), "--out-edges", str(edges),
    )
    assert code == 0
    return nodes, edges


class TestGenerate:
    def test_deterministic(self, tmp_path, generated):
        nodes, edges = generated
        n2, e2 = tmp_path / "n2.tsv", tmp_path / "e2.tsv"
        assert run(
            "generate", "--n", "120", "--c", "3", "--p-same", "0.85",
            "--mean-degree", "6", "--feature-signal", "1.5",
            "--labeled-frac", "0.7", "--seed", "1",
            "--out-nodes", str(n2), "--out-edges", str(e2),
        ) == 0
        assert nodes.read_bytes() == n2.read_bytes()
        assert edges.read_bytes() == e2.read_bytes()


class TestTrainPredictEval:
    def test_full_pipeline(self, tmp_path, generated, capsys):
        nodes, edges = generated
        model = tmp_path / "model.bin"
        history = tmp_path / "history.csv"
        assert run(
            "train", "--nodes", str(nodes), "--edges", str(edges),
            "--learner", "sr", "--seed", "1", "--out", str(model),
            "--history", str(history),
        ) == 0
        assert model.exists()
        header = history.read_text().splitlines()[0]
        assert header == "iteration,train_acc,val_acc,log_potential_proxy"

        pred = tmp_path / "pred.tsv"
        assert run(
            "predict", "--nodes", str(nodes), "--edges", str(edges),
            "--model", str(model), "--out", str(pred),
            "--split", "0.5,0.1,0.4", "--seed", "1", "--steps", "5000",
        ) == 0
        lines = pred.read_text().splitlines()
        assert len(lines) == 120
        assert all(len(line.split("\t")) == 2 for line in lines)

        assert run(
            "eval", "--nodes", str(nodes), "--pred", str(pred),
            "--split", "0.5,0.1,0.4", "--seed", "1", "--json",
        ) == 0
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["micro_accuracy"] <= 1.0

    def test_eval_perfect_predictions(self, tmp_path, generated, capsys):
        nodes, edges = generated
        net = load_network(nodes, edges)
        pred = tmp_path / "perfect.tsv"
        with pred.open("w") as fh:
            for i, node_id in enumerate(net.node_ids):
                label = net.category_names[net.labels[i]] if i in net.labels else "0"
                fh.write(f"{node_id}\t{label}\n")
        assert run("eval", "--nodes", str(nodes), "--pred", str(pred)) == 0
        out = capsys.readouterr().out
        assert "micro accuracy  1.0000" in out

    def test_train_ignores_test_labels(self, tmp_path, generated):
        nodes, edges = generated
        model_a = tmp_path / "a.bin"
        args = ["--nodes", str(nodes), "--edges", str(edges), "--learner", "sr",
                "--seed", "2", "--split", "0.5,0.1,0.4"]
        assert run("train", *args, "--out", str(model_a)) == 0

        net = load_network(nodes, edges)
        labeled_positions = sorted(net.labels)
        _, _, test_nodes = partition_ids(labeled_positions, (0.5, 0.1, 0.4), 2)
        names = net.category_names
        rows = nodes.read_text().splitlines()
        header, body = rows[0], rows[1:]
        for position in test_nodes:
            cells = body[position].split("\t")
            cells[1] = names[(names.index(cells[1]) + 1) % len(names)]
            body[position] = "\t".join(cells)
        corrupted = tmp_path / "corrupted.tsv"
        corrupted.write_text("\n".join([header] + body) + "\n")

        model_b = tmp_path / "b.bin"
        args_b = ["--nodes", str(corrupted), "--edges", str(edges),
                  "--learner", "sr", "--seed", "2", "--split", "0.5,0.1,0.4"]
        assert run("train", *args_b, "--out", str(model_b)) == 0
        assert model_a.read_bytes() == model_b.read_bytes()


class TestFeaturize:
    def test_featurize_produces_loadable_nodes(self, tmp_path):
        raw = tmp_path / "users.jsonl"
        rows = []
        for k in range(20):
            label = "north" if k % 2 else "south"
            rows.append(
                {
                    "id": f"u{k}",
                    "profile": {"followers": k * 3, "lang": "en" if k % 3 else "fr"},
                    "docs": [["hello", label] for _ in range(3)],
                    "label": label if k < 16 else None,
                }
            )
        raw.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        out = tmp_path / "nodes.tsv"
        assert run(
            "featurize", "--raw", str(raw), "--out", str(out),
            "--seed", "3", "--min-docs", "1", "--min-occurrence", "1",
        ) == 0
        edges = tmp_path / "edges.tsv"
        edges.write_text("u0\tu1\tU\n")
        net = load_network(out, edges)
        assert net.num_nodes == 20
        assert net.num_categories == 2


class TestBench:
    def test_bench_prints_table(self, generated, capsys):
        nodes, edges = generated
        assert run(
            "bench", "--nodes", str(nodes), "--edges", str(edges),
            "--learners", "sr", "--seed", "1",
        ) == 0
        out = capsys.readouterr().out
        assert "learner" in out and "sr" in out


class TestDefaults:
    def test_train_defaults_match_reference_settings(self):
        from netlabel.cli import _build_parser
        from netlabel.learning import LearnerConfig

        args = _build_parser().parse_args(
            ["train", "--nodes", "n", "--edges", "e", "--out", "m"]
        )
        assert args.batch_size == 5000
        assert args.delta == 1000
        assert args.epsilon == 20
        assert args.eta is None
        assert LearnerConfig(learner="mh+").resolved_learning_rate() == 1.0
        assert LearnerConfig(learner="mh").resolved_learning_rate() == 0.1


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        assert run("generate", "--does-not-exist", "1") == 1

    def test_unknown_learner_is_usage_error(self, generated, tmp_path):
        nodes, edges = generated
        assert run(
            "train", "--nodes", str(nodes), "--edges", str(edges),
            "--learner", "bogus", "--out", str(tmp_path / "m.bin"),
        ) == 1

    def test_missing_file_is_data_error(self, tmp_path):
        assert run(
            "train", "--nodes", str(tmp_path / "nope.tsv"),
            "--edges", str(tmp_path / "nope2.tsv"),
            "--out", str(tmp_path / "m.bin"),
        ) == 2

    def test_non_finite_parameters_exit_numeric(self, generated, tmp_path, monkeypatch):
        import netlabel.cli as cli
        from netlabel.learning import StopReason, TrainingRun, LearnerConfig
        from netlabel.params import ParameterVector

        bad = ParameterVector.zeros(3, 3)
        bad.attr[0, 0] = float("inf")

        def fake_train(net, split, config, embeddings=None, **kwargs):
            return TrainingRun(
                config=config, history=[], best_params=bad,
                best_validation_accuracy=0.0, best_iteration=0,
                stop_reason=StopReason.MAX_ITERATIONS, seconds=0.0,
            )

        monkeypatch.setattr(cli, "train", fake_train)
        nodes, edges = generated
        assert run(
            "train", "--nodes", str(nodes), "--edges", str(edges),
            "--learner", "sr", "--out", str(tmp_path / "m.bin"),
        ) == 3

    def test_bad_split_is_usage_error(self, generated, tmp_path):
        nodes, edges = generated
        assert run(
            "train", "--nodes", str(nodes), "--edges", str(edges),
            "--split", "0.9,0.9,0.9", "--out", str(tmp_path / "m.bin"),
        ) == 1
