import json
from pathlib import Path

import numpy as np
import pytest

from gzslgate.cli import main, parse_grid
from gzslgate.data import load_bundle
from gzslgate.errors import ConfigError

FAST_TRAIN = ["--epochs", "25", "--batch-size", "32", "--dim-z", "8",
              "--hidden", "32", "--lr", "3e-3"]


def synth_args(out, seed=0):
    return ["synth", "--out", str(out), "--classes-seen", "6",
            "--classes-unseen", "3", "--dim-v", "10", "--dim-a", "8",
            "--samples-per-class", "30", "--separation", "8.0",
            "--seed", str(seed)]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    bundle_dir = root / "bundle"
    assert main(synth_args(bundle_dir)) == 0
    out = root / "tuned"
    assert main(["tune", "--bundle", str(bundle_dir), "--out", str(out),
                 "--alpha", "0.05", "--beta", "0,0.1", "--seed", "0",
                 "--clf-epochs", "25", *FAST_TRAIN]) == 0
    return root, bundle_dir, out


class TestParseGrid:
    def test_scalar(self):
        assert parse_grid("0.5") == [0.5]

    def test_comma_list(self):
        assert parse_grid("0,0.1,1") == [0.0, 0.1, 1.0]

    def test_range(self):
        assert parse_grid("0.01:0.10:0.01") == pytest.approx(
            [0.01 * k for k in range(1, 11)])

    def test_bad_grid(self):
        with pytest.raises(ConfigError):
            parse_grid("1:2")


class TestSynth:
    def test_emits_loadable_bundle(self, workspace):
        _, bundle_dir, _ = workspace
        b = load_bundle(bundle_dir)
        assert b.n_classes == 9

    def test_same_flags_identical_bundle_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(synth_args(a, seed=7)) == 0
        assert main(synth_args(b, seed=7)) == 0
        for name in ("features.gzt", "labels.u32", "attributes.gzt",
                     "splits.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_invalid_spec_exits_2(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "x"),
                     "--classes-seen", "0"])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_out_exits_2(self):
        assert main(["synth", "--classes-seen", "3"]) == 2


class TestTrain:
    def test_writes_model_and_loss_trace(self, workspace, tmp_path):
        _, bundle_dir, _ = workspace
        out = tmp_path / "trained"
        assert main(["train", "--bundle", str(bundle_dir), "--out", str(out),
                     "--alpha", "0.05", "--seed", "0", *FAST_TRAIN]) == 0
        assert (out / "model.gae").is_file()
        lines = (out / "loss.tsv").read_text().strip().splitlines()
        assert lines[0] == "epoch\tloss"
        assert len(lines) == 26
        losses = [float(l.split("\t")[1]) for l in lines[1:]]
        assert losses[-1] < losses[0]


class TestTune:
    def test_outputs_present(self, workspace):
        _, _, out = workspace
        assert (out / "tune.tsv").is_file()
        assert (out / "model.gae").is_file()
        manifest = json.loads((out / "manifest.json").read_text())
        hp = manifest["hyperparameters"]
        assert set(hp) >= {"alpha", "beta", "tau"}
        assert hp["alpha"] == 0.05

    def test_trace_file_shape(self, workspace):
        _, _, out = workspace
        lines = (out / "tune.tsv").read_text().strip().splitlines()
        assert lines[0] == "alpha\tbeta\ttau\tS_val\tU_val\tH_val"
        assert len(lines) == 1 + 1 * 2 * 99

    def test_checkpoint_has_classifier(self, workspace):
        from gzslgate.checkpoint import load_model
        _, _, out = workspace
        _, clf = load_model(out / "model.gae")
        assert clf is not None and clf.n_classes == 6


class TestEval:
    def test_eval_with_manifest_hyperparameters(self, workspace, tmp_path):
        _, bundle_dir, out = workspace
        dest = tmp_path / "eval"
        assert main(["eval", "--bundle", str(bundle_dir),
                     "--model", str(out / "model.gae"),
                     "--out", str(dest)]) == 0
        report = json.loads((dest / "report.json").read_text())
        assert 0.0 <= report["harmonic"] <= 1.0
        assert (dest / "scores.tsv").is_file()

    def test_degenerate_tau_gives_zero_seen_accuracy(self, workspace, tmp_path):
        _, bundle_dir, out = workspace
        dest = tmp_path / "eval_tiny_tau"
        assert main(["eval", "--bundle", str(bundle_dir),
                     "--model", str(out / "model.gae"),
                     "--out", str(dest), "--tau", "1e-9"]) == 0
        report = json.loads((dest / "report.json").read_text())
        assert report["seen_acc"] == 0.0
        assert report["harmonic"] == 0.0

    def test_score_variants_give_three_reports(self, workspace, tmp_path):
        _, bundle_dir, out = workspace
        reports = []
        for score in ("latent", "cross", "all"):
            dest = tmp_path / f"eval_{score}"
            assert main(["eval", "--bundle", str(bundle_dir),
                         "--model", str(out / "model.gae"),
                         "--out", str(dest), "--score", score]) == 0
            reports.append((dest / "report.json").read_text())
        assert len(set(reports)) == 3

    def test_no_gating_flag(self, workspace, tmp_path):
        _, bundle_dir, out = workspace
        dest = tmp_path / "eval_ng"
        assert main(["eval", "--bundle", str(bundle_dir),
                     "--model", str(out / "model.gae"),
                     "--out", str(dest), "--no-gating"]) == 0
        scores = (dest / "scores.tsv").read_text().strip().splitlines()
        assert all(line.endswith("nogate") for line in scores[1:])

    def test_manifest_replay_reproduces_report(self, workspace, tmp_path):
        _, bundle_dir, out = workspace
        first = tmp_path / "first"
        assert main(["eval", "--bundle", str(bundle_dir),
                     "--model", str(out / "model.gae"),
                     "--out", str(first), "--tau", "0.9"]) == 0
        replay = tmp_path / "replay"
        assert main(["eval", "--config", str(first / "manifest.json"),
                     "--out", str(replay)]) == 0
        assert ((first / "report.json").read_bytes()
                == (replay / "report.json").read_bytes())
        assert ((first / "scores.tsv").read_bytes()
                == (replay / "scores.tsv").read_bytes())

    def test_missing_bundle_exits_3(self, workspace, tmp_path):
        _, _, out = workspace
        assert main(["eval", "--bundle", str(tmp_path / "nope"),
                     "--model", str(out / "model.gae"),
                     "--out", str(tmp_path / "o")]) == 3


class TestGateStats:
    def test_score_dump_columns(self, workspace, tmp_path):
        _, bundle_dir, out = workspace
        dest = tmp_path / "stats"
        assert main(["gate-stats", "--bundle", str(bundle_dir),
                     "--model", str(out / "model.gae"),
                     "--out", str(dest)]) == 0
        lines = (dest / "scores.tsv").read_text().strip().splitlines()
        assert lines[0].split("\t") == [
            "query_index", "true_class", "log_d_latent_s", "log_d_latent_u",
            "d_cross_s", "d_cross_u", "r_latent", "r_cross", "r_all", "route"]
        b = load_bundle(bundle_dir)
        n_test = b.splits.test_seen_idx.size + b.splits.test_unseen_idx.size
        assert len(lines) == 1 + n_test

    def test_metrics_recomputable_from_dump(self, workspace, tmp_path):
        # the report's AUC must equal a recomputation from the score dump
        from gzslgate.metrics import auroc
        _, bundle_dir, out = workspace
        dest = tmp_path / "recompute"
        assert main(["eval", "--bundle", str(bundle_dir),
                     "--model", str(out / "model.gae"),
                     "--out", str(dest)]) == 0
        report = json.loads((dest / "report.json").read_text())
        b = load_bundle(bundle_dir)
        unseen_classes = set(b.splits.unseen_classes.tolist())
        r_unseen, r_seen = [], []
        for line in (dest / "scores.tsv").read_text().strip().splitlines()[1:]:
            parts = line.split("\t")
            (r_unseen if int(parts[1]) in unseen_classes else r_seen).append(
                float(parts[8]))
        assert report["auc"] == auroc(r_unseen, r_seen)
