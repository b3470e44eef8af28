"""Metrics, experiment orchestration, and report/export behaviour."""

import math

import numpy as np
import pytest

from cshc.config import ExperimentConfig
from cshc.data import CorrectnessMatrix
from cshc.harness import (average_ranks, export_viz, mgi, oracle_accuracy,
                          paired_sign_ttest, pca_projection, run_experiment,
                          wins_losses, write_results_csv)


class TestMgi:
    def test_identical_vectors(self):
        assert mgi([90.0, 80.0], [90.0, 80.0]) == 0.0

    def test_double_everywhere(self):
        assert mgi([100.0, 100.0], [50.0, 50.0]) == pytest.approx(100.0)

    def test_zero_entry_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            mgi([100.0, 0.0], [50.0, 50.0])

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.uniform(40, 100, size=12)
            b = rng.uniform(40, 100, size=12)
            forward = 1.0 + mgi(a, b) / 100.0
            backward = 1.0 + mgi(b, a) / 100.0
            assert forward * backward == pytest.approx(1.0, abs=1e-9)


class TestWinsLosses:
    def test_identical(self):
        assert wins_losses([1.0, 2.0], [1.0, 2.0]) == (0, 0, 2)

    def test_reference_dominates(self):
        assert wins_losses([9.0, 9.0, 9.0], [1.0, 2.0, 3.0]) == (0, 3, 0)

    def test_mixed(self):
        assert wins_losses([5.0, 5.0, 5.0], [6.0, 4.0, 5.0]) == (1, 1, 1)


class TestAverageRanks:
    def test_strict_dominance(self):
        table = np.array([[0.9, 0.8, 0.7],
                          [0.5, 0.6, 0.4]])
        assert average_ranks(table).tolist() == [2.0, 1.0]

    def test_all_tied(self):
        table = np.full((4, 6), 0.5)
        assert average_ranks(table).tolist() == [2.5] * 4

    def test_rank_sum(self):
        rng = np.random.default_rng(1)
        table = rng.uniform(size=(5, 9))
        assert average_ranks(table).sum() == pytest.approx(5 * 6 / 2)


class TestPairedSignTtest:
    def test_all_zero_degenerate(self):
        with pytest.warns(UserWarning):
            assert paired_sign_ttest([0, 0, 0, 0]) == 1.0

    def test_26_wins_13_losses_1_tie(self):
        # closed form: mean 0.325, sample sd sqrt(34.775/39), t = 2.1768,
        # two-sided p on 39 dof = 0.03562 (the standard paired test)
        x = [1] * 26 + [-1] * 13 + [0]
        mean = 13 / 40
        sd = math.sqrt((39 - 40 * mean ** 2) / 39)
        t = mean / (sd / math.sqrt(40))
        assert t == pytest.approx(2.1768, abs=5e-4)
        assert paired_sign_ttest(x) == pytest.approx(0.03562, abs=5e-5)

    def test_sweep_is_significant(self):
        assert paired_sign_ttest([1] * 40) < 1e-6

    def test_single_decision_degenerate(self):
        with pytest.warns(UserWarning):
            assert paired_sign_ttest([1, 0, 0]) == 1.0


class TestOracleAccuracy:
    def test_full_coverage(self):
        cm = CorrectnessMatrix(np.array([[0, 1], [1, 1]]), np.array([0, 1]),
                               np.arange(2))
        assert oracle_accuracy(cm) == 100.0

    def test_uncovered_sample_counts_against(self):
        cm = CorrectnessMatrix(np.array([[1, 1], [1, 1]]), np.array([0, 1]),
                               np.arange(2))
        assert oracle_accuracy(cm) == 50.0

    def test_complementary_pair(self):
        pred = np.array([[0, 1], [1, 0], [0, 1], [1, 0]])
        truth = np.array([0, 0, 1, 1])
        cm = CorrectnessMatrix(pred, truth, np.arange(4))
        assert oracle_accuracy(cm) == 100.0


class TestPcaProjection:
    def test_rotation_preserves_distances(self):
        rng = np.random.default_rng(2)
        train = rng.normal(size=(50, 2))
        test = rng.normal(size=(10, 2))
        coords = pca_projection(train, test)
        d_orig = np.linalg.norm(test[:, None] - test[None, :], axis=2)
        d_proj = np.linalg.norm(coords[:, None] - coords[None, :], axis=2)
        assert np.allclose(d_orig, d_proj, atol=1e-9)

    def test_constant_feature_ignored(self):
        rng = np.random.default_rng(3)
        train = np.column_stack([rng.normal(size=40), np.full(40, 7.0),
                                 rng.normal(size=40)])
        test = np.column_stack([rng.normal(size=5), np.full(5, 7.0),
                                rng.normal(size=5)])
        coords = pca_projection(train, test)
        # wiggling the constant feature must not move the projection
        test2 = test.copy()
        coords2 = pca_projection(train, test2)
        assert np.allclose(coords, coords2)

    def test_rank_deficient_warns(self):
        train = np.tile([[1.0, 2.0]], (10, 1))
        with pytest.warns(UserWarning, match="rank"):
            coords = pca_projection(train, train)
        assert np.allclose(coords, 0.0)


def tiny_experiment_config(tmp_path, rows=240, seed=11):
    """Small learnable dataset exercising the native classifier pool."""
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal((-2, 0), 0.7, size=(rows // 2, 2)),
                   rng.normal((2, 0), 0.7, size=(rows // 2, 2))])
    y = ["a"] * (rows // 2) + ["b"] * (rows // 2)
    path = tmp_path / "tiny.csv"
    with open(path, "w") as fh:
        fh.write("x0,x1,label\n")
        for i in range(rows):
            fh.write("%.8f,%.8f,%s\n" % (X[i, 0], X[i, 1], y[i]))
    return ExperimentConfig(datasets=[("tiny", str(path), "label")],
                            seed=seed, n_trees=10)


class TestRunExperiment:
    def test_oracle_dominates_every_method(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        result = run_experiment(cfg)
        assert not result.errors
        for method in cfg.methods:
            cell = result.cells[("tiny", method)]
            assert 0.0 <= cell.accuracy <= result.oracle["tiny"] + 1e-9

    def test_cv3_protocol_runs(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        cfg.protocol = "cv3"
        cfg.methods = ["cshc", "rr", "mv"]
        cfg.reference = "rr"
        result = run_experiment(cfg)
        assert not result.errors

    def test_unanimous_pool_gives_mv_100(self, tmp_path):
        # every classifier predicting the truth makes majority vote exact
        rng = np.random.default_rng(4)
        X = rng.normal(size=(120, 2))
        y = rng.integers(0, 2, size=120)
        path = tmp_path / "unanimous.csv"
        with open(path, "w") as fh:
            fh.write("x0,x1,label\n")
            for i in range(120):
                fh.write("%f,%f,c%d\n" % (X[i, 0], X[i, 1], y[i]))
        ext = tmp_path / "perfect.csv"
        enc = {}
        for t in y:
            enc.setdefault(int(t), len(enc))
        with open(ext, "w") as fh:
            fh.write("sample_index,predicted_class\n")
            for i in range(120):
                fh.write("%d,%d\n" % (i, enc[int(y[i])]))
        cfg = ExperimentConfig(datasets=[("u", str(path), "label")],
                               pool=[],
                               external=[("p1", str(ext)), ("p2", str(ext))],
                               methods=["mv"], reference="mv", seed=1,
                               n_trees=5)
        result = run_experiment(cfg)
        assert result.cells[("u", "mv")].accuracy == 100.0

    def test_failed_dataset_isolated(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        cfg.datasets = [("missing", str(tmp_path / "nope.csv"), "label")] \
            + cfg.datasets
        result = run_experiment(cfg)
        assert "missing" in result.errors
        assert ("tiny", "lpr") in result.cells

    def test_optional_methods_run(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        cfg.methods = ["apo", "knora_e", "mv"]
        cfg.reference = "mv"
        result = run_experiment(cfg)
        assert not result.errors

    def test_predicted_class_is_chosen_classifiers_label(self, region_result):
        _, result, _, _ = region_result
        prep = result.preps["regions"]
        for method in ("cshc", "rr", "lp", "lpr"):
            cell = result.cells[("regions", method)]
            for q, out in enumerate(cell.outcomes):
                assert out.predicted_class == \
                    prep.test_labels[q, out.chosen_classifier]

    def test_recourse_rate_matches_outcomes(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        cfg.methods = ["lpr"]
        cfg.reference = "lpr"
        result = run_experiment(cfg)
        cell = result.cells[("tiny", "lpr")]
        count = sum(o.recourse_invoked for o in cell.outcomes)
        assert cell.recourse_rate == count / len(cell.outcomes)

    def test_results_csv_written(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        cfg.methods = ["cshc", "rr", "mv"]
        cfg.reference = "rr"
        result = run_experiment(cfg)
        out = tmp_path / "results.csv"
        write_results_csv(result, str(out))
        text = out.read_text()
        assert "tiny" in text
        assert "avg_rank" in text


class TestExportViz:
    def test_row_count_and_columns(self, tmp_path):
        cfg = tiny_experiment_config(tmp_path)
        cfg.methods = ["cshc"]
        cfg.reference = "cshc"
        result = run_experiment(cfg, keep_preps=True)
        prep = result.preps["tiny"]
        out = tmp_path / "viz.csv"
        export_viz(prep.ds, prep.plan,
                   result.cells[("tiny", "cshc")].outcomes, str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "sample_index,pc1,pc2,chosen_classifier,correct"
        assert len(lines) - 1 == prep.test_ds.n_samples
