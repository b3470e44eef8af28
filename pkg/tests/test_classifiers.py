"""Base classifier contracts: probabilities, ties, determinism."""

import math

import numpy as np
import pytest

from cshc.classifiers import (ClassifierSpec, PerceptronTrained, _Scaler,
                              load_external_predictions, model_from_state,
                              model_state, predict, predict_batch,
                              predict_proba, predict_proba_batch, train)
from cshc.data import DataError, Dataset, make_split


def hand_gaussian_posterior(x, priors, means, stds):
    """1-D Bayes rule computed longhand for the oracle comparison."""
    dens = [p * math.exp(-((x - m) ** 2) / (2 * s * s)) / (math.sqrt(2 * math.pi) * s)
            for p, m, s in zip(priors, means, stds)]
    z = sum(dens)
    return [d / z for d in dens]


class TestGaussianNB:
    def test_matches_hand_bayes_1d(self):
        rng = np.random.default_rng(0)
        x0 = rng.normal(-2.0, 0.5, 40)
        x1 = rng.normal(2.0, 1.5, 60)
        X = np.concatenate([x0, x1])[:, None]
        y = np.array([0] * 40 + [1] * 60)
        ds = Dataset(X, y, ["f"], ["a", "b"])
        model = train(ClassifierSpec("gaussian_nb"), ds)
        eps = 1e-9 * X.var(axis=0).max()
        priors = [0.4, 0.6]
        means = [x0.mean(), x1.mean()]
        stds = [math.sqrt(x0.var() + eps), math.sqrt(x1.var() + eps)]
        for probe in [-3.0, -1.0, 0.0, 0.5, 1.5, 3.0]:
            want = hand_gaussian_posterior(probe, priors, means, stds)
            got = predict_proba(model, [probe])
            assert got == pytest.approx(want, abs=1e-9)

    def test_separated_clusters_perfect_training_accuracy(self, two_blob_ds):
        model = train(ClassifierSpec("gaussian_nb"), two_blob_ds)
        pred = predict_batch(model, two_blob_ds)
        assert (pred == two_blob_ds.labels).all()

    def test_equal_likelihood_prior_wins(self):
        # both classes share the same feature distribution; only the
        # prior differs, so the frequent class is always predicted
        X = np.array([[0.0], [1.0], [0.0], [1.0], [0.0], [1.0]])
        y = np.array([0, 0, 0, 0, 1, 1])
        ds = Dataset(X, y, ["f"], ["maj", "min"])
        model = train(ClassifierSpec("gaussian_nb"), ds)
        assert predict(model, [0.5]) == 0

    def test_zero_variance_feature_smoothed(self):
        X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
        y = np.array([0, 0, 1, 1])
        ds = Dataset(X, y, ["c", "f"], ["a", "b"])
        model = train(ClassifierSpec("gaussian_nb"), ds)
        p = predict_proba(model, [1.0, 0.5])
        assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


class TestOneNN:
    def test_resubstitution_perfect(self, two_blob_ds):
        model = train(ClassifierSpec("one_nn"), two_blob_ds)
        assert (predict_batch(model, two_blob_ds) == two_blob_ds.labels).all()

    def test_one_hot_probability(self, two_blob_ds):
        model = train(ClassifierSpec("one_nn"), two_blob_ds)
        p = predict_proba(model, two_blob_ds.features[3])
        assert sorted(p.tolist()) == [0.0, 1.0]

    def test_tie_goes_to_lower_index(self):
        X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        y = np.array([0, 1, 1, 0])
        ds = Dataset(X, y, ["f"], ["a", "b"])
        model = train(ClassifierSpec("one_nn", hyperparams={"standardize": False}), ds)
        # query at 0 is equidistant from all four; row 0 wins
        assert predict(model, [0.0]) == 0


class TestGiniTree:
    def test_resubstitution_perfect_on_consistent_data(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 3, size=40)
        ds = Dataset(X, y, ["a", "b", "c"], ["x", "y", "z"])
        model = train(ClassifierSpec("decision_tree_gini"), ds)
        assert (predict_batch(model, ds) == y).all()

    def test_leaf_frequencies(self):
        # one feature, no useful split beyond x<=1.5: leaf (3,1) -> (0.75, 0.25)
        X = np.array([[1.0], [1.0], [1.0], [1.0], [2.0]])
        y = np.array([0, 0, 0, 1, 1])
        ds = Dataset(X, y, ["f"], ["a", "b"])
        model = train(ClassifierSpec("decision_tree_gini"), ds)
        p = predict_proba(model, [1.0])
        assert p.tolist() == [0.75, 0.25]

    def test_xor_still_separated(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1, 1, 0])
        ds = Dataset(X, y, ["a", "b"], ["x", "y"])
        model = train(ClassifierSpec("decision_tree_gini"), ds)
        assert (predict_batch(model, ds) == y).all()


class TestPerceptron:
    def test_softmax_hand_computed(self):
        # scores (2, 0) -> (e^2, 1) normalized
        spec = ClassifierSpec("perceptron")
        W = np.array([[0.0, 2.0], [0.0, 0.0]])  # bias-only scores
        model = PerceptronTrained(spec, 2, 1, _Scaler.identity(1), W)
        p = predict_proba(model, [0.0])
        want = [math.exp(2) / (math.exp(2) + 1), 1 / (math.exp(2) + 1)]
        assert p == pytest.approx(want, abs=1e-12)
        assert p[0] == pytest.approx(0.881, abs=5e-4)

    def test_zero_weights_predict_lowest_class(self):
        spec = ClassifierSpec("perceptron")
        model = PerceptronTrained(spec, 3, 2, _Scaler.identity(2),
                                  np.zeros((3, 3)))
        assert predict(model, [4.0, -1.0]) == 0

    def test_learns_separable_blobs(self, two_blob_ds):
        model = train(ClassifierSpec("perceptron"), two_blob_ds)
        assert (predict_batch(model, two_blob_ds) == two_blob_ds.labels).all()


class TestSharedContracts:
    @pytest.mark.parametrize("kind", ["gaussian_nb", "one_nn",
                                      "decision_tree_gini", "perceptron"])
    def test_predict_is_argmax_of_proba(self, kind, two_blob_ds):
        model = train(ClassifierSpec(kind), two_blob_ds)
        rng = np.random.default_rng(2)
        probes = rng.normal(scale=3.0, size=(50, 2))
        for x in probes:
            p = predict_proba(model, x)
            assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert p.min() >= 0
            assert predict(model, x) == int(np.argmax(p))

    @pytest.mark.parametrize("kind", ["gaussian_nb", "one_nn",
                                      "decision_tree_gini", "perceptron"])
    def test_retraining_reproduces_predictions(self, kind, two_blob_ds):
        m1 = train(ClassifierSpec(kind), two_blob_ds)
        m2 = train(ClassifierSpec(kind), two_blob_ds)
        probes = np.random.default_rng(3).normal(scale=2.0, size=(30, 2))
        for x in probes:
            assert np.array_equal(predict_proba(m1, x), predict_proba(m2, x))

    @pytest.mark.parametrize("kind", ["gaussian_nb", "one_nn",
                                      "decision_tree_gini", "perceptron"])
    def test_state_round_trip(self, kind, two_blob_ds):
        m1 = train(ClassifierSpec(kind), two_blob_ds)
        m2 = model_from_state(model_state(m1))
        probes = np.random.default_rng(4).normal(scale=2.0, size=(20, 2))
        for x in probes:
            assert np.array_equal(predict_proba(m1, x), predict_proba(m2, x))

    def test_dimension_mismatch(self, two_blob_ds):
        model = train(ClassifierSpec("gaussian_nb"), two_blob_ds)
        with pytest.raises(DataError, match="features"):
            predict(model, [1.0, 2.0, 3.0])

    def test_unknown_kind(self):
        with pytest.raises(DataError, match="unknown classifier kind"):
            ClassifierSpec("svm")


class TestExternal:
    def _write(self, path, rows, header="sample_index,predicted_class"):
        path.write_text(header + "\n" + "\n".join(rows) + "\n")
        return str(path)

    def test_full_coverage_accepted(self, tmp_path, two_blob_ds):
        plan = make_split(two_blob_ds, 0.5, seed=0)
        p = self._write(tmp_path / "e.csv",
                        ["%d,%d" % (i, 0) for i in range(60)])
        table = load_external_predictions(p, split=plan, n_classes=2)
        assert table.n_classes == 2

    def test_missing_index_named(self, tmp_path, two_blob_ds):
        plan = make_split(two_blob_ds, 0.5, seed=0)
        rows = ["%d,0" % i for i in range(60) if i != 17]
        p = self._write(tmp_path / "e.csv", rows)
        with pytest.raises(DataError, match="sample index 17"):
            load_external_predictions(p, split=plan, n_classes=2)

    def test_probability_normalization_error(self, tmp_path):
        p = self._write(tmp_path / "e.csv", ["0,1,0.5,0.6"],
                        header="sample_index,predicted_class,p0,p1")
        with pytest.raises(DataError, match="sum to"):
            load_external_predictions(p)

    def test_usable_as_classifier(self, tmp_path, two_blob_ds):
        rows = ["%d,%d" % (i, two_blob_ds.labels[i]) for i in range(60)]
        p = self._write(tmp_path / "e.csv", rows)
        spec = ClassifierSpec("external", name="oracle-ish",
                              hyperparams={"path": p})
        model = train(spec, two_blob_ds)
        proba = predict_proba_batch(model, two_blob_ds)
        assert (proba.argmax(axis=1) == two_blob_ds.labels).all()
        with pytest.raises(DataError, match="keyed by sample index"):
            predict(model, [0.0, 0.0])
