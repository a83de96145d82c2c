import numpy as np
import pytest

from gclbench.errors import ProbeError
from gclbench.probes import (
    LinearSvmModel,
    OneVsRestSvm,
    balanced_class_weights,
    logreg_probe_protocol,
    svm_probe_protocol,
    train_linear_svm,
    train_logreg,
    train_svm_classifier,
)


def blobs(rng, centers, per_class, spread=0.3):
    X = np.concatenate([rng.normal(c, spread, size=(per_class, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), per_class)
    return X, y


@pytest.fixture
def binary(rng):
    return blobs(rng, [(-2.0, 0.0), (2.0, 0.5)], 20)


class TestLinearSvm:
    def test_separates_blobs(self, binary):
        X, y = binary
        model = train_linear_svm(X, np.where(y == 1, 1.0, -1.0), C=10.0)
        assert np.all((model.decision_function(X) > 0) == (y == 1))

    def test_converges_before_cap(self, binary):
        X, y = binary
        model = train_linear_svm(X, np.where(y == 1, 1.0, -1.0), C=1.0)
        assert 1 <= model.passes < 10_000

    def test_small_c_shrinks_weights(self, binary):
        X, y = binary
        signs = np.where(y == 1, 1.0, -1.0)
        loose = train_linear_svm(X, signs, C=0.001)
        tight = train_linear_svm(X, signs, C=100.0)
        assert np.linalg.norm(loose.weights) < np.linalg.norm(tight.weights)

    def test_deterministic_for_seed(self, binary):
        X, y = binary
        signs = np.where(y == 1, 1.0, -1.0)
        a = train_linear_svm(X, signs, C=1.0, seed=3)
        b = train_linear_svm(X, signs, C=1.0, seed=3)
        np.testing.assert_array_equal(a.weights, b.weights)

    @pytest.mark.parametrize("labels, match", [
        ([0, 1, 0, 1], "-1 or \\+1"),
        ([1, 1, 1, 1], "both classes"),
    ])
    def test_bad_labels(self, labels, match):
        with pytest.raises(ProbeError, match=match):
            train_linear_svm(np.ones((4, 2)), labels, C=1.0)

    def test_non_positive_c(self, binary):
        X, y = binary
        with pytest.raises(ProbeError):
            train_linear_svm(X, np.where(y == 1, 1.0, -1.0), C=0.0)


class TestOneVsRest:
    def test_three_classes(self, rng):
        X, y = blobs(rng, [(-3.0, 0.0), (3.0, 0.0), (0.0, 4.0)], 15)
        model = train_svm_classifier(X, y, C=10.0)
        assert len(model.machines) == 3
        np.testing.assert_array_equal(model.predict(X), y)

    def test_binary_uses_one_machine_and_original_labels(self, binary):
        X, y = binary
        model = train_svm_classifier(X, y + 5, C=10.0)
        assert len(model.machines) == 1
        np.testing.assert_array_equal(model.predict(X), y + 5)

    def test_single_class(self):
        with pytest.raises(ProbeError, match="two classes"):
            train_svm_classifier(np.ones((3, 2)), [1, 1, 1], C=1.0)

    def test_positive_rescaling_of_decisions_keeps_predictions(self, rng):
        X, y = blobs(rng, [(-1.0, 0.0), (1.0, 0.0), (0.0, 1.5)], 15, spread=0.8)
        model = train_svm_classifier(X, y, C=1.0)
        scaled = OneVsRestSvm(model.classes, [
            LinearSvmModel(3.5 * m.weights, 3.5 * m.bias, m.C) for m in model.machines
        ])
        np.testing.assert_array_equal(scaled.predict(X), model.predict(X))


class TestSvmProtocol:
    def test_separable_embeddings_score_perfectly(self, rng):
        X, y = blobs(rng, [(-4.0, 0.0), (4.0, 0.0)], 10)
        report = svm_probe_protocol(X, y, k=5, seeds=(0, 1), c_grid=(0.1, 1.0), inner_k=2)
        assert report.metric == "accuracy"
        assert report.values == [1.0, 1.0]
        assert report.std == 0.0

    def test_one_hot_label_embeddings(self):
        y = np.arange(30) % 3
        report = svm_probe_protocol(np.eye(3)[y], y, k=5, c_grid=(1.0,), inner_k=2)
        assert report.mean == 1.0

    def test_noise_embeddings_score_chance(self, rng):
        y = np.arange(200) % 2
        report = svm_probe_protocol(rng.normal(size=(200, 4)), y, k=5, c_grid=(0.1, 1.0), inner_k=2)
        assert report.mean == pytest.approx(0.5, abs=0.07)

    def test_fold_features_receive_disjoint_indices(self, rng):
        X, y = blobs(rng, [(-4.0, 0.0), (4.0, 0.0)], 10)
        calls = []

        def fold_features(tr, te):
            calls.append((tr, te))
            return X[tr], X[te]

        svm_probe_protocol(None, y, k=5, c_grid=(1.0,), inner_k=2, fold_features=fold_features)
        assert len(calls) == 5
        for tr, te in calls:
            assert set(tr).isdisjoint(te)
            assert len(tr) + len(te) == 20

    def test_reproducible(self, rng):
        X, y = blobs(rng, [(-0.5, 0.0), (0.5, 0.0)], 10, spread=1.0)
        first = svm_probe_protocol(X, y, k=5, c_grid=(0.1, 1.0), inner_k=2)
        second = svm_probe_protocol(X, y, k=5, c_grid=(0.1, 1.0), inner_k=2)
        assert first.values == second.values

    def test_input_rescaling_keeps_accuracy(self, rng):
        X, y = blobs(rng, [(-0.5, 0.0), (0.5, 0.0)], 15, spread=1.0)
        base = svm_probe_protocol(X, y, k=5, c_grid=(0.1, 1.0), inner_k=2)
        scaled = svm_probe_protocol(X * np.array([4.0, 0.25]), y, k=5, c_grid=(0.1, 1.0), inner_k=2)
        assert scaled.values == base.values

    def test_class_smaller_than_k(self, rng):
        X = rng.normal(size=(14, 2))
        with pytest.raises(ProbeError):
            svm_probe_protocol(X, [0] * 10 + [1] * 4, k=5)

    def test_misaligned(self):
        with pytest.raises(ProbeError, match="embeddings for"):
            svm_probe_protocol(np.ones((3, 2)), [0, 1], k=2)

    def test_nothing_to_probe(self):
        with pytest.raises(ProbeError):
            svm_probe_protocol(None, [0, 1], k=2)


class TestLogReg:
    def test_balanced_weights(self):
        assert balanced_class_weights([0, 0, 0, 1]) == pytest.approx((4 / 6, 2.0))

    def test_balanced_weights_need_both_classes(self):
        with pytest.raises(ProbeError):
            balanced_class_weights([0, 0])

    def test_stationary_point(self, rng):
        X, y = blobs(rng, [(-1.0, 0.0), (1.0, 0.0)], 30, spread=1.0)
        model = train_logreg(X, y, C=1.0)
        w0, w1 = model.class_weights
        sample_weight = np.where(y == 1, w1, w0)
        z = model.decision_function(X)
        residual = sample_weight * (1.0 / (1.0 + np.exp(-z)) - y)
        grad_w = X.T @ residual + model.weights / model.C
        grad_b = residual.sum()
        assert np.linalg.norm(np.append(grad_w, grad_b)) < 1e-4

    def test_stronger_regularisation_shrinks(self, rng):
        X, y = blobs(rng, [(-1.0, 0.0), (1.0, 0.0)], 30, spread=1.0)
        assert np.linalg.norm(train_logreg(X, y, C=0.01).weights) < np.linalg.norm(train_logreg(X, y, C=10.0).weights)

    def test_symmetric_data_gives_zero_bias(self, rng):
        Z = rng.normal(loc=(1.0, 0.5), scale=1.0, size=(25, 2))
        X = np.concatenate([Z, -Z])
        y = np.repeat([1, 0], 25)
        model = train_logreg(X, y, C=1.0)
        assert abs(model.bias) < 1e-6

    def test_imbalanced_positives_ranked_high(self, rng):
        X, y = blobs(rng, [(0.0, 0.0), (2.0, 2.0)], 40)
        keep = np.concatenate([np.arange(40), np.arange(40, 44)])
        model = train_logreg(X[keep], y[keep], C=1.0)
        assert model.decision_function(np.array([[2.0, 2.0]]))[0] > 0


class TestLogRegProtocol:
    def test_picks_c_and_reports_test_auc(self, rng):
        X, y = blobs(rng, [(-1.0, 0.0), (1.0, 0.0)], 60, spread=1.0)
        order = rng.permutation(y.size)
        X, y = X[order], y[order]
        result = logreg_probe_protocol((X[:60], y[:60]), (X[60:90], y[60:90]), (X[90:], y[90:]))
        assert set(result.validation) == {"0.01", "0.1", "1", "10"}
        assert result.best_c in (0.01, 0.1, 1.0, 10.0)
        assert 0.7 < result.roc_auc <= 1.0

    def test_ties_go_to_smallest_c(self, rng):
        X, y = blobs(rng, [(-5.0, 0.0), (5.0, 0.0)], 10)
        split = (X, y)
        result = logreg_probe_protocol(split, split, split)
        assert result.best_c == 0.01
        assert result.roc_auc == 1.0

    def test_empty_split(self, rng):
        X, y = blobs(rng, [(-1.0, 0.0), (1.0, 0.0)], 5)
        with pytest.raises(ProbeError, match="valid"):
            logreg_probe_protocol((X, y), (np.zeros((0, 2)), np.zeros(0)), (X, y))

    def test_single_class_validation(self, rng):
        X, y = blobs(rng, [(-1.0, 0.0), (1.0, 0.0)], 5)
        with pytest.raises(ProbeError):
            logreg_probe_protocol((X, y), (X[:5], y[:5]), (X, y))
