import numpy as np
import pytest

from conftest import path_graph, random_graph, star, triangle

from gclbench.errors import ConfigError, DatasetFormatError, ProbeError
from gclbench.features import (
    DESCRIPTOR_DIM,
    ablation_features,
    compute_bin_edges,
    feature_matrix,
    handcrafted_features,
    random_features,
    random_matrix,
    standardize_apply,
    standardize_fit,
)
from gclbench.graphs import make_graph
from gclbench.probes import svm_probe_protocol
from gclbench.synthetic import SyntheticConfig, generate_dataset


@pytest.fixture
def edges():
    return compute_bin_edges([triangle(), path_graph(5)])


class TestBinEdges:
    def test_equal_width_up_to_max_degree(self, edges):
        np.testing.assert_allclose(edges[:-1], [0.0, 0.4, 0.8, 1.2, 1.6])
        assert np.isinf(edges[-1])

    def test_edgeless_training_set(self):
        edges = compute_bin_edges([make_graph(1, np.ones((1, 1)), [], 0)])
        np.testing.assert_array_equal(edges[:-1], [0, 1, 2, 3, 4])

    def test_empty(self):
        with pytest.raises(DatasetFormatError):
            compute_bin_edges([])


class TestHandcrafted:
    def test_triangle(self, edges):
        np.testing.assert_allclose(handcrafted_features(triangle(), edges), [3, 2, 0, 0, 0, 0, 1])

    def test_path(self, edges):
        np.testing.assert_allclose(handcrafted_features(path_graph(5), edges), [5, 1.6, 0, 0, 0.4, 0, 0.6])

    def test_degree_above_training_max_lands_in_last_bin(self, edges):
        features = handcrafted_features(star(10), edges)
        assert features[-1] == pytest.approx(1 / 11)
        assert features.shape == (DESCRIPTOR_DIM,)

    def test_histogram_sums_to_one(self, edges, rng):
        for _ in range(5):
            features = handcrafted_features(random_graph(rng, 9, p=0.4), edges)
            assert features[2:].sum() == pytest.approx(1.0)

    def test_isolated_node(self):
        edges = compute_bin_edges([make_graph(1, np.ones((1, 1)), [], 0)])
        np.testing.assert_allclose(handcrafted_features(make_graph(1, np.ones((1, 1)), [], 0), edges),
                                   [1, 0, 1, 0, 0, 0, 0])

    def test_node_relabeling_is_exact(self, edges, rng):
        g = random_graph(rng, 9, p=0.4)
        for _ in range(10):
            relabeled = g.relabeled(rng.permutation(9))
            np.testing.assert_array_equal(handcrafted_features(relabeled, edges), handcrafted_features(g, edges))

    @pytest.mark.parametrize("which, expected", [
        ("node-count", [3]), ("avg-degree", [2]), ("deg-histogram", [0, 0, 0, 0, 1]), ("all", [3, 2, 0, 0, 0, 0, 1]),
    ])
    def test_ablations(self, edges, which, expected):
        np.testing.assert_allclose(ablation_features(triangle(), which, edges), expected)

    def test_unknown_ablation(self, edges):
        with pytest.raises(ConfigError):
            ablation_features(triangle(), "clustering", edges)

    def test_feature_matrix(self, edges):
        assert feature_matrix([triangle(), path_graph(4)], edges, "deg-histogram").shape == (2, 5)


class TestRandomBaseline:
    def test_fixed_per_graph_and_seed(self):
        np.testing.assert_array_equal(random_features(7, 3, 0), random_features(7, 3, 0))
        assert not np.array_equal(random_features(7, 3, 0), random_features(7, 4, 0))
        assert not np.array_equal(random_features(7, 3, 0), random_features(7, 3, 1))

    def test_matrix_rows_match_single_draws(self):
        matrix = random_matrix([5, 9], seed=2)
        assert matrix.shape == (2, DESCRIPTOR_DIM)
        np.testing.assert_array_equal(matrix[1], random_features(DESCRIPTOR_DIM, 9, 2))

    def test_invalid_dim(self):
        with pytest.raises(ConfigError):
            random_features(0, 1, 0)

    def test_column_means_near_zero(self):
        matrix = random_matrix(range(10_000), seed=0)
        assert np.all(np.abs(matrix.mean(axis=0)) < 0.05)

    def test_probe_on_random_features_is_at_chance(self):
        labels = generate_dataset(SyntheticConfig(style_multiplier=2, total_size=600)).labels
        features = random_matrix(range(len(labels)), seed=0)
        report = svm_probe_protocol(features, labels, k=5, c_grid=(0.1, 1.0), inner_k=3)
        assert report.mean == pytest.approx(1 / 6, abs=0.05)


class TestStandardize:
    def test_z_scores_training_columns(self):
        train = np.array([[1.0, 10.0], [3.0, 30.0]])
        scaler = standardize_fit(train)
        np.testing.assert_allclose(standardize_apply(scaler, train), [[-1, -1], [1, 1]])

    def test_constant_column_passes_through(self):
        scaler = standardize_fit(np.array([[5.0, 1.0], [5.0, 2.0]]))
        np.testing.assert_allclose(standardize_apply(scaler, np.array([[7.0, 1.5]]))[:, 0], [7.0])

    def test_width_mismatch(self):
        scaler = standardize_fit(np.ones((3, 2)))
        with pytest.raises(ProbeError):
            standardize_apply(scaler, np.ones((1, 3)))

    def test_empty(self):
        with pytest.raises(ProbeError):
            standardize_fit(np.zeros((0, 2)))
