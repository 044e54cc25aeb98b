import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.linear_model import Ridge

from codedfl import (
    EmbeddedDataset,
    FourierFeatureMap,
    derive_params,
    embed,
    embed_matrix,
)


def rbf_kernel(v1, v2, sigma):
    return np.exp(-np.sum((v1 - v2) ** 2) / (2 * sigma**2))


class TestDeriveParams:
    def test_deterministic_bit_for_bit(self):
        a = derive_params(42, d=7, q=13, sigma=2.0)
        b = derive_params(42, d=7, q=13, sigma=2.0)
        assert np.array_equal(a.omega, b.omega)
        assert np.array_equal(a.delta, b.delta)

    def test_different_seeds_differ(self):
        a = derive_params(1, d=5, q=8, sigma=1.0)
        b = derive_params(2, d=5, q=8, sigma=1.0)
        assert not np.array_equal(a.omega, b.omega)

    def test_reference_hyperparameters_allocate(self):
        params = derive_params(0, d=784, q=2000, sigma=5.0)
        assert params.omega.shape == (2000, 784)
        assert params.delta.shape == (2000,)

    def test_frequency_variance(self):
        sigma = 3.0
        params = derive_params(5, d=100, q=1200, sigma=sigma)  # q*d >= 1e5
        assert params.omega.var() == pytest.approx(1 / sigma**2, rel=0.05)

    def test_shift_support(self):
        params = derive_params(9, d=3, q=5000, sigma=1.0)
        assert np.all(params.delta > 0)
        assert np.all(params.delta <= 2 * np.pi)

    @pytest.mark.parametrize("kwargs", [dict(d=0), dict(q=0), dict(sigma=0.0)])
    def test_invalid_arguments(self, kwargs):
        base = dict(seed=0, d=4, q=4, sigma=1.0)
        base.update(kwargs)
        with pytest.raises(ValueError):
            derive_params(**base)


class TestEmbed:
    def test_entry_bound(self):
        params = derive_params(3, d=6, q=50, sigma=2.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = embed(params, rng.random(6))
            assert np.all(np.abs(v) <= np.sqrt(2 / 50) + 1e-15)

    def test_self_inner_product_near_one(self):
        # E[cos^2] = 1/2 under a uniform shift, so phi(v).phi(v) -> 1
        params = derive_params(4, d=10, q=10_000, sigma=5.0)
        rng = np.random.default_rng(1)
        for _ in range(10):
            v = embed(params, rng.random(10))
            ip = float(v @ v)
            assert ip <= 2.0
            assert abs(ip - 1.0) <= 0.05

    def test_kernel_approximation_pairwise(self):
        params = derive_params(6, d=20, q=2000, sigma=5.0)
        rng = np.random.default_rng(2)
        for _ in range(50):
            v1, v2 = rng.random(20), rng.random(20)
            approx = float(embed(params, v1) @ embed(params, v2))
            assert abs(approx - rbf_kernel(v1, v2, 5.0)) <= 4 / np.sqrt(2000)

    def test_kernel_approximation_mean_error(self):
        params = derive_params(8, d=20, q=2000, sigma=5.0)
        rng = np.random.default_rng(3)
        errors = []
        for _ in range(500):
            v1, v2 = rng.random(20), rng.random(20)
            approx = float(embed(params, v1) @ embed(params, v2))
            errors.append(abs(approx - rbf_kernel(v1, v2, 5.0)))
        assert np.mean(errors) <= 2 / np.sqrt(2000)

    def test_dimension_mismatch(self):
        params = derive_params(0, d=4, q=8, sigma=1.0)
        with pytest.raises(ValueError):
            embed(params, np.zeros(5))


class TestEmbedMatrix:
    def test_empty_dataset(self):
        params = derive_params(0, d=4, q=8, sigma=1.0)
        ds = embed_matrix(params, np.zeros((0, 4)), np.zeros((0, 3)))
        assert ds.features.shape == (0, 8)
        assert ds.labels.shape == (0, 3)

    def test_rows_match_single_vector_map(self):
        params = derive_params(1, d=5, q=16, sigma=2.0)
        rng = np.random.default_rng(4)
        X = rng.random((6, 5))
        Y = np.eye(6)
        ds = embed_matrix(params, X, Y)
        for i in range(6):
            assert np.allclose(ds.features[i], embed(params, X[i]), atol=1e-15)
        assert np.array_equal(ds.labels, Y)

    def test_row_permutation_equivariance(self):
        params = derive_params(2, d=5, q=16, sigma=2.0)
        rng = np.random.default_rng(5)
        X = rng.random((8, 5))
        Y = rng.integers(0, 2, (8, 2)).astype(float)
        perm = rng.permutation(8)
        direct = embed_matrix(params, X[perm], Y[perm])
        permuted = embed_matrix(params, X, Y)
        assert np.array_equal(direct.features, permuted.features[perm])

    def test_cross_client_bitwise_agreement(self):
        # two simulated clients derive from the same shared seed
        rng = np.random.default_rng(6)
        row = rng.random((1, 12))
        label = np.ones((1, 1))
        client_a = embed_matrix(derive_params(99, 12, 64, 3.0), row, label)
        client_b = embed_matrix(derive_params(99, 12, 64, 3.0), row, label)
        assert np.array_equal(client_a.features, client_b.features)

    def test_shape_errors(self):
        params = derive_params(0, d=4, q=8, sigma=1.0)
        with pytest.raises(ValueError):
            embed_matrix(params, np.zeros((3, 5)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            embed_matrix(params, np.zeros((3, 4)), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            EmbeddedDataset(features=np.zeros((3, 4)), labels=np.zeros((2, 1)))


class TestFourierFeatureMap:
    def test_matches_functional_path(self):
        rng = np.random.default_rng(7)
        X = rng.random((10, 6))
        fm = FourierFeatureMap(q=32, sigma=2.0, seed=5).fit(X)
        params = derive_params(5, 6, 32, 2.0)
        expected = embed_matrix(params, X, np.zeros((10, 1))).features
        assert np.array_equal(fm.transform(X), expected)

    def test_clone_and_get_params(self):
        fm = FourierFeatureMap(q=64, sigma=1.5, seed=3)
        assert fm.get_params() == {"q": 64, "sigma": 1.5, "seed": 3}
        twin = clone(fm)
        rng = np.random.default_rng(8)
        X = rng.random((5, 4))
        assert np.array_equal(fm.fit(X).transform(X), twin.fit(X).transform(X))

    def test_composes_in_pipeline(self):
        rng = np.random.default_rng(9)
        X = rng.random((40, 3))
        y = np.sin(X.sum(axis=1))
        model = make_pipeline(FourierFeatureMap(q=128, sigma=1.0, seed=0), Ridge())
        model.fit(X, y)
        assert model.predict(X).shape == (40,)

    def test_dimension_guard(self):
        rng = np.random.default_rng(10)
        fm = FourierFeatureMap(q=16, seed=0).fit(rng.random((4, 3)))
        with pytest.raises(ValueError):
            fm.transform(rng.random((4, 5)))
