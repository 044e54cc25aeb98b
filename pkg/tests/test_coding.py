import math

import numpy as np
import pytest

from codedfl import (
    EmbeddedDataset,
    NodeProfile,
    ParityDataset,
    WeightSpec,
    aggregate_global,
    build_weight_spec,
    cdf_delay,
    encode_local,
    generate_encoding_matrix,
    read_dataset_file,
    read_parity_file,
    write_parity_file,
)

LOSSY_NODE = NodeProfile(mu=2.0, alpha=20.0, tau=math.sqrt(3.0), p=0.9, ell_max=20.0)


def random_embedded(rng, rows, q=6, c=3):
    return EmbeddedDataset(
        features=rng.standard_normal((rows, q)), labels=rng.standard_normal((rows, c))
    )


class TestBuildWeightSpec:
    def test_mask_count_and_weight_rule(self):
        rng = np.random.default_rng(0)
        profile = NodeProfile(mu=2.0, alpha=3.0, tau=0.5, p=0.2, ell_max=12)
        spec = build_weight_spec(profile, 5, 8.0, rng)
        assert spec.processed_mask.sum() == 5
        assert spec.weights.shape == (12,)
        pnr = 1.0 - cdf_delay(profile, 5, 8.0)
        assert spec.pnr_processed == pytest.approx(pnr, abs=1e-12)
        assert np.allclose(spec.weights[spec.processed_mask], math.sqrt(pnr))
        assert np.all(spec.weights[~spec.processed_mask] == 1.0)

    def test_nothing_processed_gives_unit_weights(self):
        rng = np.random.default_rng(1)
        spec = build_weight_spec(LOSSY_NODE, 0, 10.0, rng)
        assert spec.processed_mask.sum() == 0
        assert np.all(spec.weights == 1.0)

    def test_certain_return_zeroes_processed_weights(self):
        # with arrival probability ~1 the processed rows vanish from parity
        rng = np.random.default_rng(2)
        profile = NodeProfile(mu=10.0, alpha=5.0, tau=0.01, p=0.0, ell_max=4)
        spec = build_weight_spec(profile, 4, 1e9, rng)
        assert np.allclose(spec.weights, 0.0, atol=1e-8)

    def test_lossy_node_pnr_consistency(self):
        rng = np.random.default_rng(3)
        spec = build_weight_spec(LOSSY_NODE, 10, 10.0, rng)
        assert spec.pnr_processed == pytest.approx(
            1.0 - cdf_delay(LOSSY_NODE, 10, 10.0), abs=1e-12
        )

    def test_overfull_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            build_weight_spec(LOSSY_NODE, 21, 10.0, rng)


class TestGenerateEncodingMatrix:
    def test_moments(self):
        rng = np.random.default_rng(5)
        for dist in ("gaussian", "rademacher"):
            G = generate_encoding_matrix(1000, 1000, rng, dist)
            assert abs(G.mean()) <= 0.01
            assert abs(G.var() - 1.0) <= 0.01

    def test_rademacher_support(self):
        rng = np.random.default_rng(6)
        G = generate_encoding_matrix(50, 40, rng, "rademacher")
        assert set(np.unique(G)) == {-1.0, 1.0}

    def test_gram_concentrates_to_identity(self):
        rng = np.random.default_rng(7)
        u = 10_000
        G = generate_encoding_matrix(u, 8, rng, "gaussian")
        gram = G.T @ G / u
        off = gram[~np.eye(8, dtype=bool)]
        assert np.abs(off).mean() <= 4 / math.sqrt(u)

    def test_unknown_distribution(self):
        rng = np.random.default_rng(8)
        with pytest.raises(ValueError):
            generate_encoding_matrix(2, 2, rng, "uniform")


class TestEncodeLocal:
    def test_zero_generator_gives_zero_parity(self):
        rng = np.random.default_rng(9)
        data = random_embedded(rng, 4)
        spec = WeightSpec(
            processed_mask=np.zeros(4, bool),
            pnr_processed=1.0,
            weights=np.ones(4),
        )
        parity = encode_local(data, spec, np.zeros((3, 4)))
        assert np.all(parity.features == 0) and np.all(parity.labels == 0)

    def test_scalar_case(self):
        rng = np.random.default_rng(10)
        data = random_embedded(rng, 1)
        w = 0.7
        spec = WeightSpec(
            processed_mask=np.array([True]),
            pnr_processed=w * w,
            weights=np.array([w]),
        )
        parity = encode_local(data, spec, np.ones((1, 1)))
        assert np.allclose(parity.features, w * data.features)
        assert np.allclose(parity.labels, w * data.labels)

    def test_matches_naive_triple_product(self):
        rng = np.random.default_rng(11)
        data = random_embedded(rng, 3, q=4, c=2)
        weights = rng.uniform(0.2, 1.0, 3)
        spec = WeightSpec(
            processed_mask=np.array([True, False, True]),
            pnr_processed=0.5,
            weights=weights,
        )
        G = rng.standard_normal((5, 3))
        parity = encode_local(data, spec, G)

        expect_f = np.zeros((5, 4))
        expect_l = np.zeros((5, 2))
        for i in range(5):
            for k in range(3):
                for j in range(4):
                    expect_f[i, j] += G[i, k] * weights[k] * data.features[k, j]
                for j in range(2):
                    expect_l[i, j] += G[i, k] * weights[k] * data.labels[k, j]
        assert np.allclose(parity.features, expect_f, atol=1e-12)
        assert np.allclose(parity.labels, expect_l, atol=1e-12)

    def test_linearity_in_the_data(self):
        rng = np.random.default_rng(12)
        data = random_embedded(rng, 4)
        scaled = EmbeddedDataset(features=2.5 * data.features, labels=2.5 * data.labels)
        spec = WeightSpec(
            processed_mask=np.zeros(4, bool),
            pnr_processed=1.0,
            weights=rng.uniform(0.1, 1.0, 4),
        )
        G = rng.standard_normal((3, 4))
        base = encode_local(data, spec, G)
        double = encode_local(scaled, spec, G)
        assert np.allclose(double.features, 2.5 * base.features, atol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(13)
        data = random_embedded(rng, 4)
        spec = WeightSpec(
            processed_mask=np.zeros(4, bool), pnr_processed=1.0, weights=np.ones(4)
        )
        with pytest.raises(ValueError):
            encode_local(data, spec, np.zeros((3, 5)))


class TestAggregateGlobal:
    def test_single_client_identity(self):
        rng = np.random.default_rng(14)
        parity = ParityDataset(
            features=rng.standard_normal((3, 4)), labels=rng.standard_normal((3, 2))
        )
        out = aggregate_global([parity])
        assert np.array_equal(out.features, parity.features)

    def test_block_identity_against_centralized_encoding(self):
        # distributed parity sums to the centralized product over the
        # concatenated data with the block-diagonal weight structure
        rng = np.random.default_rng(15)
        clients = [random_embedded(rng, 4, q=5, c=2) for _ in range(3)]
        weights = [rng.uniform(0.3, 1.0, 4) for _ in range(3)]
        gens = [rng.standard_normal((6, 4)) for _ in range(3)]
        parities = [
            encode_local(
                data,
                WeightSpec(np.zeros(4, bool), 1.0, w),
                G,
            )
            for data, w, G in zip(clients, weights, gens)
        ]
        combined = aggregate_global(parities)

        big_g = np.hstack(gens)                       # u x (3*4)
        big_w = np.diag(np.concatenate(weights))      # block-diagonal as one diag
        big_x = np.vstack([c.features for c in clients])
        big_y = np.vstack([c.labels for c in clients])
        assert np.allclose(combined.features, big_g @ big_w @ big_x, atol=1e-10)
        assert np.allclose(combined.labels, big_g @ big_w @ big_y, atol=1e-10)

    def test_sorted_fold_is_reproducible(self):
        rng = np.random.default_rng(16)
        parities = [
            ParityDataset(
                features=rng.standard_normal((3, 4)),
                labels=rng.standard_normal((3, 2)),
            )
            for _ in range(4)
        ]
        ids = [2, 0, 3, 1]
        by_id = [p for _, p in sorted(zip(ids, parities), key=lambda t: t[0])]
        again = [p for _, p in sorted(zip(ids, parities), key=lambda t: t[0])]
        assert np.array_equal(
            aggregate_global(by_id).features, aggregate_global(again).features
        )

    def test_shape_mismatch(self):
        a = ParityDataset(features=np.zeros((3, 4)), labels=np.zeros((3, 2)))
        b = ParityDataset(features=np.zeros((3, 5)), labels=np.zeros((3, 2)))
        with pytest.raises(ValueError):
            aggregate_global([a, b])


class TestParityFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(17)
        parity = ParityDataset(
            features=rng.standard_normal((5, 7)).astype(np.float32).astype(np.float64),
            labels=rng.standard_normal((5, 3)).astype(np.float32).astype(np.float64),
        )
        path = tmp_path / "parity.bin"
        write_parity_file(path, parity)
        back = read_parity_file(path)
        assert np.array_equal(back.features, parity.features)
        assert np.array_equal(back.labels, parity.labels)

    def test_header_layout(self, tmp_path):
        parity = ParityDataset(features=np.ones((2, 3)), labels=np.zeros((2, 1)))
        path = tmp_path / "parity.bin"
        write_parity_file(path, parity)
        raw = path.read_bytes()
        assert len(raw) == 24 + 4 * 2 * (3 + 1)
        assert int.from_bytes(raw[0:8], "little") == 2
        assert int.from_bytes(raw[8:16], "little") == 3
        assert int.from_bytes(raw[16:24], "little") == 1

    def test_truncated_file_rejected(self, tmp_path):
        parity = ParityDataset(features=np.ones((2, 3)), labels=np.zeros((2, 1)))
        path = tmp_path / "parity.bin"
        write_parity_file(path, parity)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError):
            read_dataset_file(path)
