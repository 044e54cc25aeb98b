import math

import numpy as np
import pytest

from codedfl import feature_vulnerability, privacy_budget


def brute_force_f(X):
    best = math.inf
    for col in range(X.shape[1]):
        total = 0.0
        largest = -math.inf
        for row in range(X.shape[0]):
            v = abs(X[row, col]) ** 2
            total += v
            largest = max(largest, v)
        best = min(best, math.sqrt(total - largest))
    return best


class TestFeatureVulnerability:
    def test_two_point_column(self):
        assert feature_vulnerability(np.array([[3.0], [4.0]])) == pytest.approx(3.0)

    def test_zero_column_is_fully_vulnerable(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        assert feature_vulnerability(X) == 0.0

    def test_minimum_over_columns(self):
        # col 0 residual is 3, col 1 residual is 1; the min wins
        X = np.array([[3.0, 1.0], [4.0, 10.0]])
        assert feature_vulnerability(X) == pytest.approx(1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            X = rng.standard_normal((6, 4))
            assert feature_vulnerability(X) == pytest.approx(
                brute_force_f(X), abs=1e-12
            )

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            feature_vulnerability(np.ones((1, 3)))


class TestPrivacyBudget:
    def test_half_bit_point(self):
        # u = f^2 makes the log argument exactly 2
        X = np.array([[3.0], [4.0]])
        report = privacy_budget(X, u=9)
        assert report.epsilon == pytest.approx(0.5, abs=1e-12)
        assert report.f_value == pytest.approx(3.0)
        assert report.warning is None

    def test_monotone_in_u(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((8, 5))
        eps = [privacy_budget(X, u).epsilon for u in (10, 100, 1000)]
        assert eps[0] < eps[1] < eps[2]

    def test_scale_law(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((6, 4))
        s = 2.5
        f = feature_vulnerability(X)
        assert feature_vulnerability(s * X) == pytest.approx(s * f, rel=1e-12)
        scaled = privacy_budget(s * X, u=50)
        assert scaled.epsilon == pytest.approx(
            0.5 * math.log2(1 + 50 / (s * f) ** 2), rel=1e-12
        )

    def test_zero_f_reports_unbounded(self):
        X = np.array([[0.0, 1.0], [0.0, 2.0]])
        report = privacy_budget(X, u=10)
        assert math.isinf(report.epsilon)

    def test_rademacher_encoding_warns(self):
        X = np.array([[3.0], [4.0]])
        report = privacy_budget(X, u=9, encoding="rademacher")
        assert report.warning is not None
        assert "gaussian" in report.warning

    def test_large_shard_budget_is_finite(self):
        rng = np.random.default_rng(3)
        features = np.sqrt(2 / 200) * np.cos(rng.standard_normal((60, 200)))
        report = privacy_budget(features, u=1200)
        assert math.isfinite(report.epsilon)
        assert report.epsilon > 0

    def test_u_validation(self):
        with pytest.raises(ValueError):
            privacy_budget(np.ones((3, 2)), u=0)
