"""Loss-function oracles and gradient checks."""

import numpy as np
import pytest

from spkfilter.errors import ConfigError, UsageError
from spkfilter.losses import (
    LossConfig,
    asym_l2,
    attention_loss,
    attention_loss_mean,
    noise_loss,
    total_loss,
)
from spkfilter.nn_core import Tensor, grad_check
from spkfilter.nn_core import tape as T


class TestAsymL2:
    def test_perfect_prediction_is_zero(self):
        x = np.random.default_rng(0).normal(size=(4, 3))
        assert float(asym_l2(x, x, 10.0).data) == 0.0

    def test_over_suppression_scaled(self):
        # target 1, predicted 0: removed target energy costs (10 * 1)^2
        out = asym_l2(np.array([0.0]), np.array([1.0]), 10.0)
        np.testing.assert_allclose(float(out.data), 100.0, atol=1e-12)

    def test_under_suppression_unscaled(self):
        out = asym_l2(np.array([1.0]), np.array([0.0]), 10.0)
        np.testing.assert_allclose(float(out.data), 1.0, atol=1e-12)

    def test_depends_only_on_residual(self):
        rng = np.random.default_rng(1)
        pred = rng.normal(size=6)
        target = rng.normal(size=6)
        shift = 3.7
        a = float(asym_l2(pred, target, 10.0).data)
        b = float(asym_l2(pred + shift, target + shift, 10.0).data)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            asym_l2(np.zeros(3), np.zeros(4), 10.0)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            v = float(asym_l2(rng.normal(size=5), rng.normal(size=5), 10.0).data)
            assert v >= 0.0


class TestNoiseLoss:
    def test_perfect_prediction_near_zero(self):
        labels = np.array([True, False, True])
        probs = labels.astype(float)
        assert float(noise_loss(probs, labels).data) < 1e-6

    def test_uninformative_is_ln2(self):
        probs = np.full(5, 0.5)
        labels = np.array([True, False, True, False, True])
        np.testing.assert_allclose(float(noise_loss(probs, labels).data),
                                   np.log(2.0), atol=1e-12)

    def test_scalar_oracle(self):
        out = noise_loss(np.array([0.9]), np.array([True]))
        np.testing.assert_allclose(float(out.data), -np.log(0.9), atol=1e-12)
        np.testing.assert_allclose(float(out.data), 0.1054, atol=1e-4)

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            noise_loss(np.zeros(3), np.zeros(4, dtype=bool))


class TestAttentionLoss:
    def test_exact_match_is_zero(self):
        w = np.array([0.0, 1.0, 0.0, 0.0])
        assert float(attention_loss(w, w, 0.0).data) == 0.0

    def test_uniform_is_ln_n(self):
        for n in (2, 3, 4, 8):
            alphas = np.full((5, n), 1.0 / n)
            w = np.zeros(n)
            w[0] = 1.0
            per_frame = float(attention_loss_mean(alphas, w, 0.0).data)
            np.testing.assert_allclose(per_frame, np.log(n), atol=1e-12)

    def test_scalar_oracle_with_regularizer(self):
        out = attention_loss(np.array([0.5, 0.5]), np.array([1.0, 0.0]), 0.1)
        np.testing.assert_allclose(float(out.data), -np.log(0.5) + 0.05,
                                   atol=1e-12)
        np.testing.assert_allclose(float(out.data), 0.7431, atol=1e-4)

    def test_sum_over_frames(self):
        alphas = np.full((3, 2), 0.5)
        w = np.array([1.0, 0.0])
        total = float(attention_loss(alphas, w, 0.0).data)
        np.testing.assert_allclose(total, 3 * np.log(2.0), atol=1e-12)

    def test_strictly_decreases_as_target_weight_grows(self):
        w = np.array([1.0, 0.0, 0.0])
        prev = np.inf
        for a in (0.4, 0.6, 0.8, 0.95):
            rest = (1 - a) / 2
            val = float(attention_loss(np.array([a, rest, rest]), w, 0.0).data)
            assert val < prev
            prev = val

    def test_non_one_hot_rejected(self):
        with pytest.raises(UsageError):
            attention_loss(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 0.0)
        with pytest.raises(UsageError):
            attention_loss(np.array([0.5, 0.5]), np.array([1.0, 1.0]), 0.0)


class TestTotalLoss:
    def test_single_weight(self):
        cfg = LossConfig(w_asym=1.0, w_noise=0.0, w_att=0.0)
        out = total_loss(cfg, (2.5, 100.0, 100.0))
        np.testing.assert_allclose(float(out.data), 2.5, atol=1e-15)

    def test_zero_parts(self):
        cfg = LossConfig()
        assert float(total_loss(cfg, (0.0, 0.0, 0.0)).data) == 0.0

    def test_arithmetic(self):
        cfg = LossConfig(w_asym=1.0, w_noise=1.0, w_att=0.1)
        out = total_loss(cfg, (2.0, 1.0, 0.5))
        np.testing.assert_allclose(float(out.data), 3.05, atol=1e-12)

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ConfigError):
            LossConfig(w_asym=0.0, w_noise=0.0, w_att=0.0)

    def test_alpha_asym_must_exceed_one(self):
        with pytest.raises(ConfigError):
            LossConfig(alpha_asym=1.0)


class TestLossGradients:
    def test_asym_gradient(self):
        rng = np.random.default_rng(3)
        pred = Tensor(rng.normal(size=8), requires_grad=True)
        target = rng.normal(size=8)
        assert grad_check(lambda: asym_l2(pred, target, 10.0), [pred]) < 1e-4

    def test_noise_gradient(self):
        rng = np.random.default_rng(4)
        raw = Tensor(rng.normal(size=6), requires_grad=True)
        labels = rng.integers(0, 2, size=6).astype(bool)

        def loss():
            return noise_loss(T.sigmoid(raw), labels)

        assert grad_check(loss, [raw]) < 1e-4

    def test_attention_gradient(self):
        rng = np.random.default_rng(5)
        scores = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        w = np.array([0.0, 1.0, 0.0])

        def loss():
            return attention_loss(T.softmax(scores), w, 0.1)

        assert grad_check(loss, [scores]) < 1e-4

    def test_total_gradient(self):
        rng = np.random.default_rng(6)
        pred = Tensor(rng.normal(size=6), requires_grad=True)
        raw = Tensor(rng.normal(size=5), requires_grad=True)
        scores = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
        target = rng.normal(size=6)
        labels = rng.integers(0, 2, size=5).astype(bool)
        w = np.array([1.0, 0.0])
        cfg = LossConfig()

        def loss():
            parts = (asym_l2(pred, target, cfg.alpha_asym),
                     noise_loss(T.sigmoid(raw), labels),
                     attention_loss_mean(T.softmax(scores), w, cfg.lambda_inf))
            return total_loss(cfg, parts)

        assert grad_check(loss, [pred, raw, scores]) < 1e-4
