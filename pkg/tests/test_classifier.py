import math

import numpy as np
import pytest

from innovnet.classifier import (ClassifierHead, MomentOptimizer, TrainConfig,
                                 TrainingDivergedError, clip_gradients,
                                 evaluate_head, schedule_lr, train_head)


class TestSchedule:
    def test_endpoints_and_peak(self):
        T = 100
        warmup = math.ceil(0.1 * T)
        assert schedule_lr(0, T, 2e-5) == 0.0
        assert schedule_lr(warmup, T, 2e-5) == 2e-5
        assert schedule_lr(T, T, 2e-5) == 0.0

    def test_piecewise_linear(self):
        T, peak = 200, 1.0
        warmup = math.ceil(0.1 * T)
        assert schedule_lr(warmup // 2, T, peak) == pytest.approx(0.5)
        mid = (warmup + T) // 2
        assert schedule_lr(mid, T, peak) == pytest.approx(
            peak * (T - mid) / (T - warmup))

    def test_never_negative(self):
        assert schedule_lr(150, 100, 1.0) == 0.0


class TestClipping:
    def test_norm_five_scales_by_point_two(self):
        grads = {"w": np.array([3.0, 4.0])}
        clipped, norm = clip_gradients(grads, 1.0)
        assert norm == 5.0
        assert 1.0 / norm == 0.2                       # scale factor exact
        assert np.array_equal(clipped["w"], grads["w"] * 0.2)

    def test_norm_below_clip_untouched(self):
        grads = {"w": np.array([0.3, 0.4])}
        clipped, norm = clip_gradients(grads, 1.0)
        assert norm == 0.5
        assert clipped["w"] is grads["w"]

    def test_global_norm_spans_parameters(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        _, norm = clip_gradients(grads, 1.0)
        assert norm == 5.0


def finite_difference_grads(head, x, y, eps=1e-5):
    grads = {}
    for name, param in head.params.items():
        g = np.zeros_like(param)
        flat = param.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = head.loss_and_grads(x, y)
            flat[i] = orig - eps
            lm, _ = head.loss_and_grads(x, y)
            flat[i] = orig
            g.ravel()[i] = (lp - lm) / (2 * eps)
        grads[name] = g
    return grads


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for point in range(3):
            head = ClassifierHead(8, (5, 3), dropout=0.0,
                                  rng=np.random.default_rng(100 + point))
            for param in head.params.values():
                param += rng.normal(0.0, 0.3, size=param.shape)
            x = rng.normal(size=(5, 8))
            y = rng.integers(0, 2, size=5)
            _, analytic = head.loss_and_grads(x, y)
            numeric = finite_difference_grads(head, x, y)
            for name in analytic:
                denom = np.maximum(np.abs(numeric[name]), 1e-8)
                rel = np.abs(analytic[name] - numeric[name]) / np.maximum(denom, 1.0)
                assert rel.max() < 1e-4, f"{name}: {rel.max()}"

    def test_loss_is_cross_entropy(self):
        head = ClassifierHead(4, (3, 2), dropout=0.0, rng=np.random.default_rng(1))
        x = np.random.default_rng(2).normal(size=(6, 4))
        y = np.array([0, 1, 0, 1, 1, 0])
        loss, _ = head.loss_and_grads(x, y)
        logits = head.logits(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        expected = -np.mean(np.log(probs[np.arange(6), y]))
        assert loss == pytest.approx(expected, abs=1e-12)


class TestOptimizer:
    def test_zero_grad_zero_decay_is_identity(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        opt = MomentOptimizer(params, weight_decay=0.0)
        before = params["w"].copy()
        for _ in range(5):
            opt.step({"w": np.zeros(3)}, lr=0.1)
        assert np.array_equal(params["w"], before)

    def test_zero_grad_decay_contracts(self):
        params = {"w": np.array([2.0, -4.0])}
        opt = MomentOptimizer(params, weight_decay=0.01)
        expected = params["w"].copy()
        for _ in range(3):
            opt.step({"w": np.zeros(2)}, lr=0.5)
            expected *= (1 - 0.5 * 0.01)
        assert np.allclose(params["w"], expected, rtol=0, atol=1e-15)

    def test_first_step_moves_by_lr_signwise(self):
        # bias-corrected first step is lr * g / (|g| + eps), close to lr * sign(g)
        params = {"w": np.array([0.0, 0.0])}
        opt = MomentOptimizer(params, weight_decay=0.0, eps=1e-8)
        opt.step({"w": np.array([0.5, -3.0])}, lr=0.1)
        assert np.allclose(params["w"], [-0.1, 0.1], rtol=1e-6)


class TestTrainHead:
    def separable_features(self, n, d, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=n)
        feats = np.zeros((n, 4 * d))
        for i in range(n):
            a = rng.normal(size=d)
            a /= np.linalg.norm(a)
            if labels[i] == 1:
                b = a + 0.05 * rng.normal(size=d)
            else:
                b = rng.normal(size=d)
            b /= np.linalg.norm(b)
            feats[i] = np.concatenate([a, b, a * b, np.abs(a - b)])
        return feats, labels

    def test_deterministic_given_seed(self):
        feats, labels = self.separable_features(200, 6, seed=0)
        cfg = TrainConfig(lr=1e-3, seed=42)
        head1, hist1 = train_head(feats, labels, cfg)
        head2, hist2 = train_head(feats, labels, cfg)
        for k in head1.params:
            assert np.array_equal(head1.params[k], head2.params[k])
        assert [(h.loss, h.lr) for h in hist1] == [(h.loss, h.lr) for h in hist2]

    def test_history_matches_schedule(self):
        feats, labels = self.separable_features(100, 4, seed=1)
        cfg = TrainConfig(batch_size=32, epochs=2, lr=1e-3, seed=0)
        _, history = train_head(feats, labels, cfg)
        total = 2 * math.ceil(100 / 32)
        assert len(history) == total
        for rec in history:
            assert rec.lr == schedule_lr(rec.step, total, 1e-3, 0.1)
            assert math.isfinite(rec.loss)

    def test_separable_accuracy(self):
        feats, labels = self.separable_features(3000, 8, seed=2)
        cfg = TrainConfig(lr=0.01, seed=3)
        head, _ = train_head(feats[:2000], labels[:2000], cfg)
        assert evaluate_head(head, feats[2000:], labels[2000:]) >= 0.9

    def test_divergence_raises_with_step(self):
        feats, labels = self.separable_features(64, 4, seed=4)
        feats[10] = np.nan
        with pytest.raises(TrainingDivergedError) as err:
            train_head(feats, labels, TrainConfig(lr=1e-3, seed=0))
        assert err.value.step >= 0

    def test_empty_training_set(self):
        with pytest.raises(ValueError):
            train_head(np.zeros((0, 8)), np.zeros(0, dtype=int), TrainConfig())


class TestEvaluateHead:
    def test_always_right_head(self):
        head = ClassifierHead(4, (3, 2), dropout=0.0, rng=np.random.default_rng(0))
        head.params["w1"][:] = 0; head.params["b1"][:] = 1.0
        head.params["w2"][:] = 0; head.params["b2"][:] = 1.0
        head.params["w3"][:] = 0
        head.params["b3"][:] = np.array([0.0, 5.0])   # always predicts class 1
        x = np.random.default_rng(1).normal(size=(50, 4))
        assert evaluate_head(head, x, np.ones(50, dtype=int)) == 1.0

    def test_random_head_near_half(self):
        head = ClassifierHead(8, (6, 3), dropout=0.0, rng=np.random.default_rng(5))
        rng = np.random.default_rng(6)
        x = rng.normal(size=(10000, 8))
        y = rng.integers(0, 2, size=10000)
        acc = evaluate_head(head, x, y)
        assert 0.45 <= acc <= 0.55

    def test_dropout_disabled_at_eval(self):
        head = ClassifierHead(6, (4, 2), dropout=0.5, rng=np.random.default_rng(7))
        x = np.random.default_rng(8).normal(size=(20, 6))
        assert np.array_equal(head.logits(x), head.logits(x))
