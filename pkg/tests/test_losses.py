import math

import numpy as np
import pytest

from grasptrack import autodiff as ad
from grasptrack.autodiff import Tensor
from grasptrack.config import LossConfig
from grasptrack.losses import angle_mse, balance_alpha, balanced_bce, clip_loss, frame_loss

from oracles import bce_reference, mse_reference
from test_autodiff import finite_diff


class TestLossConstants:
    def test_paper_defaults(self):
        cfg = LossConfig()
        assert (cfg.w_pos, cfg.w_cos, cfg.w_sin, cfg.w_wid, cfg.w_sem) == (5.0, 5.0, 5.0, 1.0, 1.0)
        assert (cfg.beta_pos, cfg.beta_wid, cfg.beta_sem) == (20.0, 10.0, 5.0)


class TestBalanceAlpha:
    def test_ratio_63_clamps_to_20(self):
        target = np.zeros((64, 64))
        target.ravel()[:64] = 1.0  # 64 positives -> raw ratio 4032/64 = 63
        assert float(balance_alpha(target, 20.0).item()) == 20.0
        assert float(balance_alpha(target, 100.0).item()) == 63.0

    def test_below_clamp_uses_raw_ratio(self):
        target = np.zeros((4, 4))
        target[0, :2] = 1.0  # 2 pos, 14 neg -> 7
        assert float(balance_alpha(target, 20.0).item()) == 7.0

    def test_zero_positives_uses_beta(self):
        assert float(balance_alpha(np.zeros((8, 8)), 10.0).item()) == 10.0

    def test_batched_per_sample(self):
        t = np.zeros((2, 4, 4))
        t[0, 0, 0] = 1.0
        a = balance_alpha(t, 20.0)
        assert a.shape == (2, 1, 1)
        assert a[0, 0, 0] == 15.0 and a[1, 0, 0] == 20.0


class TestBalancedBce:
    def test_saturated_correct_is_zero(self):
        target = np.zeros((8, 8))
        target[2:4, 2:4] = 1.0
        logits = np.where(target > 0, 60.0, -60.0)
        assert balanced_bce(Tensor(logits), target, 20.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_zero_logits_all_zero_target(self):
        loss = balanced_bce(Tensor(np.zeros((16, 16))), np.zeros((16, 16)), 20.0)
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-9)

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((6, 7)) * 3
        target = (rng.random((6, 7)) > 0.7).astype(float)
        alpha = float(balance_alpha(target, 20.0).item())
        ours = balanced_bce(Tensor(logits), target, 20.0).item()
        assert ours == pytest.approx(bce_reference(logits, target, alpha), rel=1e-9)

    def test_nonnegative_property(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            logits = rng.standard_normal((5, 5)) * rng.uniform(0.1, 30)
            target = (rng.random((5, 5)) > rng.random()).astype(float)
            assert balanced_bce(Tensor(logits), target, 20.0).item() >= 0.0

    def test_alpha_one_equals_plain_bce(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((4, 4))
        target = (rng.random((4, 4)) > 0.5).astype(float)
        with_alpha_one = ad.weighted_bce_with_logits(Tensor(logits), target, 1.0).item()
        assert with_alpha_one == pytest.approx(bce_reference(logits, target, 1.0), rel=1e-9)

    def test_monotone_in_positive_logits(self):
        # raising a logit where T=1 can only lower the loss
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((6, 6))
        target = (rng.random((6, 6)) > 0.5).astype(float)
        t = Tensor(logits, requires_grad=True)
        balanced_bce(t, target, 20.0).backward()
        assert np.all(t.grad[target > 0] <= 0)

    def test_shape_mismatch(self):
        with pytest.raises(ad.ShapeMismatch):
            balanced_bce(Tensor(np.zeros((4, 4))), np.zeros((5, 5)), 20.0)


class TestAngleMse:
    def test_identical_is_zero(self):
        x = np.random.default_rng(0).uniform(-1, 1, (8, 8))
        assert angle_mse(Tensor(x), x).item() == 0.0

    def test_opposite_extremes(self):
        assert angle_mse(Tensor(np.ones((4, 4))), -np.ones((4, 4))).item() == pytest.approx(4.0)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(-1, 1, (9, 5))
        target = rng.uniform(-1, 1, (9, 5))
        assert angle_mse(Tensor(pred), target).item() == pytest.approx(
            mse_reference(pred, target), abs=1e-6
        )


class TestClipLoss:
    def rand_pair(self, rng, frames, h=8, w=8):
        preds, targets = [], []
        for _ in range(frames):
            t = np.zeros((h, w, 5))
            t[..., 0] = rng.random((h, w)) > 0.8
            t[..., 4] = np.maximum(t[..., 0], rng.random((h, w)) > 0.6)
            t[..., 1] = np.where(t[..., 0] > 0, rng.uniform(-1, 1), 0)
            t[..., 2] = np.where(t[..., 0] > 0, rng.uniform(-1, 1), 0)
            t[..., 3] = np.where(t[..., 0] > 0, rng.uniform(0.2, 0.9), 0)
            p = rng.standard_normal((h, w, 5))
            p[..., 1:3] = np.tanh(p[..., 1:3])
            preds.append(Tensor(p, requires_grad=True))
            targets.append(t)
        return preds, targets

    def test_perfect_saturated_prediction_is_zero(self):
        # all-binary targets (width channel at exactly 1.0 inside the strip):
        # a soft width target would keep its BCE entropy floor instead
        rng = np.random.default_rng(5)
        _, targets = self.rand_pair(rng, 2)
        preds = []
        for t in targets:
            t[..., 3] = (t[..., 0] > 0).astype(float)
            p = np.zeros_like(t)
            for ch in (0, 3, 4):
                p[..., ch] = np.where(t[..., ch] > 0, 60, -60)
            p[..., 1] = t[..., 1]
            p[..., 2] = t[..., 2]
            preds.append(Tensor(p))
        report = clip_loss(preds, targets)
        assert report.total == pytest.approx(0.0, abs=1e-6)

    def test_soft_width_target_keeps_entropy_floor(self):
        # with a soft width target the optimum is the target itself and the
        # loss floor is its (alpha-weighted) entropy, not zero
        t = np.zeros((6, 6, 5))
        t[..., 3] = 0.5
        t[2:4, 2:4, 0] = 1.0
        p = np.zeros_like(t)
        p[..., 0] = np.where(t[..., 0] > 0, 60, -60)
        p[..., 4] = -60.0
        report = clip_loss([Tensor(p)], [t])
        # all pixels positive -> alpha = 0, so only (1-T)log(1-sigma) remains
        assert report.wid == pytest.approx(0.5 * math.log(2.0), rel=1e-6)

    def test_single_frame_equals_weighted_sum(self):
        rng = np.random.default_rng(6)
        preds, targets = self.rand_pair(rng, 1)
        cfg = LossConfig()
        report = clip_loss(preds, targets, cfg)
        parts = frame_loss(preds[0], targets[0], cfg)
        expected = sum(float(v.data) for v in parts.values())
        assert report.total == pytest.approx(expected, rel=1e-9)
        assert report.per_frame[0]["total"] == pytest.approx(expected, rel=1e-9)

    def test_two_frames_average(self):
        rng = np.random.default_rng(7)
        preds, targets = self.rand_pair(rng, 2)
        report = clip_loss(preds, targets)
        avg = (report.per_frame[0]["total"] + report.per_frame[1]["total"]) / 2
        assert report.total == pytest.approx(avg, rel=1e-9)

    def test_report_totals_consistent(self):
        rng = np.random.default_rng(8)
        preds, targets = self.rand_pair(rng, 3)
        r = clip_loss(preds, targets)
        assert r.total == pytest.approx(r.pos + r.ang + r.wid + r.semantic, rel=1e-9)
        assert len(r.per_frame) == 3

    def test_length_mismatch(self):
        rng = np.random.default_rng(9)
        preds, targets = self.rand_pair(rng, 2)
        with pytest.raises(ValueError, match="2 predictions vs 1"):
            clip_loss(preds, targets[:1])

    def test_channel_routing(self):
        # BCE channels must ignore angle channels and vice versa: perturbing
        # the cos channel changes only `ang`; perturbing pos changes only `pos`.
        rng = np.random.default_rng(10)
        preds, targets = self.rand_pair(rng, 1)
        base = clip_loss(preds, targets)
        bumped = preds[0].data.copy()
        bumped[..., 1] += 0.1
        r2 = clip_loss([Tensor(bumped)], targets)
        assert r2.ang != pytest.approx(base.ang) and r2.pos == pytest.approx(base.pos)
        bumped2 = preds[0].data.copy()
        bumped2[..., 0] += 0.5
        r3 = clip_loss([Tensor(bumped2)], targets)
        assert r3.pos != pytest.approx(base.pos) and r3.ang == pytest.approx(base.ang)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        preds, targets = self.rand_pair(rng, 2, h=6, w=6)
        report = clip_loss(preds, targets)
        report.total_node.backward()

        for idx in range(2):
            def scalar(arr):
                ps = [Tensor(arr) if i == idx else Tensor(preds[i].data) for i in range(2)]
                with ad.no_grad():
                    return clip_loss(ps, targets).total

            fd = finite_diff(lambda a: scalar(a), [preds[idx].data.copy()], 0)
            an = preds[idx].grad
            denom = np.maximum(np.maximum(np.abs(fd), np.abs(an)), 1e-6)
            assert (np.abs(fd - an) / denom).max() < 1e-4

    def test_batched_matches_loop(self):
        # a batch axis must average the per-sample losses
        rng = np.random.default_rng(12)
        p1, t1 = self.rand_pair(rng, 1)
        p2, t2 = self.rand_pair(rng, 1)
        stacked_p = Tensor(np.stack([p1[0].data, p2[0].data]))
        stacked_t = np.stack([t1[0], t2[0]])
        batched = clip_loss([stacked_p], [stacked_t])
        solo = 0.5 * (clip_loss(p1, t1).total + clip_loss(p2, t2).total)
        assert batched.total == pytest.approx(solo, rel=1e-9)
