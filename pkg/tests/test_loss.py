"""Area-linkage loss semantics and gradient structure."""

import numpy as np
import pytest

import wdsm.tensor as T
from wdsm.errors import DomainError
from wdsm.loss import LossConfig, LossReport, batch_loss, percent_density, weak_density_loss
from wdsm.models import MaskPair
from wdsm.tensor import Tape, Tensor


def _pair(m_dense: np.ndarray) -> MaskPair:
    m = Tensor(np.asarray(m_dense, dtype=np.float64), requires_grad=True)
    return MaskPair(m_dense=m, m_fat=Tensor(1.0 - np.asarray(m_dense, dtype=np.float64)))


class TestPercentDensity:
    def test_all_dense(self):
        mask = np.ones((10, 10), dtype=np.uint8)
        assert percent_density(Tensor(mask.astype(np.float64)), mask).item() == 1.0

    def test_all_zero(self):
        mask = np.ones((10, 10), dtype=np.uint8)
        assert percent_density(Tensor(np.zeros((10, 10))), mask).item() == 0.0

    def test_quarter(self):
        mask = np.ones((10, 10), dtype=np.uint8)
        m = np.zeros((10, 10))
        m[:5, :5] = 1.0  # 25 of 100 pixels
        assert percent_density(Tensor(m), mask).item() == 0.25

    def test_empty_breast_rejected(self):
        with pytest.raises(DomainError):
            percent_density(Tensor(np.zeros((4, 4))), np.zeros((4, 4), dtype=np.uint8))

    def test_gradient_is_mask_over_area(self):
        # exact: uniform 1/|S| inside the breast, 0 outside
        rng = np.random.default_rng(0)
        mask = (rng.uniform(size=(8, 8)) > 0.4).astype(np.uint8)
        m = Tensor(rng.uniform(size=(8, 8)) * mask, requires_grad=True, dtype=np.float64)
        with Tape() as tape:
            tape.backward(percent_density(m, mask))
        np.testing.assert_array_equal(m.grad, mask.astype(np.float64) / mask.sum())


class TestWeakDensityLoss:
    def test_zero_at_binary_mask_matching_target(self):
        mask = np.ones((6, 6), dtype=np.uint8)
        m = np.zeros((6, 6))
        m[:3, :] = 1.0  # pd exactly 0.5
        total, rep = weak_density_loss(_pair(m), mask, 0.5, LossConfig(lambda_bin=0.1))
        assert total.item() == 0.0
        assert rep == LossReport(total=0.0, density_term=0.0, bin_term=0.0, pd_hat=0.5)

    def test_uniform_half_mask(self):
        # density term 0, bin term 0.5*0.5 = 0.25
        mask = np.ones((4, 4), dtype=np.uint8)
        total, rep = weak_density_loss(
            _pair(np.full((4, 4), 0.5)), mask, 0.5, LossConfig(lambda_bin=1.0)
        )
        assert rep.density_term == pytest.approx(0.0, abs=1e-12)
        assert rep.bin_term == pytest.approx(0.25)
        assert total.item() == pytest.approx(0.25)

    def test_l2_zero_mask(self):
        mask = np.ones((5, 5), dtype=np.uint8)
        total, rep = weak_density_loss(
            _pair(np.zeros((5, 5))), mask, 0.3, LossConfig(lambda_bin=0.0)
        )
        assert total.item() == pytest.approx(0.09)

    def test_l1_variant(self):
        mask = np.ones((5, 5), dtype=np.uint8)
        _, rep = weak_density_loss(
            _pair(np.zeros((5, 5))), mask, 0.3, LossConfig(density_term="l1", lambda_bin=0.0)
        )
        assert rep.density_term == pytest.approx(0.3)

    def test_report_identity(self):
        rng = np.random.default_rng(1)
        mask = np.ones((6, 6), dtype=np.uint8)
        cfg = LossConfig(lambda_bin=0.37)
        total, rep = weak_density_loss(_pair(rng.uniform(size=(6, 6))), mask, 0.4, cfg)
        assert rep.total == pytest.approx(rep.density_term + cfg.lambda_bin * rep.bin_term, abs=1e-6)
        assert rep.density_term >= 0 and rep.bin_term >= 0

    def test_uniform_gradient_without_regularizer(self):
        # with lambda=0 and l2 every in-breast pixel sees 2(pd_hat - t)/|S|
        rng = np.random.default_rng(2)
        mask = (rng.uniform(size=(8, 8)) > 0.3).astype(np.uint8)
        m_data = rng.uniform(size=(8, 8)) * mask
        pair = _pair(m_data)
        with Tape() as tape:
            total, rep = weak_density_loss(pair, mask, 0.25, LossConfig(lambda_bin=0.0))
            tape.backward(total)
        expected = 2.0 * (rep.pd_hat - 0.25) / mask.sum() * mask
        np.testing.assert_allclose(pair.m_dense.grad, expected, rtol=1e-12, atol=1e-15)

    def test_scale_consistency_under_upsampling(self):
        # duplicating every pixel leaves pd_hat unchanged
        rng = np.random.default_rng(3)
        mask = (rng.uniform(size=(6, 6)) > 0.4).astype(np.uint8)
        m = rng.uniform(size=(6, 6)) * mask
        pd_small = percent_density(Tensor(m, dtype=np.float64), mask).item()
        m_up = T.upsample2(Tensor(m[None], dtype=np.float64)).data[0]
        mask_up = np.kron(mask, np.ones((2, 2), dtype=np.uint8))
        pd_big = percent_density(Tensor(m_up, dtype=np.float64), mask_up).item()
        assert pd_small == pytest.approx(pd_big, abs=1e-15)

    def test_invalid_target_rejected(self):
        with pytest.raises(DomainError):
            weak_density_loss(_pair(np.zeros((3, 3))), np.ones((3, 3), np.uint8), 1.5, LossConfig())


class TestBatchLoss:
    @staticmethod
    def _fwd(item):
        m, target = item
        return _pair(m), np.ones(m.shape, dtype=np.uint8), target

    def test_identical_samples_mean_equals_single(self):
        m = np.full((4, 4), 0.5)
        single, _ = weak_density_loss(
            self._fwd((m, 0.2))[0], np.ones((4, 4), np.uint8), 0.2, LossConfig()
        )
        mean, rep, reports = batch_loss([(m, 0.2)] * 3, self._fwd, LossConfig())
        assert mean.item() == pytest.approx(single.item())
        assert len(reports) == 3

    def test_two_sample_mean(self):
        # totals (0.1, 0.3) -> 0.2: zero masks, l1 distance to targets
        cfg = LossConfig(density_term="l1", lambda_bin=0.0)
        z = np.zeros((4, 4))
        mean, rep, _ = batch_loss([(z, 0.1), (z, 0.3)], self._fwd, cfg)
        assert mean.item() == pytest.approx(0.2)
        assert rep.total == pytest.approx(0.2)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        items = [(rng.uniform(size=(4, 4)), t) for t in (0.1, 0.5, 0.9)]
        a, _, _ = batch_loss(items, self._fwd, LossConfig())
        b, _, _ = batch_loss(items[::-1], self._fwd, LossConfig())
        assert a.item() == pytest.approx(b.item(), rel=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(DomainError):
            batch_loss([], self._fwd, LossConfig())


def test_loss_config_validation():
    with pytest.raises(DomainError):
        LossConfig(density_term="huber")
    with pytest.raises(DomainError):
        LossConfig(lambda_bin=-0.1)
