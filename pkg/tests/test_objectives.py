"""
Test suite for the L1, L2, L3 losses and their weighted average
"""
import math

import pytest
import torch

from src.models.schemas import LossWeights, TrainConfig
from src.objectives.losses import PROB_FLOOR, loss_l1, loss_l2, loss_l3, total_loss


def test_l2_hand_case():
    """Ten SW slots, one ground-truth one, nothing predicted: 0.1 + 20 * 0.1"""
    y_gt = torch.zeros(10)
    y_gt[3] = 1.0
    loss = loss_l2(torch.zeros(10), y_gt, sc=20)
    assert float(loss) == pytest.approx(2.1, abs=1e-6), f"Expected 2.1, got {float(loss)}"


def test_l2_perfect_prediction_is_zero():
    y_gt = torch.tensor([0., 1., 0., 1.])
    assert float(loss_l2(y_gt.clone(), y_gt)) == 0.0


def test_l2_rewards_ones_more_than_zeros():
    """Missing a ground-truth one costs more than a false positive"""
    y_gt = torch.tensor([1., 0.])
    missed = loss_l2(torch.tensor([0., 0.]), y_gt)
    false_positive = loss_l2(torch.tensor([1., 1.]), y_gt)
    assert float(missed) > float(false_positive)


def test_l2_validation():
    with pytest.raises(ValueError):
        loss_l2(torch.zeros(3), torch.zeros(4))
    with pytest.raises(ValueError):
        loss_l2(torch.tensor([1.5]), torch.tensor([1.0]))
    with pytest.raises(ValueError):
        loss_l2(torch.tensor([0.5]), torch.tensor([0.5]))
    with pytest.raises(ValueError):
        loss_l2(torch.zeros(2), torch.zeros(2), sc=0)


def test_l1_uniform_logits_is_log_vocab():
    vocab_size = 37
    loss = loss_l1(torch.zeros(2, 5, vocab_size), torch.randint(0, vocab_size, (2, 5)))
    assert float(loss) == pytest.approx(math.log(vocab_size), abs=1e-6)


def test_l1_ignores_pad_targets():
    logits = torch.zeros(1, 3, 4)
    logits[0, 2] = torch.tensor([0., 0., 0., 50.])
    targets = torch.tensor([[1, 2, 0]])
    assert float(loss_l1(logits, targets, pad_id=0)) == pytest.approx(math.log(4), abs=1e-6)


def test_l1_all_masked_raises():
    with pytest.raises(ValueError):
        loss_l1(torch.zeros(1, 2, 4), torch.zeros(1, 2, dtype=torch.long), pad_id=0)


def test_probability_floor():
    """A confidently wrong prediction costs at most -ln(1e-7)"""
    logits = torch.tensor([[[0., 1000.]]])
    loss = loss_l1(logits, torch.tensor([[0]]))
    assert float(loss) == pytest.approx(-math.log(PROB_FLOOR), rel=1e-5)


def test_l3_only_counts_significant_positions():
    torch.manual_seed(0)
    logits = torch.randn(2, 4, 6)
    targets = torch.randint(0, 6, (2, 4))
    mask = torch.tensor([[0., 1., 0., 0.], [0., 0., 1., 1.]])
    expected = loss_l1(logits, targets, mask=mask)
    assert float(loss_l3(logits, targets, mask)) == pytest.approx(float(expected), abs=1e-6)


def test_l3_without_significant_words_is_zero_and_differentiable():
    logits = torch.randn(1, 3, 5, requires_grad=True)
    loss = loss_l3(logits, torch.zeros(1, 3, dtype=torch.long), torch.zeros(1, 3))
    assert float(loss) == 0.0
    loss.backward()
    assert logits.grad is not None and float(logits.grad.abs().sum()) == 0.0


def test_total_loss_invariant_under_weight_rescaling():
    l1, l2, l3 = torch.tensor(1.0), torch.tensor(2.0), torch.tensor(4.0)
    base = total_loss(l1, l2, l3, LossWeights(w1=1, w2=2, w3=3))
    scaled = total_loss(l1, l2, l3, LossWeights(w1=10, w2=20, w3=30))
    assert float(base) == pytest.approx(float(scaled))
    assert float(base) == pytest.approx((1 + 4 + 12) / 6)


def test_ablation_flags_zero_weights():
    weights = TrainConfig(use_l2=False, use_l3=False).effective_weights()
    assert (weights.w2, weights.w3) == (0.0, 0.0)
    l1 = torch.tensor(3.0)
    assert float(total_loss(l1, torch.tensor(9.0), torch.tensor(9.0), weights)) == pytest.approx(3.0)


def test_all_zero_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(w1=0, w2=0, w3=0)
    with pytest.raises(ValueError):
        TrainConfig(loss_weights=LossWeights(w1=0, w2=1, w3=0), use_l2=False)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
