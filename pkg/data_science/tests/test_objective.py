"""
Tests for the masked reconstruction losses and cross entropy
"""
import math

import numpy as np
import pytest

from data_science.src.errors import UndefinedLossError
from data_science.src.masking.strategy_config import MaskSpec
from data_science.src.objective.losses import (LossBreakdown, combined_loss, combined_loss_and_grad,
                                               cross_entropy, cross_entropy_and_grad, masked_mse)

RAW = np.array([[1.0, 2.0], [3.0, 4.0]])
ALPHAS = np.linspace(0.0, 1.0, 11)


def _brute_force_mse(raw, rec, selected):
    total, count = 0.0, 0
    for index in np.ndindex(raw.shape):
        if selected(index):
            total += (raw[index] - rec[index]) ** 2
            count += 1
    return total / count


def test_masked_mse_hand_examples():
    """Time step 0 gives (1+4)/2; channel 1 gives (4+16)/2; a perfect reconstruction gives 0"""
    rec = np.zeros_like(RAW)
    spec_time, spec_channel = MaskSpec((0,), ()), MaskSpec((), (1,))
    assert masked_mse(RAW, rec, spec_time.time_cells(2, 2)) == 2.5
    assert masked_mse(RAW, rec, spec_channel.channel_cells(2, 2)) == 10.0
    assert masked_mse(RAW, RAW, spec_time.time_cells(2, 2)) == 0.0


def test_combined_loss_hand_examples():
    """alpha=0.5 combines 2.5 and 10 into 6.25; alpha=1 keeps the time term"""
    rec = np.zeros_like(RAW)
    spec = MaskSpec((0,), (1,))
    breakdown = combined_loss(RAW, rec, spec, alpha=0.5)
    assert breakdown.loss_time == 2.5
    assert breakdown.loss_channel == 10.0
    assert breakdown.combined == 6.25
    assert combined_loss(RAW, rec, spec, alpha=1.0).combined == 2.5


def test_doubly_masked_cells_count_in_both_terms():
    """The cell at (0, 1) is on a masked step and a masked channel and enters both means"""
    rec = RAW.copy()
    rec[0, 1] += 3.0
    breakdown = combined_loss(RAW, rec, MaskSpec((0,), (1,)), alpha=0.5)
    assert breakdown.loss_time == pytest.approx(9.0 / 2)
    assert breakdown.loss_channel == pytest.approx(9.0 / 2)
    assert breakdown.combined == pytest.approx(4.5)


def test_single_axis_masks_ignore_alpha(rng):
    """With T empty only the channel term counts, and with C empty only the time term"""
    raw, rec = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    for alpha in ALPHAS:
        channel_only = combined_loss(raw, rec, MaskSpec((), (0, 2)), alpha)
        assert channel_only.loss_time is None
        assert channel_only.combined == channel_only.loss_channel
        time_only = combined_loss(raw, rec, MaskSpec((1, 4), ()), alpha)
        assert time_only.loss_channel is None
        assert time_only.combined == time_only.loss_time


def test_empty_mask_is_undefined():
    """No masked cell means no loss"""
    with pytest.raises(UndefinedLossError):
        combined_loss(RAW, RAW, MaskSpec((), ()))
    with pytest.raises(UndefinedLossError):
        masked_mse(RAW, RAW, np.zeros_like(RAW, dtype=bool))


def test_losses_match_brute_force(rng):
    """Random batches up to 8 x 8 x 4 agree with explicit loops over the selected cells"""
    for _ in range(50):
        b, n, k = int(rng.integers(1, 9)), int(rng.integers(2, 9)), int(rng.integers(1, 5))
        raw, rec = rng.normal(size=(b, n, k)), rng.normal(size=(b, n, k))
        spec = MaskSpec(rng.choice(n, size=rng.integers(1, n + 1), replace=False),
                        rng.choice(k, size=rng.integers(1, k + 1), replace=False))
        expected_time = _brute_force_mse(raw, rec, lambda idx: idx[1] in spec.time_indices)
        expected_channel = _brute_force_mse(raw, rec, lambda idx: idx[2] in spec.channel_indices)
        for alpha in ALPHAS:
            breakdown = combined_loss(raw, rec, spec, alpha)
            assert abs(breakdown.loss_time - expected_time) < 1e-12
            assert abs(breakdown.loss_channel - expected_channel) < 1e-12
            expected = alpha * breakdown.loss_time + (1 - alpha) * breakdown.loss_channel
            assert breakdown.combined == expected


def test_combined_loss_per_window_specs(rng):
    """A list of specs masks every window independently"""
    raw, rec = rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 4, 2))
    specs = [MaskSpec((0,), ()), MaskSpec((3,), ())]
    breakdown = combined_loss(raw, rec, specs)
    expected = ((raw[0, 0] - rec[0, 0]) ** 2).sum() + ((raw[1, 3] - rec[1, 3]) ** 2).sum()
    assert breakdown.combined == pytest.approx(expected / 4)


@pytest.mark.parametrize("spec", [MaskSpec((1, 3), ()), MaskSpec((), (0,)), MaskSpec((2,), (1,))],
                         ids=["time", "channel", "time-channel"])
def test_gradient_is_local_to_masked_cells(rng, spec):
    """d(loss)/d(rec) is exactly zero on every unmasked cell"""
    raw, rec = rng.normal(size=(3, 5, 2)), rng.normal(size=(3, 5, 2))
    _, grad = combined_loss_and_grad(raw, rec, spec, alpha=0.3)
    unmasked = ~spec.cells(5, 2)
    assert np.all(grad[:, unmasked] == 0.0)
    assert np.all(grad[:, ~unmasked] != 0.0)


def test_reconstruction_gradient_finite_differences(rng):
    """The analytic gradient matches central differences"""
    raw, rec = rng.normal(size=(2, 4, 3)), rng.normal(size=(2, 4, 3))
    spec = MaskSpec((0, 2), (1,))
    _, grad = combined_loss_and_grad(raw, rec, spec, alpha=0.7)
    eps = 1e-6
    for index in np.ndindex(rec.shape):
        plus, minus = rec.copy(), rec.copy()
        plus[index] += eps
        minus[index] -= eps
        numeric = (combined_loss(raw, plus, spec, 0.7).combined - combined_loss(raw, minus, spec, 0.7).combined) / (2 * eps)
        assert numeric == pytest.approx(grad[index], abs=1e-7)


def test_unselected_cells_do_not_matter(rng):
    """Shuffling values outside the mask leaves the loss unchanged"""
    raw, rec = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    spec = MaskSpec((1,), (2,))
    unmasked = ~spec.cells(6, 3)
    shuffled = rec.copy()
    shuffled[unmasked] = rng.permutation(rec[unmasked])
    assert combined_loss(raw, shuffled, spec).combined == combined_loss(raw, rec, spec).combined


def test_alpha_out_of_range():
    """alpha must lie in [0, 1]"""
    with pytest.raises(ValueError):
        combined_loss(RAW, RAW, MaskSpec((0,), ()), alpha=1.5)


def test_breakdown_mean_keeps_missing_components():
    """Averaging epochs without a time term leaves loss_time as None"""
    mean = LossBreakdown.mean([LossBreakdown(None, 1.0, 1.0, 0.5), LossBreakdown(None, 3.0, 3.0, 0.5)])
    assert mean.loss_time is None
    assert mean.loss_channel == 2.0 and mean.combined == 2.0


def test_cross_entropy_uniform_logits():
    """Uniform logits over four classes cost ln 4"""
    assert cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3])) == pytest.approx(math.log(4), abs=1e-12)


def test_cross_entropy_large_margin():
    """A correct logit 50 above the rest costs almost nothing"""
    logits = np.array([[50.0, 0.0], [0.0, 50.0]])
    assert cross_entropy(logits, np.array([0, 1])) < 1e-20


def test_cross_entropy_matches_direct_softmax(rng):
    """Random batches agree with a per-row log-sum-exp computed with math.fsum"""
    logits = rng.normal(scale=5.0, size=(16, 7))
    labels = rng.integers(0, 7, size=16)
    expected = math.fsum(
        math.log(math.fsum(math.exp(v - row[y]) for v in row)) for row, y in zip(logits.tolist(), labels)
    ) / 16
    assert abs(cross_entropy(logits, labels) - expected) < 1e-10


def test_cross_entropy_gradient(rng):
    """The gradient is (softmax - onehot) / B and sums to zero per row"""
    logits = rng.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 2])
    _, grad = cross_entropy_and_grad(logits, labels)
    softmax = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    softmax[np.arange(4), labels] -= 1.0
    np.testing.assert_allclose(grad, softmax / 4, atol=1e-12)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_cross_entropy_label_out_of_range():
    """Labels must be below the class count"""
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
