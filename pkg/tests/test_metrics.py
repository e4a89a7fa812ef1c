"""Dice, S_dice, masked MS-SSIM (iD) and change-map statistics."""
import numpy as np
import pytest
import torch

from gvs.exceptions import MetricError
from gvs.models import DiceSeries, Protocol, SlicePair
from gvs.services import metrics


def _lesion_mask(rng, size):
    yy, xx = np.mgrid[0:size, 0:size]
    cy, cx = rng.integers(size // 4, 3 * size // 4, size=2)
    radius = rng.integers(2, size // 6)
    return (np.hypot(yy - cy, xx - cx) <= radius).astype(np.uint8)


def test_dice_matches_set_oracle():
    rng = np.random.default_rng(0)
    for _ in range(500):
        a = rng.random((8, 8)) > rng.random()
        b = rng.random((8, 8)) > rng.random()
        set_a = {tuple(p) for p in np.argwhere(a)}
        set_b = {tuple(p) for p in np.argwhere(b)}
        denominator = len(set_a) + len(set_b)
        expected = 2 * len(set_a & set_b) / denominator if denominator else 0.0
        assert metrics.dice_score(a, b) == pytest.approx(expected, abs=1e-6)


def test_dice_counts_over_whole_batch():
    pred = np.zeros((2, 4, 4), dtype=bool)
    target = np.zeros((2, 4, 4), dtype=bool)
    pred[0, :2] = True      # 8 pixels, all correct
    target[0, :2] = True
    target[1, 0] = True     # 4 pixels missed in the second image
    assert metrics.dice_score(pred, target) == pytest.approx(16 / 20, abs=1e-6)


def test_predict_masks_threshold():
    prob = torch.tensor([[[[0.7, 0.5]], [[0.3, 0.5]]]])
    assert metrics.predict_masks(prob).tolist() == [[[False, True]]]


def test_ms_ssim_of_identical_images_is_one():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.random((64, 64))
        mask = _lesion_mask(rng, 64)
        assert metrics.masked_ms_ssim(x, x, mask) == pytest.approx(1.0, abs=1e-6)


def test_ms_ssim_of_noise_is_low(phantoms):
    x = np.kron(phantoms[0].image, np.ones((2, 2)))  # 128x128
    values = [metrics.masked_ms_ssim(x, np.random.default_rng(seed).random(x.shape),
                                     np.zeros_like(x), scales=3) for seed in range(10)]
    assert max(values) < 0.2


def test_ms_ssim_ignores_lesion_region():
    rng = np.random.default_rng(3)
    x = rng.random((64, 64))
    mask = np.zeros((64, 64), dtype=np.uint8)
    mask[20:30, 20:30] = 1
    changed = x.copy()
    changed[mask == 1] = 0.0
    assert metrics.masked_ms_ssim(x, changed, mask) == pytest.approx(1.0, abs=1e-6)


def test_ms_ssim_scale_limits():
    x = np.random.default_rng(4).random((64, 64))
    mask = np.zeros((64, 64))
    assert metrics.max_scales(64) == 3
    assert metrics.max_scales(176) == 5
    with pytest.raises(MetricError, match='at most 3'):
        metrics.masked_ms_ssim(x, x, mask, scales=5)
    with pytest.raises(MetricError):
        metrics.masked_ms_ssim(x, x, np.ones((64, 64)))


def test_id_metric_of_originals(phantoms):
    mean, std = metrics.id_metric((pair, pair.image) for pair in phantoms)
    assert mean == pytest.approx(1.0, abs=1e-6)
    assert std == pytest.approx(0.0, abs=1e-6)


def test_lesion_change_ratio_hand_case():
    x = np.zeros((4, 4))
    mask = np.zeros((4, 4), dtype=np.uint8)
    mask[:2, :2] = 1
    gx = np.where(mask == 1, 0.4, 0.05)
    assert metrics.lesion_change_ratio(x, gx, mask) == pytest.approx(8.0, rel=1e-6)
    with pytest.raises(MetricError):
        metrics.lesion_change_ratio(x, gx, np.zeros((4, 4)))


def test_change_mass_fraction_uses_dilated_mask():
    x = np.zeros((24, 24))
    mask = np.zeros((24, 24), dtype=np.uint8)
    mask[10, 10] = 1
    near = x.copy()
    near[10, 13] = 1.0
    far = x.copy()
    far[10, 14] = 1.0
    assert metrics.change_mass_fraction(x, near, mask) == pytest.approx(1.0)
    assert metrics.change_mass_fraction(x, far, mask) == pytest.approx(0.0)
    both = near + far
    assert metrics.change_mass_fraction(x, both, mask) == pytest.approx(0.5)


def test_difference_statistics(phantoms):
    healthy = SlicePair(id='healthy', image=phantoms[0].image,
                        mask=np.zeros_like(phantoms[0].mask))
    pairs = [phantoms[0], healthy]
    synthetics = [np.clip(p.image - 0.1 * p.mask, 0, 1) for p in pairs]
    stats = metrics.difference_statistics(pairs, synthetics)
    assert stats[0]['id'] == phantoms[0].id
    assert stats[0]['change_mass_fraction'] == pytest.approx(1.0)
    assert stats[1]['lesion_change_ratio'] is None


def test_s_dice_sums_epoch_dice(phantoms):
    protocol = Protocol(epochs=2, base_width=4, batch_size=4, seed=0)
    total, series = metrics.s_dice(phantoms, protocol)
    assert isinstance(series, DiceSeries)
    assert len(series.values) == 2
    assert all(0.0 <= v <= 1.0 for v in series.values)
    assert total == pytest.approx(sum(series.values))
    again, _ = metrics.s_dice(phantoms, protocol)
    assert again == total


def test_s_dice_needs_pairs():
    with pytest.raises(MetricError):
        metrics.s_dice([], Protocol(epochs=1, base_width=4))


def test_dice_csv(tmp_path):
    series = DiceSeries(values=[0.25, 0.5], epochs=2, seed=0, base_width=4)
    path = tmp_path / 'dice.csv'
    metrics.write_dice_csv(series, str(path))
    assert path.read_text().splitlines() == ['epoch,dice', '1,0.25', '2,0.5']


def test_mean_std_is_population():
    assert metrics.mean_std([1.0, 3.0]) == (2.0, 1.0)
