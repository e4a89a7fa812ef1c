"""Evaluation: healthiness (S_dice), identity (masked MS-SSIM) and change maps.

S_dice trains a fresh segmentor on (synthetic image, original lesion label)
pairs and sums its per-epoch training dice. Labels that no longer match a
visible lesion are hard to fit, so healthier synthetic images give a lower sum.
"""
from __future__ import annotations

import csv
import logging

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from ..exceptions import MetricError, NonFiniteLossError, ShapeError
from ..models import DiceSeries, Protocol
from ..networks import SEGMENTOR, init_params, torch_dtype
from .datasets import batch_iter, stack_pairs, to_tensors
from .losses import ce_seg_loss

logger = logging.getLogger(__name__)

DICE_EPS = 1e-7
RATIO_EPS = 1e-8
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K = (0.01, 0.03)


def _as_numpy(array):
    if torch.is_tensor(array):
        return array.detach().cpu().numpy()
    return np.asarray(array)


# --- Dice -------------------------------------------------------------------

def predict_masks(prob) -> torch.Tensor:
    """Threshold p(lesion) at 0.5; (N, 2, H, W) -> (N, H, W) bool."""
    return prob[:, 1] >= 0.5


def dice_counts(pred_mask, target):
    a = _as_numpy(pred_mask) != 0
    b = _as_numpy(target) != 0
    if a.shape != b.shape:
        raise ShapeError(f'mask shapes {a.shape} and {b.shape} do not match')
    return int(np.logical_and(a, b).sum()), int(a.sum()) + int(b.sum())


def dice_score(pred_mask, target) -> float:
    """2|A&B| / (|A| + |B| + eps) over all pixels of the batch."""
    intersection, total = dice_counts(pred_mask, target)
    return 2.0 * intersection / (total + DICE_EPS)


def segmentation_dice(segmentor, pairs, transform=None, batch_size=8) -> float:
    """Global-count dice of ``segmentor`` on ``pairs`` (optionally on transform(x))."""
    if not pairs:
        raise MetricError('no pairs to evaluate')
    parameter = next(segmentor.parameters())
    intersection = total = 0
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            x, y = to_tensors(stack_pairs(pairs[start:start + batch_size]),
                              parameter.dtype, parameter.device)
            if transform is not None:
                x = transform(x)
            i, t = dice_counts(predict_masks(segmentor(x)), y[:, 0])
            intersection += i
            total += t
    return 2.0 * intersection / (total + DICE_EPS)


def s_dice(synthetic_pairs, protocol: Protocol | None = None, device='cpu'):
    """Accumulated training dice of a fresh segmentor; returns (sum, DiceSeries)."""
    # Imported here to avoid a circular import at module load time.
    from .training import make_optimizer, scheduled_lr, set_lr

    protocol = protocol or Protocol()
    pairs = list(synthetic_pairs)
    if not pairs:
        raise MetricError('S_dice needs at least one synthetic pair')
    dtype = torch_dtype(protocol.precision)
    segmentor = init_params(protocol.seed, protocol.base_width, SEGMENTOR, dtype).to(device)
    optimizer = make_optimizer(segmentor, protocol.lr_initial)

    values = []
    for epoch in range(protocol.epochs):
        set_lr(optimizer, scheduled_lr(epoch, protocol.epochs, protocol.lr_initial,
                                       protocol.lr_decay_factor, protocol.lr_decay_at))
        for batch in batch_iter(pairs, protocol.batch_size, protocol.seed, epoch):
            x, y = to_tensors(batch, dtype, device)
            loss = ce_seg_loss(segmentor(x), y)
            if not bool(torch.isfinite(loss.value)):
                raise NonFiniteLossError(f'non-finite S_dice training loss at epoch {epoch}',
                                         record={'epoch': epoch, **loss.components})
            optimizer.zero_grad(set_to_none=True)
            loss.value.backward()
            optimizer.step()
        values.append(segmentation_dice(segmentor, pairs, batch_size=protocol.batch_size))
        logger.debug('s_dice epoch', extra={'epoch': epoch, 'dice': values[-1]})

    series = DiceSeries(values=values, epochs=protocol.epochs, seed=protocol.seed,
                        base_width=protocol.base_width)
    return series.total, series


def write_dice_csv(series: DiceSeries, path):
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(['epoch', 'dice'])
        for epoch, value in enumerate(series.values, start=1):
            writer.writerow([epoch, repr(float(value))])


# --- Identity ---------------------------------------------------------------

def max_scales(side: int) -> int:
    """Largest scale count (<= 5) whose coarsest level still fits the window."""
    count = 0
    while count < len(MS_SSIM_WEIGHTS) and side >= 2 ** count * SSIM_WINDOW:
        count += 1
    return count


def _gaussian_window(dtype):
    coords = torch.arange(SSIM_WINDOW, dtype=dtype) - SSIM_WINDOW // 2
    g = torch.exp(-(coords ** 2) / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _blur(image, window):
    out = F.conv2d(image, window.view(1, 1, 1, -1))
    return F.conv2d(out, window.view(1, 1, -1, 1))


def _ssim(a, b, window):
    c1 = SSIM_K[0] ** 2
    c2 = SSIM_K[1] ** 2
    mu_a, mu_b = _blur(a, window), _blur(b, window)
    var_a = _blur(a * a, window) - mu_a ** 2
    var_b = _blur(b * b, window) - mu_b ** 2
    cov = _blur(a * b, window) - mu_a * mu_b
    cs_map = (2 * cov + c2) / (var_a + var_b + c2)
    ssim_map = ((2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)) * cs_map
    return ssim_map.mean(), cs_map.mean()


def masked_ms_ssim(x, gx, mask, scales: int | None = None) -> float:
    """MS-SSIM of (1 - mask) * gx against (1 - mask) * x, data range 1.

    ``scales=None`` uses as many scales as the image size allows; weights are
    renormalized when fewer than five are used.
    """
    x = torch.as_tensor(_as_numpy(x), dtype=torch.float64)
    gx = torch.as_tensor(_as_numpy(gx), dtype=torch.float64)
    normal = 1.0 - torch.as_tensor(_as_numpy(mask) != 0, dtype=torch.float64)
    if x.shape != gx.shape or x.shape != normal.shape or x.dim() != 2:
        raise ShapeError(f'expected matching 2D images, got {tuple(x.shape)}, '
                         f'{tuple(gx.shape)}, {tuple(normal.shape)}')
    if not bool(normal.any()):
        raise MetricError('empty normal region')
    feasible = max_scales(min(x.shape))
    if scales is None:
        scales = feasible
    if not 1 <= scales <= feasible:
        raise MetricError(
            f'image of side {min(x.shape)} supports at most {feasible} scales, '
            f'{scales} requested', max_scales=feasible)

    weights = torch.tensor(MS_SSIM_WEIGHTS[:scales], dtype=torch.float64)
    weights = weights / weights.sum()
    window = _gaussian_window(torch.float64)
    a = (normal * gx)[None, None]
    b = (normal * x)[None, None]
    levels = []
    for level in range(scales):
        ssim, cs = _ssim(a, b, window)
        if level < scales - 1:
            levels.append(torch.relu(cs))
            padding = [side % 2 for side in a.shape[2:]]
            a = F.avg_pool2d(a, kernel_size=2, padding=padding)
            b = F.avg_pool2d(b, kernel_size=2, padding=padding)
    levels.append(torch.relu(ssim))
    return float(torch.prod(torch.stack(levels) ** weights))


def id_metric(pairs_with_synth, scales: int | None = None):
    """Mean and standard deviation of masked MS-SSIM over (pair, synthetic) items."""
    values = [masked_ms_ssim(pair.image, synthetic, pair.mask, scales)
              for pair, synthetic in pairs_with_synth]
    if not values:
        raise MetricError('no slices to evaluate')
    return mean_std(values)


def mean_std(values):
    values = np.asarray(list(values), dtype=np.float64)
    return float(values.mean()), float(values.std())


# --- Change maps ------------------------------------------------------------

def lesion_change_ratio(x, gx, mask) -> float:
    """Mean |x - gx| inside the lesion over the mean outside it."""
    mask = _as_numpy(mask) != 0
    if not mask.any() or mask.all():
        raise MetricError('lesion change ratio needs a mask that is neither empty nor full')
    diff = np.abs(_as_numpy(x).astype(np.float64) - _as_numpy(gx).astype(np.float64))
    return float((diff[mask].mean() + RATIO_EPS) / (diff[~mask].mean() + RATIO_EPS))


def change_mass_fraction(x, gx, mask, dilation: int = 3) -> float:
    """Share of total |x - gx| inside the lesion mask grown by ``dilation`` pixels."""
    mask = _as_numpy(mask) != 0
    if dilation > 0 and mask.any():
        structure = ndimage.generate_binary_structure(2, 2)
        mask = ndimage.binary_dilation(mask, structure=structure, iterations=dilation)
    diff = np.abs(_as_numpy(x).astype(np.float64) - _as_numpy(gx).astype(np.float64))
    total = diff.sum()
    if total == 0:
        # Nothing changed, so nothing changed outside the lesion either.
        return 1.0
    return float(diff[mask].sum() / total)


def difference_statistics(pairs, synthetics) -> list[dict]:
    stats = []
    for pair, synthetic in zip(pairs, synthetics):
        lesion = pair.mask != 0
        partial = lesion.any() and not lesion.all()
        stats.append({
            'id': pair.id,
            'mean_abs_change': float(np.abs(pair.image - synthetic).mean()),
            'lesion_change_ratio': lesion_change_ratio(pair.image, synthetic, pair.mask)
            if partial else None,
            'change_mass_fraction': change_mass_fraction(pair.image, synthetic, pair.mask)
            if partial else None,
        })
    return stats
