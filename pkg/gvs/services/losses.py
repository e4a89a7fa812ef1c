"""Losses of the generator-versus-segmentor game.

Probabilities are ``(N, 2, H, W)`` softmax maps (channel 0 healthy, channel 1
lesion); masks and images are ``(N, 1, H, W)`` or ``(N, H, W)`` tensors. Every
loss returns a ``LossValue`` whose ``value`` is a differentiable scalar and whose
``components`` are plain floats for logging.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..exceptions import ShapeError, ValidationError
from .datasets import BODY_THRESHOLD, normal_tissue_means

PROB_EPS = 1e-7
DIFF_EPS = 1e-8
MIN_WEIGHT = 0.1


@dataclass
class LossValue:
    value: torch.Tensor
    components: dict[str, float] = field(default_factory=dict)

    def item(self) -> float:
        return float(self.value.detach())


def _labels(target, pred):
    """Integer class map (N, H, W) matching ``pred``'s spatial shape."""
    if target.dim() == 4:
        target = target[:, 0]
    if pred.dim() != 4 or pred.shape[1] != 2 or target.shape != (pred.shape[0], *pred.shape[2:]):
        raise ShapeError(
            f'prediction {tuple(pred.shape)} and target {tuple(target.shape)} do not match')
    return target.long()


def _pixel_nll(pred, labels):
    picked = pred.gather(1, labels.unsqueeze(1)).squeeze(1)
    return -torch.log(picked.clamp(min=PROB_EPS, max=1.0))


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f'shapes {tuple(a.shape)} and {tuple(b.shape)} do not match')


def ce_seg_loss(pred, target, name='s1') -> LossValue:
    """Mean per-pixel cross-entropy of the true class."""
    value = _pixel_nll(pred, _labels(target, pred)).mean()
    return LossValue(value, {name: float(value.detach())})


def adv_seg_loss(pred) -> LossValue:
    """Cross-entropy toward the all-healthy mask."""
    zeros = torch.zeros(pred.shape[0], *pred.shape[2:], dtype=torch.long, device=pred.device)
    return ce_seg_loss(pred, zeros, name='s2')


def residual_loss(x, gx) -> LossValue:
    _same_shape(x, gx)
    value = F.mse_loss(gx, x)
    return LossValue(value, {'R': float(value.detach())})


def improved_residual_loss(x, gx, mask, lambda1: float,
                           body_threshold: float = BODY_THRESHOLD) -> LossValue:
    """Keep normal pixels, pull lesion pixels toward the image's normal-tissue mean.

    Both squared-error terms are averaged over all pixels, so with an empty mask
    this equals ``residual_loss`` exactly.
    """
    if not 0 < lambda1 < 1:
        raise ValidationError(f'lambda1 must lie in (0, 1), got {lambda1}')
    _same_shape(x, gx)
    _same_shape(x, mask)
    fill = normal_tissue_means(x, mask, body_threshold)
    fill = fill.view(-1, *([1] * (x.dim() - 1))).to(x.dtype)
    normal = 1 - mask
    keep = F.mse_loss(normal * gx, normal * x)
    lesion = F.mse_loss(mask * gx, mask * fill.expand_as(x))
    value = keep + lambda1 * lesion
    return LossValue(value, {'R+': float(value.detach())})


def difference_map(x, gx) -> torch.Tensor:
    """Per-image max-normalized absolute difference, in [0, 1]."""
    _same_shape(x, gx)
    diff = (x - gx).abs()
    peak = diff.flatten(1).max(dim=1).values
    return diff / (peak.view(-1, *([1] * (diff.dim() - 1))) + DIFF_EPS)


def weight_map(m) -> torch.Tensor:
    """w = 1 - m, floored at 0.1."""
    return torch.clamp(1 - m, min=MIN_WEIGHT)


def weighted_ce(pred, target, w, literal: bool = False) -> LossValue:
    """Pixel-weighted cross-entropy.

    Lesion pixels are weighted by ``w``, healthy pixels by 1. ``literal=True``
    keeps only the weighted lesion term (healthy pixels contribute nothing),
    still averaged over all pixels.
    """
    labels = _labels(target, pred)
    if w.dim() == 4:
        w = w[:, 0]
    if w.shape != labels.shape:
        raise ShapeError(f'weights {tuple(w.shape)} and target {tuple(labels.shape)} do not match')
    lesion = labels == 1
    if literal:
        coefficient = torch.where(lesion, w, torch.zeros_like(w))
    else:
        coefficient = torch.where(lesion, w, torch.ones_like(w))
    value = (coefficient * _pixel_nll(pred, labels)).mean()
    return LossValue(value, {'wce': float(value.detach())})


def generator_total(adv: LossValue, res: LossValue, lam: float) -> LossValue:
    """L_G = L_s2 + lambda * L_res, with the breakdown of both terms."""
    if not lam > 0:
        raise ValidationError(f'lambda must be > 0, got {lam}')
    value = adv.value + lam * res.value
    components = {**adv.components, **res.components, 'total': adv.item() + lam * res.item()}
    return LossValue(value, components)
