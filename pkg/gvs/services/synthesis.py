"""Run a trained generator over slices and write its outputs.

An output directory is itself a dataset (``images/`` holds the synthetic
slices as 16-bit PNGs, ``masks/`` a copy of the original lesion masks), plus
``difference/`` maps and 1x4 ``panels/``. Its manifest records
``intensity_scale: dtype`` so readers divide by the integer range instead of
re-stretching each slice.
"""
from __future__ import annotations

import logging
import os

import numpy as np
import torch

from ..exceptions import DataError
from ..models import SlicePair
from .datasets import IMAGE_SUFFIX, stack_pairs, to_tensors, write_slice_pairs
from .imaging import panel, render_difference, save_gray

logger = logging.getLogger(__name__)

INTENSITY_SCALE = 'dtype'


def synthesize(generator, pairs, batch_size: int = 8) -> list[np.ndarray]:
    """G(x) for every pair, as float64 arrays in [0, 1], in input order."""
    if not pairs:
        raise DataError('no slices to synthesize')
    parameter = next(generator.parameters())
    outputs = []
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            x, _ = to_tensors(stack_pairs(pairs[start:start + batch_size]),
                              parameter.dtype, parameter.device)
            gx = generator(x)[:, 0].cpu().numpy().astype(np.float64)
            outputs.extend(np.clip(gx, 0.0, 1.0))
    return outputs


def synthetic_pairs(pairs, synthetics) -> list[SlicePair]:
    """(G(x), original mask) pairs, the input of S_dice."""
    return [SlicePair(id=pair.id, image=image, mask=pair.mask)
            for pair, image in zip(pairs, synthetics)]


def write_outputs(pairs, synthetics, out_dir, absolute: bool = False) -> dict:
    """Write images, masks, difference maps and panels; returns output counts."""
    write_slice_pairs(synthetic_pairs(pairs, synthetics), out_dir, bit_depth=16)
    difference_dir = os.path.join(out_dir, 'difference')
    panel_dir = os.path.join(out_dir, 'panels')
    os.makedirs(difference_dir, exist_ok=True)
    os.makedirs(panel_dir, exist_ok=True)
    for pair, synthetic in zip(pairs, synthetics):
        name = pair.id + IMAGE_SUFFIX
        save_gray(render_difference(pair.image, synthetic, absolute=absolute),
                  os.path.join(difference_dir, name))
        save_gray(panel(pair.image, synthetic, pair.mask, absolute=absolute),
                  os.path.join(panel_dir, name))
    logger.info('synthetic outputs written', extra={'out': out_dir, 'count': len(pairs)})
    return {'images': len(pairs), 'difference': len(pairs), 'panels': len(pairs)}
