"""Paired slice data: ingestion, lesion phantoms, splits and seeded batches.

On disk a dataset is ``<root>/images/<id>.png`` + ``<root>/masks/<id>.png``.
Everything here is a pure function of its inputs and seed.
"""
from __future__ import annotations

import hashlib
import logging
import os
from collections.abc import Iterator, Sequence
from typing import NamedTuple

import numpy as np
import torch
from PIL import Image

from ..exceptions import DataError, NoNormalTissueError, ShapeError, ValidationError
from ..models import PhantomSpec, SlicePair

logger = logging.getLogger(__name__)

BODY_THRESHOLD = 0.01
IMAGE_SUFFIX = '.png'

# Phantom geometry, as fractions of the side length.
_BODY_SEMI_AXES = (0.30, 0.44)
_BODY_JITTER = 0.04
_LESION_MARGIN_PX = 4
_N_BUMPS = 12
_TEXTURE_LEVELS = (0.35, 0.50)


class Batch(NamedTuple):
    images: np.ndarray  # (B, H, W) float64 in [0, 1]
    masks: np.ndarray   # (B, H, W) uint8 in {0, 1}
    ids: list[str]


# --- Phantoms ---------------------------------------------------------------

def generate_phantoms(spec: PhantomSpec) -> list[SlicePair]:
    """Elliptical textured bodies with one bright lesion blob each."""
    size = spec.size
    r_max_px = spec.lesion_radius_range[1] * size
    smallest_axis = _BODY_SEMI_AXES[0] * size
    if r_max_px + _LESION_MARGIN_PX >= smallest_axis:
        raise ValidationError(
            f'lesion radius up to {r_max_px:.1f}px cannot fit inside a body whose '
            f'semi-axis may be as small as {smallest_axis:.1f}px',
            field='lesion_radius_range',
        )

    rng = np.random.default_rng(spec.seed)
    grid = np.mgrid[0:size, 0:size].astype(np.float64)
    pairs = [
        _phantom_slice(f'phantom-{index:05d}', spec, rng, grid)
        for index in range(spec.n_slices)
    ]
    logger.debug('generated phantoms',
                 extra={'n_slices': spec.n_slices, 'size': size, 'seed': spec.seed})
    return pairs


def _phantom_slice(slice_id, spec, rng, grid) -> SlicePair:
    size = spec.size
    yy, xx = grid
    cy, cx = size / 2 + rng.uniform(-_BODY_JITTER, _BODY_JITTER, size=2) * size
    ay, ax = rng.uniform(*_BODY_SEMI_AXES, size=2) * size
    body = ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0

    image = np.where(body, _texture(rng, spec, yy, xx, body, (cy, cx, ay, ax)), 0.0)

    radius = rng.uniform(*spec.lesion_radius_range) * size
    ly, lx = _lesion_centre(rng, (cy, cx, ay, ax), radius + _LESION_MARGIN_PX)
    distance = np.hypot(yy - ly, xx - lx)
    mask = distance <= radius
    # Logistic falloff: full offset at the core, half of it on the mask boundary.
    softness = max(1.0, 0.15 * radius)
    profile = 1.0 / (1.0 + np.exp((distance - radius) / softness))
    image = image + spec.lesion_contrast * profile * mask
    np.clip(image, 0.0, 1.0, out=image)
    return SlicePair(id=slice_id, image=image, mask=mask.astype(np.uint8))


def _texture(rng, spec, yy, xx, body, ellipse):
    cy, cx, ay, ax = ellipse
    sigma = spec.texture_scale * spec.size / 4.0
    angle = rng.uniform(0.0, 2 * np.pi, size=_N_BUMPS)
    reach = np.sqrt(rng.uniform(0.0, 1.0, size=_N_BUMPS))
    by = (cy + ay * reach * np.sin(angle))[:, None, None]
    bx = (cx + ax * reach * np.cos(angle))[:, None, None]
    amplitude = rng.uniform(-1.0, 1.0, size=_N_BUMPS)[:, None, None]
    field = (amplitude * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * sigma ** 2))).sum(0)

    inside = field[body]
    low, high = inside.min(), inside.max()
    unit = (field - low) / (high - low) if high > low else np.zeros_like(field)
    lo, hi = _TEXTURE_LEVELS
    return lo + (hi - lo) * unit


def _lesion_centre(rng, ellipse, reach, attempts=200):
    """Centre such that a disk of radius ``reach`` lies inside the ellipse."""
    cy, cx, ay, ax = ellipse
    theta = np.linspace(0.0, 2 * np.pi, 72, endpoint=False)
    for _ in range(attempts):
        angle = rng.uniform(0.0, 2 * np.pi)
        r = np.sqrt(rng.uniform(0.0, 1.0))
        py = cy + (ay - reach) * r * np.sin(angle)
        px = cx + (ax - reach) * r * np.cos(angle)
        ring_y = py + reach * np.sin(theta)
        ring_x = px + reach * np.cos(theta)
        if np.all(((ring_y - cy) / ay) ** 2 + ((ring_x - cx) / ax) ** 2 <= 1.0):
            return py, px
    # The body centre always fits since reach < min(ay, ax).
    return cy, cx


# --- Files ------------------------------------------------------------------

def load_slice_pairs(root, rescale: str = 'minmax') -> list[SlicePair]:
    """Read ``images/`` and ``masks/`` under ``root`` into sorted pairs.

    ``rescale="minmax"`` stretches every slice to [0, 1]; ``"dtype"`` divides by
    the integer range of the file instead (for reading back written outputs).
    """
    if rescale not in ('minmax', 'dtype'):
        raise ValidationError(f'unknown rescale mode {rescale!r}')
    image_dir = os.path.join(root, 'images')
    mask_dir = os.path.join(root, 'masks')
    for directory in (image_dir, mask_dir):
        if not os.path.isdir(directory):
            raise DataError(f'missing directory {directory}', path=directory)

    images = _index(image_dir)
    masks = _index(mask_dir)
    for stem in sorted(set(images) | set(masks)):
        if stem not in masks:
            raise DataError(f'orphan image without mask: {images[stem]}', id=stem)
        if stem not in images:
            raise DataError(f'orphan mask without image: {masks[stem]}', id=stem)

    pairs = []
    for stem in sorted(images):
        raw_image, image_range = _read_gray(images[stem])
        raw_mask, mask_range = _read_gray(masks[stem])
        if raw_image.shape != raw_mask.shape:
            raise ShapeError(
                f'pair {stem!r}: image {raw_image.shape} vs mask {raw_mask.shape}', id=stem)
        if rescale == 'minmax':
            image = _minmax(raw_image)
        else:
            image = np.clip(raw_image / image_range, 0.0, 1.0)
        mask = (raw_mask / mask_range >= 0.5).astype(np.uint8)
        pairs.append(SlicePair(id=stem, image=image, mask=mask))
    return pairs


def _index(directory):
    return {
        name[: -len(IMAGE_SUFFIX)]: os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.lower().endswith(IMAGE_SUFFIX)
    }


def _read_gray(path):
    """Return (float64 pixels, integer range of the file)."""
    with Image.open(path) as img:
        if img.mode in ('I;16', 'I;16B', 'I;16L', 'I'):
            return np.asarray(img, dtype=np.float64), 65535.0
        if img.mode != 'L':
            img = img.convert('L')
        return np.asarray(img, dtype=np.float64), 255.0


def _minmax(pixels):
    low, high = pixels.min(), pixels.max()
    if high <= low:
        return np.zeros_like(pixels)
    return (pixels - low) / (high - low)


def write_slice_pairs(pairs: Sequence[SlicePair], root, bit_depth: int = 16):
    """Write pairs in the dataset layout; images at ``bit_depth``, masks 0/255."""
    if bit_depth not in (8, 16):
        raise ValidationError(f'unsupported bit depth {bit_depth}')
    image_dir = os.path.join(root, 'images')
    mask_dir = os.path.join(root, 'masks')
    os.makedirs(image_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    for pair in pairs:
        write_image(pair.image, os.path.join(image_dir, pair.id + IMAGE_SUFFIX), bit_depth)
        Image.fromarray((pair.mask > 0).astype(np.uint8) * 255).save(
            os.path.join(mask_dir, pair.id + IMAGE_SUFFIX))
    return root


def write_image(pixels, path, bit_depth=16):
    scale, dtype = (65535.0, np.uint16) if bit_depth == 16 else (255.0, np.uint8)
    quantized = np.round(np.clip(pixels, 0.0, 1.0) * scale).astype(dtype)
    Image.fromarray(quantized).save(path)


def dataset_fingerprint(root) -> dict:
    """File count plus a content hash over ``images/`` and ``masks/``."""
    digest = hashlib.sha256()
    count = 0
    for sub in ('images', 'masks'):
        directory = os.path.join(root, sub)
        if not os.path.isdir(directory):
            continue
        for name in sorted(os.listdir(directory)):
            path = os.path.join(directory, name)
            digest.update(f'{sub}/{name}'.encode())
            with open(path, 'rb') as fh:
                digest.update(fh.read())
            count += 1
    return {'files': count, 'sha256': digest.hexdigest()}


# --- Splits and batches -----------------------------------------------------

def drop_healthy(pairs: Sequence[SlicePair]) -> list[SlicePair]:
    return [pair for pair in pairs if not pair.is_healthy]


def split(pairs: Sequence[SlicePair], train_fraction: float, seed: int):
    """Seeded disjoint (train, test) split."""
    if not 0 < train_fraction < 1:
        raise ValidationError(f'train_fraction must lie in (0, 1), got {train_fraction}')
    if len(pairs) < 2:
        raise DataError(f'need at least 2 pairs to split, got {len(pairs)}')
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = min(max(int(round(train_fraction * len(pairs))), 1), len(pairs) - 1)
    train = [pairs[i] for i in order[:n_train]]
    test = [pairs[i] for i in order[n_train:]]
    return train, test


def select_fraction(pairs: Sequence[SlicePair], fraction: float, seed: int):
    """The seeded ``fraction`` of ``pairs`` used for training (1.0 keeps all)."""
    if not 0 < fraction <= 1:
        raise ValidationError(f'fraction must lie in (0, 1], got {fraction}')
    if fraction == 1:
        return list(pairs)
    return split(pairs, fraction, seed)[0]


def batch_iter(pairs: Sequence[SlicePair], batch_size: int, seed: int,
               epoch: int) -> Iterator[Batch]:
    """Shuffled batches whose order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ValidationError(f'batch_size must be >= 1, got {batch_size}')
    if not pairs:
        raise DataError('cannot batch an empty pair list')
    order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    return _batches(pairs, order, batch_size)


def _batches(pairs, order, batch_size):
    for start in range(0, len(order), batch_size):
        chosen = [pairs[i] for i in order[start:start + batch_size]]
        yield Batch(
            images=np.stack([pair.image for pair in chosen]),
            masks=np.stack([pair.mask for pair in chosen]),
            ids=[pair.id for pair in chosen],
        )


def stack_pairs(pairs: Sequence[SlicePair]) -> Batch:
    """Every pair as one batch, in the given order."""
    return Batch(images=np.stack([p.image for p in pairs]),
                 masks=np.stack([p.mask for p in pairs]),
                 ids=[p.id for p in pairs])


def to_tensors(batch: Batch, dtype=torch.float32, device='cpu'):
    """(images, masks) as (B, 1, H, W) tensors; masks as 0/1 floats."""
    x = torch.as_tensor(batch.images, dtype=dtype, device=device).unsqueeze(1)
    y = torch.as_tensor(batch.masks, dtype=dtype, device=device).unsqueeze(1)
    return x, y


# --- Normal tissue ----------------------------------------------------------

def normal_tissue_mean(image, mask, body_threshold: float = BODY_THRESHOLD) -> float:
    """Mean intensity of non-lesion pixels brighter than the background."""
    image = np.asarray(image, dtype=np.float64)
    normal = np.asarray(mask) == 0
    if not normal.any():
        raise NoNormalTissueError('no normal tissue')
    body = normal & (image > body_threshold)
    region = body if body.any() else normal
    return float(image[region].mean())


def normal_tissue_means(x: torch.Tensor, mask: torch.Tensor,
                        body_threshold: float = BODY_THRESHOLD) -> torch.Tensor:
    """Batched ``normal_tissue_mean``: one value per image, no gradient."""
    x = x.detach()
    normal = mask == 0
    n_normal = normal.flatten(1).sum(1)
    if bool((n_normal == 0).any()):
        raise NoNormalTissueError('no normal tissue')
    body = normal & (x > body_threshold)
    n_body = body.flatten(1).sum(1)
    body_mean = (x * body).flatten(1).sum(1) / n_body.clamp(min=1)
    normal_mean = (x * normal).flatten(1).sum(1) / n_normal
    return torch.where(n_body > 0, body_mean, normal_mean)
