"""The generator-versus-segmentor game.

Each mini-batch runs Step A (generator frozen, segmentor learns to find the
lesions in G(x)) and then Step B (segmentor frozen, generator learns to make
every pixel look healthy while staying close to its input). Both networks have
their own Adam optimizer; the learning rate drops by ``lr_decay_factor`` from
epoch ``ceil(lr_decay_at * total_epochs)`` on.
"""
from __future__ import annotations

import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field

import torch

from ..exceptions import CheckpointError, DataError, NonFiniteLossError
from ..helper import config_hash
from ..models import DiceSeries, MetricsReport, StepRecord, TrainingConfig, Variant
from ..networks import (
    GENERATOR,
    SEGMENTOR,
    GeneratorNet,
    SegmentorNet,
    build,
    dtype_name,
    init_params,
    named_arrays,
    torch_dtype,
)
from ..observability import StepLog, Stopwatch
from ..schemas import training_config_schema
from .checkpoints import read_blob, write_blob
from .datasets import batch_iter, drop_healthy, to_tensors
from .losses import (
    adv_seg_loss,
    ce_seg_loss,
    difference_map,
    generator_total,
    improved_residual_loss,
    residual_loss,
    weight_map,
    weighted_ce,
)
from .metrics import segmentation_dice

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
_ADAM_KEYS = ('step', 'exp_avg', 'exp_avg_sq')


@dataclass
class TrainState:
    config: TrainingConfig
    generator: GeneratorNet
    segmentor: SegmentorNet
    gen_optimizer: torch.optim.Adam
    seg_optimizer: torch.optim.Adam
    epoch: int = 0  # next epoch to run
    step: int = 0   # batches completed
    history: list[dict] = field(default_factory=list)

    @property
    def dtype(self):
        return next(self.generator.parameters()).dtype

    @property
    def device(self):
        return next(self.generator.parameters()).device


def make_optimizer(params, lr):
    return torch.optim.Adam(params.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group['lr'] = lr


def decay_epoch(total_epochs: int, decay_at: float) -> int:
    # Rounded first so 0.8 * 20 lands on 16, not 17.
    return math.ceil(round(decay_at * total_epochs, 9))


def scheduled_lr(epoch, total_epochs, lr_initial, decay_factor, decay_at) -> float:
    if epoch >= decay_epoch(total_epochs, decay_at):
        return lr_initial * decay_factor
    return lr_initial


def lr_for_epoch(config: TrainingConfig, epoch: int) -> float:
    return scheduled_lr(epoch, config.total_epochs, config.lr_initial,
                        config.lr_decay_factor, config.lr_decay_at)


def init_state(config: TrainingConfig, device='cpu') -> TrainState:
    dtype = torch_dtype(config.precision)
    generator = init_params(config.seed, config.base_width, GENERATOR, dtype).to(device)
    # Offset seed: the two stores never share initial weights.
    segmentor = init_params(config.seed + 1, config.base_width, SEGMENTOR, dtype).to(device)
    return TrainState(
        config=config,
        generator=generator,
        segmentor=segmentor,
        gen_optimizer=make_optimizer(generator, config.lr_initial),
        seg_optimizer=make_optimizer(segmentor, config.lr_initial),
    )


def _check_finite(loss, record):
    if not bool(torch.isfinite(loss.value)):
        logger.error('non-finite loss', extra=record.to_dict())
        raise NonFiniteLossError(
            f'non-finite loss in step {record.phase} at epoch {record.epoch}, '
            f'batch {record.step}', record=record.to_dict())


def step_a(state: TrainState, batch) -> StepRecord:
    """Update the segmentor on (G(x), y); the generator is frozen."""
    x, y = batch
    config = state.config
    with torch.no_grad():
        gx = state.generator(x)
    pred = state.segmentor(gx)
    if Variant.uses_wce(config.variant):
        w = weight_map(difference_map(x, gx))
        loss = weighted_ce(pred, y, w, literal=config.literal_wce)
    else:
        loss = ce_seg_loss(pred, y)

    record = StepRecord(epoch=state.epoch, step=state.step, phase='A',
                        components=dict(loss.components),
                        lr=state.seg_optimizer.param_groups[0]['lr'])
    _check_finite(loss, record)
    state.seg_optimizer.zero_grad(set_to_none=True)
    loss.value.backward()
    state.seg_optimizer.step()
    return record


def step_b(state: TrainState, batch) -> StepRecord:
    """Update the generator through the frozen segmentor."""
    x, y = batch
    config = state.config
    state.segmentor.requires_grad_(False)
    try:
        gx = state.generator(x)
        adv = adv_seg_loss(state.segmentor(gx))
        if Variant.uses_rplus(config.variant):
            res = improved_residual_loss(x, gx, y, config.lambda1, config.body_threshold)
        else:
            res = residual_loss(x, gx)
        loss = generator_total(adv, res, config.lambda_)

        record = StepRecord(epoch=state.epoch, step=state.step, phase='B',
                            components=dict(loss.components),
                            lr=state.gen_optimizer.param_groups[0]['lr'])
        _check_finite(loss, record)
        state.gen_optimizer.zero_grad(set_to_none=True)
        loss.value.backward()
        state.gen_optimizer.step()
    finally:
        state.segmentor.requires_grad_(True)
    state.step += 1
    return record


def train(config: TrainingConfig, train_pairs, run_dir=None, state=None, device='cpu'):
    """Alternate Step A and Step B over every batch of every remaining epoch.

    With ``run_dir`` every step is appended to ``log.jsonl`` and a checkpoint
    ``ckpt-<epoch>.bin`` is written after each ``checkpoint_every`` epochs.
    Passing a loaded ``state`` resumes from ``state.epoch``.
    """
    pairs = list(train_pairs) if config.include_healthy else drop_healthy(train_pairs)
    if not pairs:
        raise DataError('no training pairs')
    if state is None:
        state = init_state(config, device)
    dtype, device = state.dtype, state.device

    log = StepLog(os.path.join(run_dir, 'log.jsonl')) if run_dir else None
    try:
        for epoch in range(state.epoch, config.total_epochs):
            lr = lr_for_epoch(config, epoch)
            set_lr(state.gen_optimizer, lr)
            set_lr(state.seg_optimizer, lr)
            watch = Stopwatch()
            sums, batches = defaultdict(float), 0
            for batch in batch_iter(pairs, config.batch_size, config.seed, epoch):
                tensors = to_tensors(batch, dtype, device)
                for run_step in (step_a, step_b):
                    record = run_step(state, tensors)
                    if log:
                        log.write(record.to_dict())
                    for name, value in record.components.items():
                        sums[f'{record.phase}:{name}'] += value
                batches += 1

            dice = segmentation_dice(state.segmentor, pairs, transform=state.generator,
                                     batch_size=config.batch_size)
            summary = {
                'phase': 'epoch',
                'epoch': epoch,
                'lr': lr,
                'dice': dice,
                'losses': {name: total / batches for name, total in sorted(sums.items())},
                'duration_ms': watch.elapsed_ms,
            }
            state.history.append(summary)
            state.epoch = epoch + 1
            if log:
                log.write(summary)
            logger.info('epoch finished', extra=summary)
            if run_dir and (state.epoch % config.checkpoint_every == 0
                            or state.epoch == config.total_epochs):
                save_checkpoint(state, os.path.join(run_dir, f'ckpt-{epoch}.bin'))
    finally:
        if log:
            log.close()
    return state, training_report(state)


def training_report(state: TrainState) -> MetricsReport:
    """Per-epoch segmentor training dice of the adversary, plus loss curves."""
    config = state.config
    values = [entry['dice'] for entry in state.history]
    series = DiceSeries(values=values, epochs=len(values), seed=config.seed,
                        base_width=config.base_width)
    return MetricsReport(
        s_dice=series.total,
        dice_series=series,
        variant=config.variant,
        extra={'losses': [entry['losses'] for entry in state.history],
               'lr': [entry['lr'] for entry in state.history]},
    )


def segmentor_generalization(state: TrainState, pairs, batch_size=8) -> float:
    """Dice of the trained adversary on held-out pathological images."""
    return segmentation_dice(state.segmentor, pairs, batch_size=batch_size)


# --- Checkpoints ------------------------------------------------------------

def _optimizer_arrays(optimizer, prefix):
    for index, slot in sorted(optimizer.state_dict()['state'].items()):
        for key in _ADAM_KEYS:
            value = slot[key]
            value = value.detach().cpu().numpy() if torch.is_tensor(value) else value
            yield f'{prefix}/{index}/{key}', value


def save_checkpoint(state: TrainState, path):
    """Write both networks and both Adam states at the run precision."""
    config_dict = state.config.to_dict()

    def arrays():
        yield from named_arrays(state.generator, f'{GENERATOR}/')
        yield from named_arrays(state.segmentor, f'{SEGMENTOR}/')
        yield from _optimizer_arrays(state.gen_optimizer, f'optim/{GENERATOR}')
        yield from _optimizer_arrays(state.seg_optimizer, f'optim/{SEGMENTOR}')

    return write_blob(
        path, arrays(), kind='train_state', dtype=dtype_name(state.dtype),
        base_width=state.config.base_width, seed=state.config.seed,
        config=config_dict, config_hash=config_hash(config_dict),
        epoch=state.epoch, step=state.step,
        lr=state.gen_optimizer.param_groups[0]['lr'], history=state.history,
    )


def _restore_network(kind, base_width, arrays, dtype, device):
    prefix = kind + '/'
    net = build(kind, base_width).to(dtype)
    net.load_state_dict({name[len(prefix):]: torch.from_numpy(array)
                         for name, array in arrays.items() if name.startswith(prefix)})
    return net.to(device)


def _restore_optimizer(optimizer, arrays, prefix, lr):
    slots = defaultdict(dict)
    for name, array in arrays.items():
        if not name.startswith(prefix + '/'):
            continue
        index, key = name[len(prefix) + 1:].split('/')
        if key == 'step':
            slots[int(index)][key] = torch.tensor(float(array), dtype=torch.float32)
        else:
            slots[int(index)][key] = torch.from_numpy(array)
    state_dict = optimizer.state_dict()
    state_dict['state'] = dict(slots)
    for group in state_dict['param_groups']:
        group['lr'] = lr
    optimizer.load_state_dict(state_dict)


def load_checkpoint(path, device='cpu') -> TrainState:
    manifest, arrays = read_blob(path, expected_kind='train_state')
    raw_config = manifest.get('config')
    if raw_config is None or config_hash(raw_config) != manifest.get('config_hash'):
        raise CheckpointError(f'config hash mismatch in {path}', path=path)
    config = training_config_schema.load(raw_config)
    dtype = torch_dtype(manifest['dtype'])

    generator = _restore_network(GENERATOR, manifest['base_width'], arrays, dtype, device)
    segmentor = _restore_network(SEGMENTOR, manifest['base_width'], arrays, dtype, device)
    lr = manifest['lr'] if manifest['lr'] is not None else config.lr_initial
    gen_optimizer = make_optimizer(generator, lr)
    seg_optimizer = make_optimizer(segmentor, lr)
    _restore_optimizer(gen_optimizer, arrays, f'optim/{GENERATOR}', lr)
    _restore_optimizer(seg_optimizer, arrays, f'optim/{SEGMENTOR}', lr)
    return TrainState(config=config, generator=generator, segmentor=segmentor,
                      gen_optimizer=gen_optimizer, seg_optimizer=seg_optimizer,
                      epoch=manifest['epoch'], step=manifest['step'],
                      history=list(manifest['history']))
