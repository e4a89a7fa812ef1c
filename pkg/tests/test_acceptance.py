"""Directional checks on the full phantom run.

These train 128x128 networks for 20 epochs several times over and take tens of
minutes on a CPU. Run them with ``pytest -m slow``.
"""
import hashlib
from dataclasses import replace

import numpy as np
import pytest

from gvs.models import PhantomSpec, Protocol, TrainingConfig, Variant
from gvs.services import metrics
from gvs.services.datasets import generate_phantoms, select_fraction
from gvs.services.synthesis import synthesize, synthetic_pairs
from gvs.services.training import train

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope='module')
def pairs():
    return generate_phantoms(PhantomSpec(size=128, n_slices=200, seed=0))


@pytest.fixture(scope='module')
def run(pairs):
    """Memoized ``(variant, seed, fraction, precision) -> synthetic images``."""
    cache = {}

    def _run(variant=Variant.FULL, seed=0, fraction=1.0, precision=32):
        key = (variant, seed, fraction, precision)
        if key not in cache:
            config = TrainingConfig(variant=variant, seed=seed, base_width=16,
                                    total_epochs=20, precision=precision)
            state, _ = train(config, select_fraction(pairs, fraction, seed))
            cache[key] = synthesize(state.generator, pairs)
        return cache[key]
    return _run


@pytest.fixture(scope='module')
def s_dice_of(pairs):
    cache = {}

    def _s_dice(images, seed=0, precision=32):
        key = (id(images), seed, precision)
        if key not in cache:
            protocol = Protocol(epochs=20, base_width=16, seed=seed, precision=precision)
            source = pairs if images is None else synthetic_pairs(pairs, images)
            cache[key] = metrics.s_dice(source, protocol)[0]
        return cache[key]
    return _s_dice


def test_identity_is_preserved(pairs, run):
    mean, _ = metrics.id_metric(zip(pairs, run()))
    assert mean >= 0.95


def test_changes_target_lesions(pairs, run):
    synthetics = run()
    ratios = [metrics.lesion_change_ratio(p.image, gx, p.mask)
              for p, gx in zip(pairs, synthetics)]
    assert np.median(ratios) >= 5

    inside = total = 0.0
    for pair, gx in zip(pairs, synthetics):
        mass = np.abs(gx - pair.image).sum()
        inside += mass * metrics.change_mass_fraction(pair.image, gx, pair.mask)
        total += mass
    assert inside / total >= 0.8


@pytest.mark.parametrize('seed', SEEDS)
def test_synthetics_look_healthier(run, s_dice_of, seed):
    original = s_dice_of(None, seed)
    synthetic = s_dice_of(run(seed=seed), seed)
    assert synthetic < 0.9 * original


def test_weighted_ce_helps_on_most_seeds(run, s_dice_of):
    wins = sum(s_dice_of(run(Variant.FULL, seed), seed)
               < s_dice_of(run(Variant.NO_WCE, seed), seed) for seed in SEEDS)
    assert wins >= 2


def test_less_training_data_is_less_healthy(run, s_dice_of):
    assert s_dice_of(run(fraction=0.1)) >= s_dice_of(run(fraction=1.0))


def test_rerun_is_deterministic(pairs):
    config = replace(TrainingConfig(base_width=16, total_epochs=20), precision=64)
    protocol = Protocol(epochs=20, base_width=16, precision=64)
    results = []
    for _ in range(2):
        state, _ = train(config, pairs)
        images = synthesize(state.generator, pairs)
        digest = hashlib.sha256(b''.join(image.tobytes() for image in images)).hexdigest()
        id_mean, _ = metrics.id_metric(zip(pairs, images))
        total, _ = metrics.s_dice(synthetic_pairs(pairs, images), protocol)
        results.append((digest, id_mean, total))
    (digest_a, id_a, dice_a), (digest_b, id_b, dice_b) = results
    assert digest_a == digest_b
    assert id_a == pytest.approx(id_b, abs=1e-4)
    assert dice_a == pytest.approx(dice_b, abs=1e-4)
