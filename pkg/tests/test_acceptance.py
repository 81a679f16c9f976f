"""
Training experiments on synthetic cubes: capacity, generalisation and the
qualitative trends of patch size, direction and augmentation.

Run with `pytest --runslow`; each test trains for minutes.
"""
import numpy as np
import pytest

from application.checkpoint import Checkpoint, checkpoint_bytes
from application.hsi_data import PatchSequence, SplitSpec, synth_cube
from application.models import ModelConfig
from application.tensor import Rng, Tensor
from application.training import TrainConfig, train, train_on_cube

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


def mean_test_oa(cube, seeds=SEEDS, fraction=0.1, **overrides):
    model_fields = dict(patch_size=8, hidden_channels=8, dropout=0.6, direction="bidirectional")
    train_fields = dict(learning_rate=5e-3, batch_size=16, epochs=15, augment=True)
    for key, value in overrides.items():
        (model_fields if key in model_fields else train_fields)[key] = value
    scores = []
    for seed in seeds:
        config = ModelConfig(bands=cube.l, classes=cube.classes, **model_fields)
        run = train_on_cube(cube, config, TrainConfig(seed=seed, **train_fields), SplitSpec(fraction, seed=seed))
        scores.append(run.test_metrics["oa"])
    return float(np.mean(scores))


def test_memorises_a_single_sample():
    """Test that a tiny model drives the loss on one sample below 0.01"""
    config = ModelConfig(patch_size=8, bands=3, classes=2, hidden_channels=2, dropout=0.0)
    rng = Rng(11)
    sample = PatchSequence(tuple(Tensor(rng.normal((1, 8, 8))) for _ in range(3)), 2, (0, 0))
    _, report = train(config, [sample], TrainConfig(learning_rate=1e-2, batch_size=1, epochs=200))
    assert report.epochs[-1].loss < 0.01
    assert report.epochs[-1].train_oa == 1.0


def test_fits_the_training_set():
    """Test training OA >= 0.99 with the default hyper-parameters on a separable 3-class cube"""
    cube = synth_cube(3, 32, 32, 10, seed=0, separation=10.0)
    config = ModelConfig(patch_size=8, bands=10, classes=3)
    run = train_on_cube(cube, config, TrainConfig(epochs=10), SplitSpec(0.1, seed=0), evaluate_test=False)
    assert max(record.train_oa for record in run.report.epochs) >= 0.99


def test_generalises_to_held_out_pixels():
    """Test mean test OA >= 0.90 over three seeds with a 10% split and augmentation"""
    cube = synth_cube(3, 32, 32, 10, seed=0, separation=10.0)
    assert mean_test_oa(cube, epochs=10) >= 0.90


def test_larger_patches_do_not_hurt():
    """Test that mean test OA does not decrease from p = 8 to p = 16 with spatially smooth noise"""
    cube = synth_cube(4, 24, 24, 6, seed=3, separation=2.0, blobs=2, spatial_correlation=0.9)
    small = mean_test_oa(cube, patch_size=8)
    large = mean_test_oa(cube, patch_size=16)
    assert large >= small


def test_bidirectional_beats_forward_only_on_late_band_classes():
    """Test Bi-CLSTM >= forward-only CLSTM when classes differ only in the last bands"""
    cube = synth_cube(3, 24, 24, 8, seed=5, separation=3.0, distinct_from=0.5)
    bidirectional = mean_test_oa(cube, direction="bidirectional")
    forward = mean_test_oa(cube, direction="forward")
    assert bidirectional >= forward


def test_dropout_does_not_hurt():
    """Test that dropout 0.6 scores at least as well as no dropout on a small training set"""
    cube = synth_cube(3, 24, 24, 8, seed=13, separation=3.0)
    assert mean_test_oa(cube, fraction=0.05, dropout=0.6) >= mean_test_oa(cube, fraction=0.05, dropout=0.0)


def test_augmentation_does_not_hurt():
    """Test that augmented training is within 0.02 of, or better than, plain training"""
    cube = synth_cube(3, 24, 24, 6, seed=9, separation=3.0)
    assert mean_test_oa(cube, augment=True) >= mean_test_oa(cube, augment=False, epochs=40) - 0.02


def test_repeated_training_is_bit_identical():
    """Test identical checkpoints and reports for equal seeds, with 1 and 4 threads"""
    cube = synth_cube(3, 16, 16, 4, seed=1, separation=5.0)
    config = ModelConfig(patch_size=8, bands=4, classes=3, hidden_channels=4)
    cfg = TrainConfig(epochs=3, seed=4)
    runs = [train_on_cube(cube, config, cfg, SplitSpec(0.2, seed=4), threads=threads) for threads in (1, 4)]
    blobs = [checkpoint_bytes(Checkpoint(r.model, r.norm_stats, r.trainer.optimizer_state)) for r in runs]
    assert blobs[0] == blobs[1]
    assert runs[0].report.epochs == runs[1].report.epochs
    assert runs[0].test_metrics == runs[1].test_metrics
