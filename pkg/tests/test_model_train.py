import math

import numpy as np
import pytest
import torch

from uavloc.augment import Augmenter
from uavloc.detector.inference import Detector
from uavloc.detector.losses import LossConfig
from uavloc.detector.model import INPUT_SIZE, MarkerNet, build_model, to_input
from uavloc.detector.train import (
    LOG_HEADER,
    TrainConfig,
    fit,
    load_model,
    method_tag,
    read_log,
    targets_from_records,
    train,
)
from uavloc.errors import ConfigError, DataError, TrainingDivergedError
from uavloc.synthgen import DatasetManifest

SMALL = dict(width=8, batch_size=16)


@pytest.mark.parametrize("backbone", ["small-conv", "mobilenetv2-like"])
def test_output_shapes(backbone):
    torch.manual_seed(0)
    model = build_model(backbone, width=8).eval()
    pred = model(torch.zeros(3, 1, INPUT_SIZE, INPUT_SIZE))
    assert pred.m_hat.shape == pred.u_hat.shape == pred.d_hat.shape == (3,)
    assert pred.q_hat.shape == (3, 4)
    assert torch.all((pred.m_hat >= 0) & (pred.m_hat <= 1))
    assert torch.all(pred.d_hat > 0)


def test_input_shape_checked():
    with pytest.raises(DataError):
        MarkerNet(width=8)(torch.zeros(1, 1, 64, 64))
    with pytest.raises(ConfigError):
        MarkerNet("resnet")


def test_to_input():
    x = to_input(np.ones((5, 7), np.uint8))
    assert x.shape == (1, 1, 5, 7) and x.dtype == torch.float32


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(schedule="cosine")


def test_method_tags():
    assert method_tag("up", "noisycutout") == "MbULNet_UP(NoisyCutout)"
    assert method_tag("base", "spcutout") == "MbULNet_0(SPCutout)"
    assert method_tag("base", "noisycutout") == "MbULNet_0(NoisyCutout)"


def arrays(manifest, n_train=48, n_val=24):
    tr, va = manifest.split("train")[:n_train], manifest.split("val")[:n_val]
    return manifest.load_pixels(tr), targets_from_records(tr), manifest.load_pixels(va), targets_from_records(va)


def test_identical_seeds_identical_runs(small_dataset):
    x, t, xv, tv = arrays(small_dataset)
    cfg = TrainConfig(epochs=2, seed=5, **SMALL)
    runs = [fit(x, t, xv, tv, Augmenter("noisycutout"), LossConfig(), cfg) for _ in range(2)]
    assert [s.val_loss for s in runs[0].history] == [s.val_loss for s in runs[1].history]
    for k, v in runs[0].best_state.items():
        assert torch.equal(v, runs[1].best_state[k]), k


def test_best_checkpoint_not_worse_than_epoch_one(small_dataset):
    x, t, xv, tv = arrays(small_dataset)
    res = fit(x, t, xv, tv, None, LossConfig(variant="up"), TrainConfig(epochs=3, seed=1, **SMALL))
    assert res.best.val_loss <= res.history[0].val_loss
    assert res.best.val_loss == min(s.val_loss for s in res.history)


def test_divergence_aborts(small_dataset):
    x, t, xv, tv = arrays(small_dataset, 16, 8)
    model = build_model(width=8)
    with torch.no_grad():
        model.reg.weight.fill_(math.nan)
    with pytest.raises(TrainingDivergedError, match="non-finite"):
        fit(x, t, xv, tv, None, LossConfig(), TrainConfig(epochs=1, **SMALL), model=model)


def test_train_writes_checkpoint_and_log(tmp_path, small_dataset):
    ckpt = train(small_dataset, "noisycutout", "up", TrainConfig(epochs=2, max_train=32, **SMALL), tmp_path / "run")
    assert ckpt.tag == "MbULNet_UP(NoisyCutout)"
    log = read_log(tmp_path / "run" / "training_log.csv")
    assert [s.epoch for s in log] == [1, 2]
    assert (tmp_path / "run" / "training_log.csv").read_text().splitlines()[0] == ",".join(LOG_HEADER)
    model, meta = load_model(ckpt.path)
    assert meta["tag"] == ckpt.tag and meta["best_epoch"] == ckpt.best_epoch
    det = Detector.load(ckpt.path)
    out = det(small_dataset.load_pixels(small_dataset.records[:3]))
    assert set(out) == {"m_hat", "u", "v", "d", "q"}
    assert np.all(out["q"][:, 0] >= 0)
    assert np.allclose(np.linalg.norm(out["q"], axis=1), 1.0)


def test_train_needs_both_splits(tmp_path, small_dataset):
    only_train = DatasetManifest(small_dataset.root, small_dataset.split("train"), small_dataset.config)
    with pytest.raises(ConfigError):
        train(only_train, None, "base", TrainConfig(epochs=1, **SMALL), tmp_path)
    with pytest.raises(ConfigError):
        train(small_dataset, None, "base", TrainConfig(epochs=1, **SMALL), tmp_path, loss_cfg=LossConfig(variant="up"))
