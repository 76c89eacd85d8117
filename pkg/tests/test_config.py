import pytest

from uavloc.config import default_config, dump_config, load_config
from uavloc.errors import ConfigError


def test_defaults_carry_the_method_constants():
    cfg = default_config()
    assert (cfg.loss.gamma, cfg.loss.mu) == (10.0, 5.0)
    assert cfg.augmentation.noisycutout.mask_probability == 0.05
    assert cfg.tracker.background_frames == 50 and cfg.tracker.overlap == 20
    assert cfg.tracker.filter_cutoff_hz == 1.0 and cfg.camera.frame_rate_hz == 12.5
    assert cfg.thresholds.tau_for("MbULNet_0(SPCutout)") == 25
    assert cfg.thresholds.tau_for("MbULNet_0(NoisyCutout)") == 10
    assert cfg.thresholds.tau_for("MbULNet_UP(NoisyCutout)") == 13
    assert cfg.thresholds.green_pixel_threshold == 100
    assert (cfg.sampler.count_positive, cfg.sampler.count_null) == (5500, 1300)
    assert cfg.train.batch_size == 32


def test_round_trip(tmp_path):
    cfg = default_config(seed=7)
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    assert load_config(tmp_path / "c.yaml", seed=9).seed == 9


def test_seed_is_mandatory_in_files(tmp_path):
    (tmp_path / "c.yaml").write_text("loss:\n  variant: base\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml", seed=1).loss.variant == "base"


@pytest.mark.parametrize(
    "text",
    [
        "seed: 0\nunknown: 1\n",
        "seed: 0\ntrain:\n  learn_rate: 0.01\n",
        "seed: 0\nthresholds:\n  tau_by_method: {x: 0}\n",
        "seed: 0\ntracker:\n  overlap: 400\n",
        "seed: [\n",
        "- 1\n- 2\n",
    ],
)
def test_invalid_files_rejected(tmp_path, text):
    (tmp_path / "c.yaml").write_text(text)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")


def test_builders():
    cfg = default_config(seed=3)
    assert cfg.train_config().seed == 3
    assert cfg.tracker_config(25).threshold.tau == 25
    assert cfg.tracker_config().threshold.tau == cfg.thresholds.default_tau
    assert cfg.augmentation.build("spcutout").name == "spcutout"
    assert cfg.pose_sampler().seed == 3
