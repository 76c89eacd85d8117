"""Training loop, checkpoints and the per-epoch log."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from uavloc.augment import DISPLAY_NAMES, Augmenter
from uavloc.detector.losses import LossConfig, Targets, per_sample_loss
from uavloc.detector.model import BACKBONES, INPUT_SIZE, MarkerNet, build_model, to_input
from uavloc.errors import ConfigError, TrainingDivergedError
from uavloc.synthgen import DatasetManifest, SampleRecord

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "train_loss", "val_loss", "val_class_acc", "val_pixel_mae"]


@dataclass
class TrainConfig:
    batch_size: int = 32
    learn_rate: float = 1e-3
    epochs: int = 150
    seed: int = 0
    backbone: str = "small-conv"
    width: int = 32
    schedule: str = "onecycle"  # or "constant"
    deterministic: bool = True
    max_train: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learn_rate > 0:
            raise ConfigError("learn_rate must be positive")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone must be one of {BACKBONES}")
        if self.schedule not in ("onecycle", "constant"):
            raise ConfigError("schedule must be 'onecycle' or 'constant'")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_class_acc: float
    val_pixel_mae: float

    def line(self) -> str:
        return (
            f"{self.epoch}, {self.train_loss:.6f}, {self.val_loss:.6f}, "
            f"{self.val_class_acc:.4f}, {self.val_pixel_mae:.3f}"
        )


@dataclass
class FitResult:
    model: MarkerNet
    history: list[EpochStats]
    best_epoch: int
    best_state: dict = field(repr=False)

    @property
    def best(self) -> EpochStats:
        return self.history[self.best_epoch - 1]


def method_tag(loss_variant: str, augment_name: str) -> str:
    return f"MbULNet_{'UP' if loss_variant == 'up' else '0'}({DISPLAY_NAMES[augment_name]})"


def targets_from_records(records: list[SampleRecord], width_px: int = INPUT_SIZE) -> Targets:
    return Targets.from_arrays(
        [r.m for r in records],
        [r.u / width_px for r in records],
        [r.v / width_px for r in records],
        [r.d / width_px for r in records],
        [r.quaternion for r in records],
    )


def set_deterministic(seed: int, enabled: bool = True):
    torch.manual_seed(seed)
    if enabled:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


@torch.no_grad()
def evaluate(model, images: np.ndarray, targets: Targets, loss_cfg: LossConfig, batch: int = 100) -> dict:
    """Mean loss, classification accuracy and mean hub-position error (pixels) on clean images."""
    model.eval()
    losses, m_hat, u, v = [], [], [], []
    for i in range(0, len(images), batch):
        pred = model(to_input(images[i : i + batch]))
        losses.append(per_sample_loss(pred, targets[slice(i, i + batch)], loss_cfg))
        m_hat.append(pred.m_hat)
        u.append(pred.u_hat)
        v.append(pred.v_hat)
    m_hat, u, v = torch.cat(m_hat), torch.cat(u), torch.cat(v)
    pos = targets.m > 0
    err = torch.hypot(u - targets.u, v - targets.v)[pos] * loss_cfg.width_px
    return {
        "loss": float(torch.cat(losses).mean()),
        "acc": float(((m_hat >= 0.5).float() == targets.m).float().mean()),
        "pixel_mae": float(err.mean()) if err.numel() else math.nan,
    }


def fit(
    x_train: np.ndarray,
    t_train: Targets,
    x_val: np.ndarray,
    t_val: Targets,
    augmenter: Augmenter | None,
    loss_cfg: LossConfig,
    cfg: TrainConfig,
    on_epoch: Callable[[EpochStats], None] | None = None,
    model: MarkerNet | None = None,
    stop_train_loss: float | None = None,
) -> FitResult:
    """Train on in-memory arrays and keep the weights with the lowest validation loss.

    With ``stop_train_loss`` set, training ends after the first epoch whose
    mean training loss falls below it.
    """
    set_deterministic(cfg.seed, cfg.deterministic)
    model = model or build_model(cfg.backbone, cfg.width)
    rng = np.random.default_rng(cfg.seed)
    n = len(x_train)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learn_rate)
    sched = None
    if cfg.schedule == "onecycle":
        sched = torch.optim.lr_scheduler.OneCycleLR(
            opt, max_lr=cfg.learn_rate, total_steps=cfg.epochs * steps_per_epoch, pct_start=0.15
        )
    history: list[EpochStats] = []
    best_loss, best_epoch, best_state = math.inf, 0, None
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(n)
        total, count = 0.0, 0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            if idx.size == 0:
                continue
            batch = x_train[idx]
            if augmenter is not None:
                batch = np.stack([augmenter(img, rng) for img in batch])
            pred = model(to_input(batch))
            loss = per_sample_loss(pred, t_train[torch.as_tensor(idx)], loss_cfg).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, batch {b} "
                    f"(last epoch mean {history[-1].train_loss if history else float('nan'):.4g}); "
                    "try a lower learn rate"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            if sched is not None:
                sched.step()
            total += loss.item() * idx.size
            count += idx.size
        val = evaluate(model, x_val, t_val, loss_cfg)
        stats = EpochStats(epoch, total / count, val["loss"], val["acc"], val["pixel_mae"])
        history.append(stats)
        if not math.isfinite(stats.val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        if stats.val_loss < best_loss:
            best_loss, best_epoch = stats.val_loss, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if on_epoch is not None:
            on_epoch(stats)
        log.info("%s", stats.line())
        if stop_train_loss is not None and stats.train_loss < stop_train_loss:
            break
    model.load_state_dict(best_state)
    model.eval()
    return FitResult(model, history, best_epoch, best_state)


@dataclass
class ModelCheckpoint:
    path: Path
    tag: str
    best_epoch: int
    history: list[EpochStats]

    @property
    def best(self) -> EpochStats:
        return self.history[self.best_epoch - 1]


def save_checkpoint(path, result: FitResult, loss_cfg: LossConfig, cfg: TrainConfig, augment_name: str, extra=None):
    tag = method_tag(loss_cfg.variant, augment_name)
    torch.save(
        {
            "state_dict": result.best_state,
            "model": {"backbone": cfg.backbone, "width": cfg.width},
            "loss": asdict(loss_cfg),
            "train": asdict(cfg),
            "augment": augment_name,
            "tag": tag,
            "best_epoch": result.best_epoch,
            "log": [asdict(s) for s in result.history],
            "extra": extra or {},
        },
        path,
    )
    return tag


def load_model(path) -> tuple[MarkerNet, dict]:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    model = build_model(ckpt["model"]["backbone"], ckpt["model"]["width"])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt


def write_log(path, history: list[EpochStats]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for s in history:
            w.writerow([s.epoch, f"{s.train_loss:.6f}", f"{s.val_loss:.6f}", f"{s.val_class_acc:.4f}", f"{s.val_pixel_mae:.3f}"])


def read_log(path) -> list[EpochStats]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpochStats(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]), float(r["val_class_acc"]), float(r["val_pixel_mae"]))
        for r in rows
    ]


def train(
    dataset_manifest: DatasetManifest | str | Path,
    augmenter: Augmenter | str | None,
    loss_variant: str,
    cfg: TrainConfig,
    out_dir,
    loss_cfg: LossConfig | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> ModelCheckpoint:
    """Train on the manifest's ``train`` split, select on ``val``, write ``checkpoint.pt`` and the log."""
    manifest = dataset_manifest
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.load(manifest)
    train_recs, val_recs = manifest.split("train"), manifest.split("val")
    if not train_recs or not val_recs:
        raise ConfigError("dataset manifest needs both a train and a val split")
    if cfg.max_train is not None:
        train_recs = train_recs[: cfg.max_train]
    if isinstance(augmenter, str) or augmenter is None:
        augmenter = Augmenter(augmenter or "none")
    loss_cfg = loss_cfg or LossConfig(variant=loss_variant)
    if loss_cfg.variant != loss_variant:
        raise ConfigError("loss_variant disagrees with loss_cfg.variant")

    x_train, x_val = manifest.load_pixels(train_recs), manifest.load_pixels(val_recs)
    width = x_train.shape[-1]
    result = fit(
        x_train,
        targets_from_records(train_recs, width),
        x_val,
        targets_from_records(val_recs, width),
        augmenter if augmenter.name != "none" else None,
        loss_cfg,
        cfg,
        on_epoch,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_log(out / "training_log.csv", result.history)
    tag = save_checkpoint(out / "checkpoint.pt", result, loss_cfg, cfg, augmenter.name, {"dataset": str(manifest.root)})
    return ModelCheckpoint(out / "checkpoint.pt", tag, result.best_epoch, result.history)
