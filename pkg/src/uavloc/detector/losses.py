"""Detection + regression losses.

Both losses are evaluated in pixel units: normalised network outputs and
targets are multiplied by the input width before the Euclidean norms are
taken. ``loss_up`` divides the position term by the ground-truth diameter
and the diameter term by its square, so a pixel error counts in proportion
to the metric error it causes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from uavloc.detector.model import INPUT_SIZE, Prediction
from uavloc.errors import ConfigError, DataError

VARIANTS = ("base", "up")


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 10.0
    mu: float = 5.0
    variant: str = "base"
    width_px: int = INPUT_SIZE

    def __post_init__(self):
        if self.gamma <= 0 or self.mu <= 0:
            raise ConfigError("gamma and mu must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"loss variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class Targets:
    """Batched ground truth in normalised units (same convention as :class:`Prediction`)."""

    m: torch.Tensor  # (N,) in {0, 1}
    u: torch.Tensor
    v: torch.Tensor
    d: torch.Tensor
    q: torch.Tensor  # (N, 4), canonical w >= 0

    @classmethod
    def from_arrays(cls, m, u, v, d, q, dtype=torch.float32) -> "Targets":
        def t(a):
            return torch.as_tensor(np.asarray(a), dtype=dtype)

        return cls(t(m), t(u), t(v), t(d), t(q).reshape(-1, 4))

    def __getitem__(self, idx) -> "Targets":
        return Targets(self.m[idx], self.u[idx], self.v[idx], self.d[idx], self.q[idx])


def bce(m: torch.Tensor, m_logit: torch.Tensor) -> torch.Tensor:
    """Per-sample binary cross-entropy on logits (stable form)."""
    return F.binary_cross_entropy_with_logits(m_logit, m, reduction="none")


def regression_terms(pred: Prediction, truth: Targets, width_px: int = INPUT_SIZE):
    """Per-sample ``(L_c, L_d, L_q)`` with ``L_c``/``L_d`` in pixels."""
    du = (pred.u_hat - truth.u) * width_px
    dv = (pred.v_hat - truth.v) * width_px
    l_c = torch.linalg.vector_norm(torch.stack([du, dv], dim=1), dim=1)
    l_d = torch.abs(pred.d_hat - truth.d) * width_px
    l_q = torch.linalg.vector_norm(pred.q_hat - truth.q, dim=1)
    return l_c, l_d, l_q


def per_sample_loss(pred: Prediction, truth: Targets, cfg: LossConfig) -> torch.Tensor:
    l_c, l_d, l_q = regression_terms(pred, truth, cfg.width_px)
    eps = truth.m
    if cfg.variant == "up":
        d_px = truth.d * cfg.width_px
        if bool(((eps > 0) & ~(d_px > 0)).any()):
            raise DataError("the UP loss needs a positive ground-truth diameter for every marker sample")
        # negatives carry d = 0; their regression terms are multiplied by eps = 0 anyway
        d_px = torch.where(eps > 0, d_px, torch.ones_like(d_px))
        reg = cfg.gamma * l_c / d_px + cfg.mu * l_d / d_px**2 + l_q
    else:
        reg = cfg.gamma * l_c + cfg.mu * l_d + l_q
    return bce(truth.m, pred.m_logit) + eps * reg


def loss_base(pred: Prediction, truth: Targets, cfg: LossConfig | None = None) -> torch.Tensor:
    """Batch mean of ``BCE + eps * (gamma L_c + mu L_d + L_q)``."""
    cfg = cfg or LossConfig()
    return per_sample_loss(pred, truth, LossConfig(cfg.gamma, cfg.mu, "base", cfg.width_px)).mean()


def loss_up(pred: Prediction, truth: Targets, cfg: LossConfig | None = None) -> torch.Tensor:
    """Batch mean of ``BCE + eps * (gamma L_c / d + mu L_d / d^2 + L_q)`` with ground-truth ``d`` in pixels."""
    cfg = cfg or LossConfig(variant="up")
    return per_sample_loss(pred, truth, LossConfig(cfg.gamma, cfg.mu, "up", cfg.width_px)).mean()


def compute_loss(pred: Prediction, truth: Targets, cfg: LossConfig) -> torch.Tensor:
    return per_sample_loss(pred, truth, cfg).mean()
