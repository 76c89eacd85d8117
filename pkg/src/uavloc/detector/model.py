"""CNN backbones and the detection/regression heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from uavloc.errors import ConfigError, DataError

INPUT_SIZE = 299
BACKBONES = ("small-conv", "mobilenetv2-like")


@dataclass
class Prediction:
    """Batched detector outputs in normalised units (offsets and diameter divided by input width)."""

    m_hat: torch.Tensor  # (N,) probability
    m_logit: torch.Tensor  # (N,)
    u_hat: torch.Tensor  # (N,)
    v_hat: torch.Tensor
    d_hat: torch.Tensor  # (N,) > 0
    q_hat: torch.Tensor  # (N, 4)

    def __len__(self):
        return self.m_hat.shape[0]

    def detach(self) -> "Prediction":
        return Prediction(*(t.detach() for t in self.as_tuple()))

    def as_tuple(self):
        return self.m_hat, self.m_logit, self.u_hat, self.v_hat, self.d_hat, self.q_hat

    def to_numpy(self) -> dict[str, np.ndarray]:
        return {
            "m_hat": self.m_hat.detach().cpu().numpy(),
            "u_hat": self.u_hat.detach().cpu().numpy(),
            "v_hat": self.v_hat.detach().cpu().numpy(),
            "d_hat": self.d_hat.detach().cpu().numpy(),
            "q_hat": self.q_hat.detach().cpu().numpy(),
        }


def _conv(ci, co, stride=1, groups=1, k=3):
    return nn.Sequential(
        nn.Conv2d(ci, co, k, stride, k // 2, groups=groups, bias=False),
        nn.BatchNorm2d(co),
        nn.ReLU(inplace=True),
    )


def _coord_grid(h, w, device, dtype):
    ys = torch.linspace(-0.5, 0.5, h, device=device, dtype=dtype)
    xs = torch.linspace(-0.5, 0.5, w, device=device, dtype=dtype)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return gx, gy


class _InvertedResidual(nn.Module):
    def __init__(self, ci, co, stride, expand=4):
        super().__init__()
        hidden = ci * expand
        self.use_res = stride == 1 and ci == co
        self.block = nn.Sequential(
            _conv(ci, hidden, k=1),
            _conv(hidden, hidden, stride=stride, groups=hidden),
            nn.Conv2d(hidden, co, 1, bias=False),
            nn.BatchNorm2d(co),
        )

    def forward(self, x):
        y = self.block(x)
        return x + y if self.use_res else y


class MarkerNet(nn.Module):
    """Binary 299 x 299 image -> marker presence, hub offset, diameter, orientation.

    The input is average-pooled 2x, passed through a strided conv stack, and
    read out through a spatial soft-argmax (hub position) plus a pooled
    feature vector (presence, diameter, orientation and a position residual).
    """

    def __init__(self, backbone: str = "small-conv", width: int = 32):
        super().__init__()
        if backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {backbone!r}")
        self.backbone_name = backbone
        c = width
        if backbone == "small-conv":
            # 299 -> 149 -> 75 -> 38 -> 19
            self.stem = nn.Sequential(nn.AvgPool2d(2), _conv(1, c // 2, stride=2), _conv(c // 2, c, stride=2))
            self.mid = nn.Sequential(_conv(c + 2, 2 * c, stride=2), _conv(2 * c, 2 * c))
            self.deep = nn.Sequential(_conv(2 * c + 2, 4 * c, stride=2), _conv(4 * c, 4 * c))
        else:
            self.stem = nn.Sequential(
                nn.AvgPool2d(2),
                _conv(1, c // 2, stride=2),
                _InvertedResidual(c // 2, c, 2),
                _InvertedResidual(c, c, 1),
            )
            self.mid = nn.Sequential(_InvertedResidual(c + 2, 2 * c, 2), _InvertedResidual(2 * c, 2 * c, 1))
            self.deep = nn.Sequential(_InvertedResidual(2 * c + 2, 4 * c, 2), _InvertedResidual(4 * c, 4 * c, 1))
        self.heatmap = nn.Conv2d(2 * c, 1, 3, padding=1)
        # a coarse 3x3 layout of the deep features keeps arm directions (orientation) visible to the heads
        self.layout = nn.Sequential(nn.Conv2d(4 * c, c // 2, 1), nn.ReLU(inplace=True), nn.AdaptiveAvgPool2d(3))
        feat = 4 * c * 2 + 2 + (c // 2) * 9
        self.fc = nn.Sequential(nn.Linear(feat, 128), nn.ReLU(inplace=True))
        self.cls = nn.Linear(128, 1)
        self.reg = nn.Linear(128, 7)

    @staticmethod
    def _with_coords(x):
        gx, gy = _coord_grid(x.shape[2], x.shape[3], x.device, x.dtype)
        n = x.shape[0]
        return torch.cat([x, gx.expand(n, 1, -1, -1), gy.expand(n, 1, -1, -1)], dim=1)

    def forward(self, x: torch.Tensor) -> Prediction:
        if x.ndim != 4 or x.shape[1:] != (1, INPUT_SIZE, INPUT_SIZE):
            raise DataError(f"expected input of shape (N, 1, {INPUT_SIZE}, {INPUT_SIZE}), got {tuple(x.shape)}")
        f = self.stem(x)
        f = self.mid(self._with_coords(f))
        # soft-argmax over the stride-8 map gives a coarse hub position
        logits = self.heatmap(f).flatten(1)
        att = torch.softmax(logits, dim=1).view(-1, 1, f.shape[2], f.shape[3])
        gx, gy = _coord_grid(f.shape[2], f.shape[3], f.device, f.dtype)
        scale = (f.shape[3] - 1) * 8.0 / INPUT_SIZE
        soft_u = (att * gx).sum(dim=(1, 2, 3)) * scale
        soft_v = (att * gy).sum(dim=(1, 2, 3)) * scale
        g = self.deep(self._with_coords(f))
        pooled = torch.cat(
            [g.mean(dim=(2, 3)), g.amax(dim=(2, 3)), soft_u[:, None], soft_v[:, None], self.layout(g).flatten(1)], dim=1
        )
        h = self.fc(pooled)
        m_logit = self.cls(h).squeeze(1)
        r = self.reg(h)
        return Prediction(
            m_hat=torch.sigmoid(m_logit),
            m_logit=m_logit,
            u_hat=soft_u + 0.1 * r[:, 0],
            v_hat=soft_v + 0.1 * r[:, 1],
            d_hat=F.softplus(r[:, 2]) * 0.5 + 1e-4,
            q_hat=r[:, 3:7],
        )


class TinyNet(nn.Module):
    """Two-conv network with smooth activations, used for gradient checks."""

    def __init__(self, size: int = 12):
        super().__init__()
        self.size = size
        self.c1 = nn.Conv2d(1, 3, 3, stride=2, padding=1)
        self.c2 = nn.Conv2d(3, 4, 3, stride=2, padding=1)
        self.out = nn.Linear(4, 8)

    def forward(self, x: torch.Tensor) -> Prediction:
        h = torch.tanh(self.c2(torch.tanh(self.c1(x)))).mean(dim=(2, 3))
        r = self.out(h)
        return Prediction(
            m_hat=torch.sigmoid(r[:, 0]),
            m_logit=r[:, 0],
            u_hat=r[:, 1],
            v_hat=r[:, 2],
            d_hat=F.softplus(r[:, 3]) + 1e-3,
            q_hat=r[:, 4:8],
        )


def build_model(backbone: str = "small-conv", width: int = 32) -> MarkerNet:
    return MarkerNet(backbone, width)


def to_input(pixels: np.ndarray) -> torch.Tensor:
    """``(N, H, W)`` or ``(H, W)`` {0,1} uint8 images -> float tensor ``(N, 1, H, W)`` in [0, 1]."""
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = arr[None]
    return torch.from_numpy(arr.astype(np.float32))[:, None]
