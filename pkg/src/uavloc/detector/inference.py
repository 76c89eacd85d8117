"""Batched inference wrapper returning window-pixel quantities."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from uavloc.detector.model import INPUT_SIZE, MarkerNet, to_input
from uavloc.detector.train import load_model
from uavloc.geometry import canonical_quaternion


class Detector:
    """Callable ``(N, 299, 299)`` binary array -> dict of ``m_hat``, ``u``, ``v``, ``d``, ``q``.

    ``u``/``v`` are hub offsets from the window centre and ``d`` the diameter,
    all in window pixels; ``q`` is normalised with ``w >= 0``.
    """

    def __init__(self, model: MarkerNet, batch_size: int = 64, tag: str = ""):
        self.model = model.eval()
        self.batch_size = batch_size
        self.tag = tag

    @classmethod
    def load(cls, path: str | Path, batch_size: int = 64) -> "Detector":
        model, ckpt = load_model(path)
        return cls(model, batch_size, ckpt.get("tag", ""))

    @torch.no_grad()
    def __call__(self, rois: np.ndarray) -> dict[str, np.ndarray]:
        rois = np.asarray(rois)
        if rois.ndim == 2:
            rois = rois[None]
        outs = [self.model(to_input(rois[i : i + self.batch_size])).to_numpy() for i in range(0, len(rois), self.batch_size)]
        cat = {k: np.concatenate([o[k] for o in outs]) for k in outs[0]}
        q = np.array([canonical_quaternion(row) if np.linalg.norm(row) > 0 else (1.0, 0.0, 0.0, 0.0) for row in cat["q_hat"]])
        return {
            "m_hat": cat["m_hat"],
            "u": cat["u_hat"] * INPUT_SIZE,
            "v": cat["v_hat"] * INPUT_SIZE,
            "d": cat["d_hat"] * INPUT_SIZE,
            "q": q.reshape(-1, 4),
        }
