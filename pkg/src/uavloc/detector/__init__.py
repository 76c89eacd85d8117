from uavloc.detector.losses import LossConfig, Targets, compute_loss, loss_base, loss_up
from uavloc.detector.model import MarkerNet, Prediction, build_model

__all__ = ["LossConfig", "MarkerNet", "Prediction", "Targets", "build_model", "compute_loss", "loss_base", "loss_up"]
