from .layers import LatentVariableLayer, SVGPLayer
from .model import DGPConfig, LVDGPModel, iwvi_bound
from .train import DGPTrainer, dgp_train

__all__ = [
    "DGPConfig",
    "DGPTrainer",
    "LVDGPModel",
    "LatentVariableLayer",
    "SVGPLayer",
    "dgp_train",
    "iwvi_bound",
]
