"""Drug-pair synergy classification with cell-conditioned graph encoders and dual-attention pooling."""

from .config import ModelConfig, RunConfig, TrainConfig
from .model import ADGSyn, load_model, save_model
from .tensor import AMP_POLICY, FULL_PRECISION, Precision, PrecisionPolicy, Tape, Tensor, autocast

__version__ = "0.1.0"

__all__ = [
    "ADGSyn", "AMP_POLICY", "FULL_PRECISION", "ModelConfig", "Precision", "PrecisionPolicy", "RunConfig",
    "Tape", "Tensor", "TrainConfig", "autocast", "load_model", "save_model",
]
