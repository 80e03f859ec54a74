"""LSTM, CNN and ConvLSTM models and their training loop."""

from firedanger.neural.models import (
    ARCHITECTURES,
    MODALITY_OF,
    CNNConfig,
    CNNModel,
    ConvLSTMConfig,
    ConvLSTMModel,
    LSTMConfig,
    LSTMModel,
    Model,
    build_model,
)
from firedanger.neural.train import (
    REFERENCE_HYPERPARAMETERS,
    TrainConfig,
    TrainResult,
    load_model,
    predict_logits,
    predict_proba,
    save_model,
    train,
)

__all__ = [
    "ARCHITECTURES",
    "CNNConfig",
    "CNNModel",
    "ConvLSTMConfig",
    "ConvLSTMModel",
    "LSTMConfig",
    "LSTMModel",
    "MODALITY_OF",
    "Model",
    "REFERENCE_HYPERPARAMETERS",
    "TrainConfig",
    "TrainResult",
    "build_model",
    "load_model",
    "predict_logits",
    "predict_proba",
    "save_model",
    "train",
]
