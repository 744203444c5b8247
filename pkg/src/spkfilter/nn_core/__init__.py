"""Differentiable-network primitives: tape autodiff, FC/LSTM layers, Adam."""

from .tape import (
    Tape,
    Tensor,
    backward,
    softmax,
    tape_active,
)
from .layers import (
    Fc,
    Lstm,
    LstmStack,
    LstmState,
    fc_forward,
    lstm_step,
)
from .optim import AdamState, ParamGroup, adam_step, GROUP_LABELS
from .gradcheck import grad_check

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "softmax",
    "tape_active",
    "Fc",
    "Lstm",
    "LstmStack",
    "LstmState",
    "fc_forward",
    "lstm_step",
    "AdamState",
    "ParamGroup",
    "adam_step",
    "GROUP_LABELS",
    "grad_check",
]
