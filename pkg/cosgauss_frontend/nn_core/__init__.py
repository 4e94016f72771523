from cosgauss_frontend.nn_core.adam import AdamState, adam_update
from cosgauss_frontend.nn_core.dense import Dense, dense_backward, dense_forward
from cosgauss_frontend.nn_core.grad_check import grad_check
from cosgauss_frontend.nn_core.losses import bce_loss, info_nce_loss
from cosgauss_frontend.nn_core.lstm import (
    BiLstm,
    LstmCell,
    bilstm_backward,
    bilstm_forward,
    lstm_backward,
    lstm_forward,
    lstm_step,
)

__all__ = [
    "AdamState",
    "BiLstm",
    "Dense",
    "LstmCell",
    "adam_update",
    "bce_loss",
    "bilstm_backward",
    "bilstm_forward",
    "dense_backward",
    "dense_forward",
    "grad_check",
    "info_nce_loss",
    "lstm_backward",
    "lstm_forward",
    "lstm_step",
]
