"""
Relevance weighting
A single two-layer scorer shared by every time-frequency bin maps the 102
neighbouring log energies of a sub-band (51 past + 51 future frames, center
excluded, edges replicated) to a mask value in (0, 1). J = I * M.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from cosgauss_frontend.errors import ShapeMismatchError
from cosgauss_frontend.nn_core.dense import Dense, dense_backward, dense_forward

CONTEXT_FRAMES = 51
CONTEXT_DIM = 2 * CONTEXT_FRAMES

# expit is exactly 1.0 in double precision beyond ~37; keep the mask open
LOGIT_LIMIT = 30.0


@dataclass
class RelevanceNet:
    hidden: Dense
    output: Dense

    @classmethod
    def init(cls, n_hidden: int, rng: np.random.Generator) -> "RelevanceNet":
        return cls(hidden=Dense.init(CONTEXT_DIM, n_hidden, rng), output=Dense.init(n_hidden, 1, rng))

    @classmethod
    def zeros(cls, n_hidden: int = 51) -> "RelevanceNet":
        return cls(hidden=Dense.zeros(CONTEXT_DIM, n_hidden), output=Dense.zeros(n_hidden, 1))

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.hidden.W, "b1": self.hidden.b, "W2": self.output.W, "b2": self.output.b}


@dataclass
class RelevanceCache:
    I: np.ndarray
    index: np.ndarray
    context: np.ndarray
    hidden: np.ndarray
    hidden_in: np.ndarray
    logits: np.ndarray
    mask: np.ndarray


def context_index(T: int) -> np.ndarray:
    """T x 102 frame indices of each frame's neighbours, clipped to [0, T-1]"""
    offsets = np.concatenate([np.arange(-CONTEXT_FRAMES, 0), np.arange(1, CONTEXT_FRAMES + 1)])
    return np.clip(np.arange(T)[:, None] + offsets[None, :], 0, T - 1)


def extract_context(I: np.ndarray, t: int, i: int) -> np.ndarray:
    """I[i, t-51 .. t-1] followed by I[i, t+1 .. t+51], edge-replicated"""
    F, T = I.shape
    if not (0 <= t < T and 0 <= i < F):
        raise IndexError(f"bin ({i}, {t}) outside a {F} x {T} spectrogram")
    return I[i, context_index(T)[t]]


def relevance_forward(I: np.ndarray, net: RelevanceNet) -> tuple[np.ndarray, RelevanceCache]:
    """Mask M (F x T) with m = sigmoid(W2' tanh(W1' ctx + b1) + b2) per bin"""
    if net.hidden.n_in != CONTEXT_DIM or net.output.n_in != net.hidden.n_out or net.output.n_out != 1:
        raise ShapeMismatchError("relevance net must map 102 -> H -> 1")
    F, T = I.shape
    index = context_index(T)
    context = I[:, index].reshape(F * T, CONTEXT_DIM)

    pre_hidden, hidden_in = dense_forward(context, net.hidden)
    hidden = np.tanh(pre_hidden)
    logits, _ = dense_forward(hidden, net.output)
    logits = np.clip(logits[:, 0], -LOGIT_LIMIT, LOGIT_LIMIT)
    mask = expit(logits).reshape(F, T)

    return mask, RelevanceCache(I=I, index=index, context=context, hidden=hidden,
                                hidden_in=hidden_in, logits=logits, mask=mask)


def apply_mask(I: np.ndarray, M: np.ndarray) -> np.ndarray:
    if I.shape != M.shape:
        raise ShapeMismatchError(f"spectrogram {I.shape} and mask {M.shape} differ in shape")
    return I * M


def relevance_backward(grad_J: np.ndarray, cache: RelevanceCache,
                       net: RelevanceNet) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """
    Gradients of J = I * M(I) with respect to I and the scorer parameters

    I receives the direct term grad_J * M plus the contributions that reach it
    through every context window it appears in.
    """
    F, T = cache.mask.shape
    if grad_J.shape != (F, T):
        raise ShapeMismatchError(f"grad_J has shape {grad_J.shape}, expected {(F, T)}")

    grad_I = grad_J * cache.mask
    grad_mask = (grad_J * cache.I).reshape(F * T)

    saturated = np.abs(cache.logits) >= LOGIT_LIMIT
    m = cache.mask.reshape(F * T)
    grad_logits = np.where(saturated, 0.0, grad_mask * m * (1 - m))[:, None]

    grad_hidden, out_grads = dense_backward(grad_logits, cache.hidden, net.output)
    grad_pre_hidden = grad_hidden * (1 - cache.hidden ** 2)
    grad_context, hidden_grads = dense_backward(grad_pre_hidden, cache.hidden_in, net.hidden)

    rows = np.broadcast_to(np.arange(F)[:, None, None], (F, T, CONTEXT_DIM))
    cols = np.broadcast_to(cache.index[None, :, :], (F, T, CONTEXT_DIM))
    np.add.at(grad_I, (rows, cols), grad_context.reshape(F, T, CONTEXT_DIM))

    grads = {"W1": hidden_grads["W"], "b1": hidden_grads["b"], "W2": out_grads["W"], "b2": out_grads["b"]}
    return grad_I, grads
