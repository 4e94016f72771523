"""
LSTM and bidirectional LSTM with backpropagation through time
Gate columns in W are ordered [input | forget | output | candidate];
W stacks the input rows (D) above the recurrent rows (Hc).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from cosgauss_frontend.errors import EmptySequenceError, ShapeMismatchError


@dataclass
class LstmCell:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, n_in: int, n_hidden: int, rng: np.random.Generator) -> "LstmCell":
        bound = 1.0 / np.sqrt(n_in + n_hidden)
        W = rng.uniform(-bound, bound, size=(n_in + n_hidden, 4 * n_hidden))
        b = np.zeros(4 * n_hidden)
        b[n_hidden:2 * n_hidden] = 1.0  # forget gate
        return cls(W=W, b=b)

    @classmethod
    def zeros(cls, n_in: int, n_hidden: int) -> "LstmCell":
        return cls(W=np.zeros((n_in + n_hidden, 4 * n_hidden)), b=np.zeros(4 * n_hidden))

    @property
    def n_hidden(self) -> int:
        return self.b.shape[0] // 4

    @property
    def n_in(self) -> int:
        return self.W.shape[0] - self.n_hidden

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


@dataclass
class LstmCache:
    X: np.ndarray
    H_prev: np.ndarray
    C_prev: np.ndarray
    gates: np.ndarray
    tanh_C: np.ndarray
    reverse: bool


def _activate(a: np.ndarray, n_hidden: int) -> np.ndarray:
    gates = np.empty_like(a)
    gates[..., :3 * n_hidden] = expit(a[..., :3 * n_hidden])
    gates[..., 3 * n_hidden:] = np.tanh(a[..., 3 * n_hidden:])
    return gates


def _check_input(x: np.ndarray, cell: LstmCell) -> None:
    if x.shape[-1] != cell.n_in:
        raise ShapeMismatchError(f"LSTM input has {x.shape[-1]} features, cell expects {cell.n_in}")


def lstm_step(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, cell: LstmCell) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM update with sigmoid gates and tanh candidate / output nonlinearity"""
    _check_input(x_t, cell)
    Hc = cell.n_hidden
    if h_prev.shape != (Hc,) or c_prev.shape != (Hc,):
        raise ShapeMismatchError(f"LSTM state must have shape ({Hc},)")
    gates = _activate(np.concatenate([x_t, h_prev]) @ cell.W + cell.b, Hc)
    i, f, o, g = np.split(gates, 4)
    c_t = f * c_prev + i * g
    return o * np.tanh(c_t), c_t


def lstm_forward(X: np.ndarray, cell: LstmCell, reverse: bool = False) -> tuple[np.ndarray, LstmCache]:
    """
    Run the cell over a T x D sequence from zero initial state

    With reverse=True the sequence is consumed from the last step to the first;
    outputs are always returned in the original time order.
    """
    if X.shape[0] == 0:
        raise EmptySequenceError("LSTM received an empty sequence")
    _check_input(X, cell)
    T, D = X.shape
    Hc = cell.n_hidden
    Wx, Wh = cell.W[:D], cell.W[D:]
    input_part = X @ Wx + cell.b

    H = np.zeros((T, Hc))
    C = np.zeros((T, Hc))
    H_prev = np.zeros((T, Hc))
    C_prev = np.zeros((T, Hc))
    gates = np.zeros((T, 4 * Hc))

    h, c = np.zeros(Hc), np.zeros(Hc)
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        H_prev[t], C_prev[t] = h, c
        gates[t] = _activate(input_part[t] + h @ Wh, Hc)
        i, f, o, g = np.split(gates[t], 4)
        c = f * c + i * g
        h = o * np.tanh(c)
        H[t], C[t] = h, c

    return H, LstmCache(X=X, H_prev=H_prev, C_prev=C_prev, gates=gates, tanh_C=np.tanh(C), reverse=reverse)


def lstm_backward(grad_H: np.ndarray, cache: LstmCache, cell: LstmCell) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """BPTT: gradients with respect to the input sequence and the cell parameters"""
    T, Hc = grad_H.shape
    if cache.gates.shape[0] != T or Hc != cell.n_hidden:
        raise ShapeMismatchError(f"upstream gradient {grad_H.shape} does not match the cached sequence")
    D = cell.n_in
    Wx, Wh = cell.W[:D], cell.W[D:]

    grad_a = np.zeros((T, 4 * Hc))
    dh_next, dc_next = np.zeros(Hc), np.zeros(Hc)
    order = range(T) if cache.reverse else range(T - 1, -1, -1)
    for t in order:
        i, f, o, g = np.split(cache.gates[t], 4)
        tanh_c = cache.tanh_C[t]
        dh = grad_H[t] + dh_next
        dc = dc_next + dh * o * (1 - tanh_c ** 2)

        grad_a[t, :Hc] = dc * g * i * (1 - i)
        grad_a[t, Hc:2 * Hc] = dc * cache.C_prev[t] * f * (1 - f)
        grad_a[t, 2 * Hc:3 * Hc] = dh * tanh_c * o * (1 - o)
        grad_a[t, 3 * Hc:] = dc * i * (1 - g ** 2)

        dh_next = grad_a[t] @ Wh.T
        dc_next = dc * f

    grads = {
        "W": np.vstack([cache.X.T @ grad_a, cache.H_prev.T @ grad_a]),
        "b": grad_a.sum(axis=0),
    }
    return grad_a @ Wx.T, grads


@dataclass
class BiLstm:
    """A forward and a backward cell reading the same input"""
    fwd: LstmCell
    bwd: LstmCell

    @classmethod
    def init(cls, n_in: int, n_hidden: int, rng: np.random.Generator) -> "BiLstm":
        return cls(fwd=LstmCell.init(n_in, n_hidden, rng), bwd=LstmCell.init(n_in, n_hidden, rng))

    @classmethod
    def zeros(cls, n_in: int, n_hidden: int) -> "BiLstm":
        return cls(fwd=LstmCell.zeros(n_in, n_hidden), bwd=LstmCell.zeros(n_in, n_hidden))

    def params(self) -> dict[str, np.ndarray]:
        return {"fwd.W": self.fwd.W, "fwd.b": self.fwd.b, "bwd.W": self.bwd.W, "bwd.b": self.bwd.b}


@dataclass
class BiLstmCache:
    forward: LstmCache
    backward: LstmCache


def bilstm_forward(X: np.ndarray, fwd: LstmCell, bwd: LstmCell) -> tuple[np.ndarray, BiLstmCache]:
    """T x 2Hc outputs: forward states next to the (time-aligned) backward states"""
    if X.shape[0] == 0:
        raise EmptySequenceError("BiLSTM received an empty sequence")
    H_f, cache_f = lstm_forward(X, fwd)
    H_b, cache_b = lstm_forward(X, bwd, reverse=True)
    return np.concatenate([H_f, H_b], axis=1), BiLstmCache(cache_f, cache_b)


def bilstm_backward(grad_out: np.ndarray, cache: BiLstmCache, fwd: LstmCell,
                    bwd: LstmCell) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    Hf = fwd.n_hidden
    dX_f, grads_f = lstm_backward(grad_out[:, :Hf], cache.forward, fwd)
    dX_b, grads_b = lstm_backward(grad_out[:, Hf:], cache.backward, bwd)
    grads = {f"fwd.{k}": v for k, v in grads_f.items()}
    grads.update({f"bwd.{k}": v for k, v in grads_b.items()})
    return dX_f + dX_b, grads
