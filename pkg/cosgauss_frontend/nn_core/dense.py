from dataclasses import dataclass

import numpy as np

from cosgauss_frontend.errors import ShapeMismatchError


@dataclass
class Dense:
    """Affine layer y = x @ W + b, with W stored as in x out"""
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "Dense":
        bound = 1.0 / np.sqrt(n_in)
        return cls(W=rng.uniform(-bound, bound, size=(n_in, n_out)), b=np.zeros(n_out))

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "Dense":
        return cls(W=np.zeros((n_in, n_out)), b=np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


def dense_forward(x: np.ndarray, layer: Dense) -> tuple[np.ndarray, np.ndarray]:
    """Apply the layer over the last axis of x; the input is the cache"""
    if x.shape[-1] != layer.n_in:
        raise ShapeMismatchError(f"dense input has {x.shape[-1]} features, layer expects {layer.n_in}")
    return x @ layer.W + layer.b, x


def dense_backward(grad_y: np.ndarray, x: np.ndarray, layer: Dense) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gradients with respect to the input and to W, b (summed over leading axes)"""
    if grad_y.shape[-1] != layer.n_out:
        raise ShapeMismatchError(f"dense upstream gradient has {grad_y.shape[-1]} features, expected {layer.n_out}")
    x2 = x.reshape(-1, layer.n_in)
    g2 = grad_y.reshape(-1, layer.n_out)
    grads = {"W": x2.T @ g2, "b": g2.sum(axis=0)}
    return grad_y @ layer.W.T, grads
