"""
Finite-difference gradient checker
Central differences against an analytic gradient, reporting the worst
relative error |a - n| / max(|a|, |n|, floor).
"""

from collections.abc import Callable

import numpy as np

from cosgauss_frontend.errors import GradientCheckError, ShapeMismatchError


def _evaluate(f: Callable[[], float]) -> float:
    value = float(f())
    if not np.isfinite(value):
        raise GradientCheckError(f"objective returned non-finite value {value}")
    return value


def numeric_gradient(f: Callable[[], float], param: np.ndarray, index: tuple, h: float) -> float:
    original = param[index]
    param[index] = original + h
    plus = _evaluate(f)
    param[index] = original - h
    minus = _evaluate(f)
    param[index] = original
    return (plus - minus) / (2 * h)


def grad_check(f: Callable[[], float], params: dict[str, np.ndarray], analytic: dict[str, np.ndarray],
               h: float = 1e-5, abs_floor: float = 1e-8, max_entries: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """
    Worst relative error between analytic and central-difference gradients

    Args:
        f: zero-argument objective that reads the arrays in params
        params: named arrays, perturbed in place and restored after each probe
        analytic: gradients for (a subset of) the names in params
        max_entries: probe at most this many randomly chosen entries per array

    Raises:
        GradientCheckError: the objective is not finite at a probe point
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name in sorted(analytic):
        param, grad = params[name], analytic[name]
        if param.shape != grad.shape:
            raise ShapeMismatchError(f"{name}: gradient shape {grad.shape} != parameter shape {param.shape}")

        indices = list(np.ndindex(param.shape))
        if max_entries is not None and len(indices) > max_entries:
            chosen = rng.choice(len(indices), size=max_entries, replace=False)
            indices = [indices[k] for k in sorted(chosen)]

        for index in indices:
            numeric = numeric_gradient(f, param, index, h)
            a = float(grad[index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), abs_floor)
            worst = max(worst, error)
    return worst
