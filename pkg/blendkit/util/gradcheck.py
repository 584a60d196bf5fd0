"""
Central finite-difference gradient checks.

    errors = check_gradients(lambda: total(tanh(matmul(w, x))), {"w": w})
    assert max(errors.values()) <= 1e-4
"""

from typing import Callable, Dict

import numpy as np

from blendkit.tensor import Tensor, no_grad, zero_grads

DEFAULT_EPS = 1e-5


def numeric_grad(fn: Callable[[], Tensor], param: Tensor, eps: float = DEFAULT_EPS) -> np.ndarray:
    """d fn() / d param by central differences, perturbing one element at a time in place."""
    grad = np.zeros_like(param.data)
    with no_grad():
        for index in np.ndindex(*param.shape):
            original = param.data[index]
            param.data[index] = original + eps
            plus = fn().item()
            param.data[index] = original - eps
            minus = fn().item()
            param.data[index] = original
            grad[index] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / (||a|| + ||n||); 0 when both vanish."""
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[[], Tensor], params: Dict[str, Tensor],
                    eps: float = DEFAULT_EPS) -> Dict[str, float]:
    """Relative error between backward() and central differences for every named parameter.

    Args:
        fn: Builds the scalar output from the current parameter values.
        params: Leaves to check; each must have requires_grad.
        eps: Finite-difference step.

    Returns:
        Dict[str, float]: parameter name -> relative error.
    """
    zero_grads(params.values())
    fn().backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}
    zero_grads(params.values())
    return {name: relative_error(analytic[name], numeric_grad(fn, p, eps)) for name, p in params.items()}
