import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from blendkit.tensor import Tensor
from blendkit.util.errors import DimensionError, NumericError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Adam moments for a named parameter set.

    m(t) = b1 * m(t-1) + (1 - b1) * g
    v(t) = b2 * v(t-1) + (1 - b2) * g**2
    theta(t) = theta(t-1) - lr * m_hat / (sqrt(v_hat) + eps)
    with m_hat = m / (1 - b1**t), v_hat = v / (1 - b2**t).
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.99, eps: float = 1e-8) -> "AdamState":
        state = cls(lr, beta1, beta2, eps)
        for name, param in params.items():
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        return state


def adam_step(state: AdamState, params: Dict[str, Tensor]) -> None:
    """Apply one bias-corrected Adam update in place using each parameter's ``grad``.

    A parameter without a gradient is treated as having a zero gradient.

    Raises:
        NumericError: If any gradient is non-finite; no parameter is touched.
        DimensionError: If a parameter does not match its moment buffers.
    """
    grads = {}
    for name, param in params.items():
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        if name not in state.m or state.m[name].shape != param.shape:
            raise DimensionError(f"adam_step: no moment buffer of shape {param.shape} for '{name}'")
        if not np.all(np.isfinite(grad)):
            bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
            raise NumericError(f"adam_step: gradient of '{name}' has {bad} non-finite values at step {state.step + 1}")
        grads[name] = grad

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def global_grad_norm(params: Dict[str, Tensor]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values() if p.grad is not None))


def clip_grad_norm(params: Dict[str, Tensor], max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns:
        float: The norm before clipping.
    """
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for param in params.values():
            if param.grad is not None:
                param.grad *= scale
        logger.debug(f"Clipped gradient norm {norm:.4f} to {max_norm}")
    return norm
