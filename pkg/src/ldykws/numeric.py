"""Dense-array numerics: the finite-difference gradient oracle and Adam.

Arrays are plain float64 numpy ndarrays.  Everything here is pure: callers
get new arrays/states back and own all mutation.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import ContractViolation, OracleError


def relative_error(a, b):
    """Elementwise max of |a-b| / max(|a|, |b|, 1e-8).  Robust near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def finite_difference_gradient(f, x, eps=1e-5):
    """Central-difference gradient of a scalar function f at x.

    Runs in float64 regardless of what the caller hands in; central
    differences have no usable signal in float32.
    """
    if eps <= 0:
        raise ContractViolation(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        fp = float(f(xp))
        xm = x.copy()
        xm[idx] -= eps
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(
                f"non-finite oracle value at coordinate {idx}: "
                f"f(x+eps)={fp}, f(x-eps)={fm}"
            )
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad


@dataclass(frozen=True)
class AdamState:
    """Per-parameter Adam moments.  m/v shapes always match the parameter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, param, beta1=0.9, beta2=0.999, epsilon=1e-8):
        param = np.asarray(param)
        return cls(
            m=np.zeros_like(param, dtype=np.float64),
            v=np.zeros_like(param, dtype=np.float64),
            step=0,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(param, grad, state, lr):
    """One Adam update with bias correction.  Returns (new_param, new_state)."""
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ContractViolation(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"moments {state.m.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise ContractViolation("non-finite gradient; update rejected")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_param = param - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_param, replace(state, m=m, v=v, step=step)
