"""numpy implementations of the hot kernels (fallback backend).

Every function here has a signature-identical twin in the compiled
``_core`` extension. Inputs are C-contiguous float64 arrays; shape checks
live one level up in the tensor layer.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def bmm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def softmax_fwd(x: np.ndarray) -> np.ndarray:
    # rows of a 2D array; max-subtraction for overflow safety
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def layer_norm_fwd(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=1, keepdims=True)  # population variance
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    return xhat * gamma + beta, xhat, rstd[:, 0].copy()


def layer_norm_bwd(
    dy: np.ndarray, xhat: np.ndarray, gamma: np.ndarray, rstd: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dyg = dy * gamma
    m1 = dyg.mean(axis=1, keepdims=True)
    m2 = (dyg * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dyg - m1 - xhat * m2)
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    return dx, dgamma, dbeta


def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, dy, 0.0)


def adam_update(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    t: int,
) -> None:
    """Fused in-place Adam step with bias correction (flat float64 arrays)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
