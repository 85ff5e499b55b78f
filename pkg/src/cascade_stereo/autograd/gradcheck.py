"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, default_dtype


def numerical_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int, eps: float = 1e-4) -> np.ndarray:
    """d fn / d arrays[index] by central differences; ``fn`` must return a scalar Tensor."""
    base = [np.array(a, dtype=np.float64, copy=True) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(*[Tensor(a) for a in base]).item()
        flat[i] = orig - eps
        fm = fn(*[Tensor(a) for a in base]).item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def analytic_grads(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], eps: float = 1e-4,
              wrt: Sequence[int] | None = None) -> list[float]:
    """Relative error (norm-wise) between analytic and numerical gradients, per checked input.

    Runs at 64-bit regardless of the ambient default dtype.
    """
    with default_dtype(np.float64):
        analytic = analytic_grads(fn, arrays)
        idxs = range(len(arrays)) if wrt is None else wrt
        return [relative_error(analytic[i], numerical_grad(fn, arrays, i, eps)) for i in idxs]
