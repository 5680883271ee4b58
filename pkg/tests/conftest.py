import numpy as np
import pytest


def central_diff(loss_fn, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of loss_fn at params (flat array)."""
    grad = np.zeros_like(params, dtype=np.float64)
    for i in range(params.size):
        bump = np.zeros_like(params)
        bump.flat[i] = h
        grad.flat[i] = (loss_fn(params + bump) - loss_fn(params - bump)) / (2 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-based relative error between two gradient estimates."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
