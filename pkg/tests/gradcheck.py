"""Central finite-difference gradient oracle used across the numerics tests.

The oracle never touches the reverse-mode tape: it perturbs raw numpy
buffers and re-runs the forward function, so it stays independent of
the code path it checks.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from comment_classifier.tensor import Tensor, backward


def finite_difference_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing x in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        f_plus = f()
        flat[i] = original - h
        f_minus = f()
        flat[i] = original
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(approx: np.ndarray, reference: np.ndarray) -> float:
    """Inf-norm error scaled by the larger magnitude; absolute when both are ~0."""
    diff = float(np.max(np.abs(approx - reference)))
    scale = max(float(np.max(np.abs(approx))), float(np.max(np.abs(reference))))
    if scale < 1e-10:
        return diff
    return diff / scale


def check_gradient(
    make_loss: Callable[[list[Tensor]], Tensor],
    inputs: list[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and the finite-difference oracle.

    ``make_loss`` must build a fresh scalar loss from the given tensors
    each call; the same numpy buffers back both the tape run and the
    oracle's perturbed reruns.
    """
    tensors = [Tensor(arr, requires_grad=True, dtype=arr.dtype) for arr in inputs]
    # The tensors alias the caller's arrays so the oracle can perturb them.
    for t, arr in zip(tensors, inputs):
        t.data = arr

    loss = make_loss(tensors)
    backward(loss)
    tape_grads = [t.grad.copy() for t in tensors]

    def scalar_loss() -> float:
        fresh = [Tensor(arr, requires_grad=False, dtype=arr.dtype) for arr in inputs]
        for t, arr in zip(fresh, inputs):
            t.data = arr
        return float(make_loss(fresh).data)

    worst = 0.0
    for arr, tape_grad in zip(inputs, tape_grads):
        fd = finite_difference_grad(scalar_loss, arr, h=h)
        worst = max(worst, relative_error(tape_grad.astype(np.float64), fd))
    return worst
