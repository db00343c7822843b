"""Central finite-difference gradient checking shared by the test modules."""

import numpy as np

from shuffleformer import backward, zero_grads


def fd_gradient(func, tensor, h=1e-5):
    """d func() / d tensor by central differences, entry by entry."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = float(func().data)
        flat[i] = keep - h
        down = float(func().data)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric):
    scale = max(1.0, float(np.abs(analytic).max()), float(np.abs(numeric).max()))
    return float(np.abs(analytic - numeric).max()) / scale


def check_gradients(func, tensors, h=1e-5, tol=1e-4):
    """Assert analytic gradients of scalar func() match finite differences.

    Every tensor must be float64 and have requires_grad set; returns the
    worst relative error across all checked tensors.
    """
    for t in tensors:
        assert t.dtype == np.float64, "gradient checks run in float64"
        assert t.requires_grad
    zero_grads(tensors)
    backward(func())
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "analytic gradient missing"
        numeric = fd_gradient(func, t, h)
        err = max_relative_error(t.grad, numeric)
        worst = max(worst, err)
    assert worst < tol, f"gradient mismatch: max relative error {worst:.3e} >= {tol}"
    return worst
