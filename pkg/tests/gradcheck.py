"""Central finite differences for checking analytic gradients."""

import numpy as np

H = 1e-5


def numerical_grad(f, arr, h=H, indices=None):
    """Central-difference gradient of scalar ``f()`` w.r.t. entries of ``arr`` (mutated in place)."""
    flat = arr.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = {}
    for i in indices:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out


def rel_error(analytic, numeric, floor=1e-6):
    """Norm-wise relative error; ``floor`` keeps identically-zero gradients from dividing round-off by round-off."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)


def check_tensor_grad(loss_fn, tensor, max_entries=None, rng=None):
    """Relative error between ``tensor.grad`` from backward and finite differences.

    ``loss_fn`` rebuilds the graph and returns a scalar Tensor. The zero floor
    scales with the loss value, since finite-difference noise does too.
    """
    tensor.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = tensor.grad.reshape(-1).copy()
    size = tensor.data.size
    if max_entries is not None and size > max_entries:
        rng = rng or np.random.default_rng(0)
        idx = np.sort(rng.choice(size, max_entries, replace=False))
    else:
        idx = np.arange(size)
    num = numerical_grad(lambda: float(loss_fn().data), tensor.data, indices=idx)
    floor = 1e-6 * max(1.0, abs(float(loss.data)))
    return rel_error(analytic[idx], np.array([num[i] for i in idx]), floor=floor)
