"""Finite-difference verification of reverse-mode gradients."""

import numpy as np

from .tensor import Tensor, no_grad


def check_gradients(f, inputs, eps=1e-5, max_coords_per_input=None, rng=None):
    """Compare backward() gradients of a scalar program against central
    finite differences.

    f: callable taking the Tensors in `inputs`, returning a scalar Tensor.
       Must be deterministic across calls.
    inputs: list of Tensors with requires_grad=True to be checked.
    max_coords_per_input: cap on probed coordinates per tensor (random
       subset drawn from rng); None checks every coordinate.

    Returns max over probed coordinates of |g_ad - g_fd| / max(1, |g_fd|).
    """
    for t in inputs:
        t.zero_grad()
    loss = f(*inputs)
    if loss.data.size != 1:
        raise ValueError("check_gradients requires a scalar-valued program")
    loss.backward()
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    if rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for t, g_ad in zip(inputs, grads):
        n = t.data.size
        if max_coords_per_input is not None and n > max_coords_per_input:
            coords = rng.choice(n, size=max_coords_per_input, replace=False)
        else:
            coords = range(n)
        flat = t.data.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            with no_grad():
                f_plus = f(*inputs).item()
            flat[c] = orig - eps
            with no_grad():
                f_minus = f(*inputs).item()
            flat[c] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(g_ad.reshape(-1)[c] - g_fd) / max(1.0, abs(g_fd))
            if err > worst:
                worst = err
    return worst
