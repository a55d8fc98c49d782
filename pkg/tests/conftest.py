"""Shared test helpers: finite-difference gradient checking."""

import numpy as np
import pytest

from tactloc import nn


def finite_difference_gradients(params, loss_fn, h=1e-5):
    """Central finite differences of loss_fn w.r.t. every parameter."""
    grads = {}
    for name, t in params.entries.items():
        fd = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with nn.no_grad():
                lp = loss_fn().item()
            flat[i] = orig - h
            with nn.no_grad():
                lm = loss_fn().item()
            flat[i] = orig
            fd_flat[i] = (lp - lm) / (2 * h)
        grads[name] = fd
    return grads


def assert_gradients_match(params, loss_fn, rel_tol=1e-4, h=1e-5):
    """Backprop loss_fn once and compare every parameter gradient against
    central finite differences at the given relative tolerance."""
    params.zero_grad()
    loss = loss_fn()
    nn.backward(loss)
    analytic = {name: t.grad.copy() for name, t in params.entries.items()}
    numeric = finite_difference_gradients(params, loss_fn, h=h)
    for name in params.entries:
        an, fd = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-6)
        rel = np.abs(an - fd) / denom
        worst = rel.max()
        assert worst < rel_tol, f"{name}: rel err {worst:.2e} (analytic vs finite differences)"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
