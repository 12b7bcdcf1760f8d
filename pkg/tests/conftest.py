"""Shared test helpers: finite-difference gradient checks and datasets."""

import numpy as np
import pytest

from cganlab.rng import RngStream
from cganlab.tensor import Tensor, backward


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function at array x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def assert_grads_match(build, *arrays, rtol=1e-4, atol=1e-6, h=1e-5):
    """Backprop through build(*tensors) and compare against finite differences.

    build must map Tensors of the given arrays to a scalar Tensor.
    """
    tensors = [Tensor(a) for a in arrays]
    loss = build(*tensors)
    backward(loss)
    for i, a in enumerate(arrays):
        def f(x, i=i):
            args = [Tensor(x if j == i else arr) for j, arr in enumerate(arrays)]
            return build(*args).item()

        analytic = tensors[i].grad
        assert analytic is not None, f"input {i} received no gradient"
        numeric = numeric_grad(f, np.array(a, dtype=np.float64), h=h)
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def projection(weights):
    """Reduce a non-scalar op output to a scalar via a fixed random projection."""
    w = Tensor(weights)

    def reduce(t):
        return (t * w).sum()

    return reduce


@pytest.fixture(scope="session")
def mixture_data():
    from cganlab.data import mixture_3x2
    return mixture_3x2()


@pytest.fixture(scope="session")
def digits_data(tmp_path_factory):
    from cganlab.data import tiny_digits3
    return tiny_digits3(tmp_path_factory.mktemp("digits-src"))


@pytest.fixture
def rng():
    return np.random.default_rng(4151)


@pytest.fixture
def stream():
    return RngStream(4151)
