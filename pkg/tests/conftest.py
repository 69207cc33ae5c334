import numpy as np
import pytest


def central_diff(f, arrays, h=1e-5):
    """Finite-difference gradients of scalar f(*arrays) wrt each array.

    Independent oracle: plain loops, no tape involvement.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(*arrays)
            flat[i] = orig - h
            fm = f(*arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def rel_err(analytic, fd):
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    return float(np.max(np.abs(analytic - fd) / (np.abs(fd) + 1e-8)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
