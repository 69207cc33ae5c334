"""Cross-backend parity: the compiled kernels must agree with the numpy
fallback to float64 round-off on random inputs."""

import numpy as np
import pytest

from stressformer.kernels import available_backends, pylib

BACKENDS = available_backends()
compiled = BACKENDS.get("compiled")

pytestmark = pytest.mark.skipif(
    compiled is None, reason="compiled kernel extension not built"
)


def _close(a, b, tol=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b) / (np.abs(b) + 1e-300)) < tol or np.allclose(
        a, b, atol=1e-300
    )


@pytest.mark.parametrize("seed", range(5))
def test_matmul_parity(seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(17, 9))
    b = r.normal(size=(9, 13))
    _close(compiled.matmul(a, b), pylib.matmul(a, b), tol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_bmm_parity(seed):
    r = np.random.default_rng(10 + seed)
    a = r.normal(size=(4, 6, 5))
    b = r.normal(size=(4, 5, 7))
    _close(compiled.bmm(a, b), pylib.bmm(a, b), tol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_softmax_parity(seed):
    r = np.random.default_rng(20 + seed)
    x = r.normal(size=(8, 11)) * 5.0
    yc, yp = compiled.softmax_fwd(x), pylib.softmax_fwd(x)
    _close(yc, yp, tol=1e-12)
    dy = r.normal(size=x.shape)
    _close(compiled.softmax_bwd(yc, dy), pylib.softmax_bwd(yp, dy), tol=1e-10)


def test_softmax_parity_extreme_values():
    x = np.array([[1000.0, 1000.0], [-1000.0, 1000.0]])
    yc, yp = compiled.softmax_fwd(x), pylib.softmax_fwd(x)
    assert np.all(np.isfinite(yc))
    _close(yc, yp, tol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_layer_norm_parity(seed):
    r = np.random.default_rng(30 + seed)
    x = r.normal(size=(6, 10)) * 3.0
    gamma, beta = r.normal(size=10), r.normal(size=10)
    yc, xhc, rsc = compiled.layer_norm_fwd(x, gamma, beta, 1e-5)
    yp, xhp, rsp = pylib.layer_norm_fwd(x, gamma, beta, 1e-5)
    _close(yc, yp, tol=1e-10)
    _close(xhc, xhp, tol=1e-10)
    _close(rsc, rsp, tol=1e-12)
    dy = r.normal(size=x.shape)
    dc = compiled.layer_norm_bwd(dy, xhc, gamma, rsc)
    dp = pylib.layer_norm_bwd(dy, xhp, gamma, rsp)
    for c, p in zip(dc, dp):
        _close(c, p, tol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_relu_parity(seed):
    r = np.random.default_rng(40 + seed)
    x = r.normal(size=(5, 7))
    dy = r.normal(size=(5, 7))
    _close(compiled.relu_fwd(x), pylib.relu_fwd(x))
    _close(compiled.relu_bwd(x, dy), pylib.relu_bwd(x, dy))


@pytest.mark.parametrize("seed", range(5))
def test_adam_update_parity(seed):
    r = np.random.default_rng(50 + seed)
    n = 64
    p0 = r.normal(size=n)
    g = r.normal(size=n)
    m0 = np.abs(r.normal(size=n)) * 0.01
    v0 = np.abs(r.normal(size=n)) * 0.01
    pc, mc, vc = p0.copy(), m0.copy(), v0.copy()
    pp, mp, vp = p0.copy(), m0.copy(), v0.copy()
    for t in range(1, 4):
        compiled.adam_update(pc, g, mc, vc, 1e-4, 0.9, 0.999, 1e-8, t)
        pylib.adam_update(pp, g, mp, vp, 1e-4, 0.9, 0.999, 1e-8, t)
    _close(pc, pp, tol=1e-12)
    _close(mc, mp, tol=1e-12)
    _close(vc, vp, tol=1e-12)
