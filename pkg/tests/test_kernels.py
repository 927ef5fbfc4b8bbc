import os
import subprocess
import sys

import numpy as np
import pytest

from twoweight import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def test_compositions():
    C = _kernels._compositions(4, 3)
    assert C.shape == (15, 3) and np.all(C.sum(axis=1) == 4) and len({tuple(r) for r in C}) == 15


@needs_numba
@pytest.mark.parametrize("N", [1, 2, 5, 11])
def test_rademacher_paths_agree(N, rng):
    x = rng.standard_normal(N)
    a = _kernels.rademacher_moments(x, use_numba=True)
    b = _kernels.rademacher_moments(x, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-12)


@needs_numba
@pytest.mark.parametrize("n", [1, 3, 6])
@pytest.mark.parametrize("s", [1.5, 2.0, 3.0])
def test_sign_sum_paths_agree(n, s, rng):
    G, a, w = rng.standard_normal((n, 9)), rng.random(n), rng.random(9)
    na, ga = _kernels.sign_sum_norms(G, a, w, s, use_numba=True)
    nb, gb = _kernels.sign_sum_norms(G, a, w, s, use_numba=False)
    np.testing.assert_allclose(na, nb, rtol=1e-12)
    np.testing.assert_allclose(ga, gb, rtol=1e-10, atol=1e-12)


def test_sign_sum_gradient_fd(rng):
    G, a, w = rng.standard_normal((4, 6)), rng.random(4) + 0.2, rng.random(6)
    norms, grads = _kernels.sign_sum_norms(G, a, w, 3.0)
    h = 1e-6
    for k in range(4):
        d = np.eye(4)[k] * h
        fd = (_kernels.sign_sum_norms(G, a + d, w, 3.0)[0] - _kernels.sign_sum_norms(G, a - d, w, 3.0)[0]) / (2 * h)
        np.testing.assert_allclose(grads[:, k], fd, rtol=1e-5, atol=1e-7)


@needs_numba
@pytest.mark.parametrize("L", [1, 2, 4])
def test_bruteforce_paths_agree(L, rng):
    M = rng.standard_normal((3, L))
    va, xa = _kernels.bruteforce_max(M, 3.0, 1.5, 10, use_numba=True)
    vb, xb = _kernels.bruteforce_max(M, 3.0, 1.5, 10, use_numba=False)
    assert va == pytest.approx(vb, rel=1e-13)
    assert np.sum(np.abs(M @ xa) ** 1.5) ** (1 / 1.5) == pytest.approx(va, rel=1e-12)


def test_env_flag_disables_numba():
    env = dict(os.environ, TWOWEIGHT_DISABLE_NUMBA="1")
    code = "from twoweight import _kernels as k; print(k.USING_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True).stdout
    assert out.strip() == "False"
