"""Hot enumeration loops, compiled with numba when available.

Every kernel exists twice: an ``@njit`` version and a pure-numpy version with
identical semantics.  Set ``TWOWEIGHT_DISABLE_NUMBA=1`` to force the numpy
path (useful for debugging and for the comparison benchmark).
"""

from __future__ import annotations

import itertools
import os

import numpy as np

_DISABLED = os.environ.get("TWOWEIGHT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _DISABLED


def _sign_matrix(n: int, fix_first: bool = False) -> np.ndarray:
    """All sign patterns of length n, one per row (first column +1 if fix_first)."""
    free = n - 1 if fix_first else n
    if free < 0:
        return np.ones((1, 0))
    bits = (np.arange(1 << free)[:, None] >> np.arange(free)[None, :]) & 1
    signs = 1.0 - 2.0 * bits
    if fix_first:
        signs = np.hstack([np.ones((signs.shape[0], 1)), signs])
    return signs


# --------------------------------------------------------------------------
# E|sum eps_i x_i| and E|sum eps_i x_i|^2 over all 2^N sign patterns
# --------------------------------------------------------------------------

def _rademacher_moments_np(x):
    signs = _sign_matrix(x.shape[0])
    s = signs @ x
    return float(np.mean(np.abs(s))), float(np.mean(s * s))


def _rademacher_moments_py(x):
    n = x.shape[0]
    s = 0.0
    for i in range(n):
        s += x[i]
    signs = np.ones(n)
    total = 1 << n
    e1 = abs(s)
    e2 = s * s
    for t in range(1, total):
        b = 0
        tt = t
        while tt & 1 == 0:
            tt >>= 1
            b += 1
        signs[b] = -signs[b]
        s += 2.0 * signs[b] * x[b]
        e1 += abs(s)
        e2 += s * s
    return e1 / total, e2 / total


# --------------------------------------------------------------------------
# norms of sum_Q eps_Q a_Q g_Q over sign patterns (eps_0 = +1), with gradient
# --------------------------------------------------------------------------

def _sign_sum_norms_np(G, a, w, s):
    n = G.shape[0]
    signs = _sign_matrix(n, fix_first=True)
    V = (signs * a[None, :]) @ G
    absV = np.abs(V)
    norms = (absV ** s @ w) ** (1.0 / s)
    psi = np.sign(V) * absV ** (s - 1.0) * w[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, norms ** (1.0 - s), 0.0)
    grads = signs * (psi @ G.T) * scale[:, None]
    return norms, grads


def _sign_sum_norms_py(G, a, w, s):
    n, L = G.shape
    P = 1 << (n - 1) if n > 0 else 1
    eps = np.ones(n)
    v = np.zeros(L)
    for q in range(n):
        for j in range(L):
            v[j] += a[q] * G[q, j]
    norms = np.empty(P)
    grads = np.zeros((P, n))
    psi = np.empty(L)
    # Gray code over bits 1..n-1 visits every pattern with eps_0 = +1 once;
    # pattern t is stored at row t (binary-reflected index -> plain index).
    for t in range(P):
        if t > 0:
            b = 0
            tt = t
            while tt & 1 == 0:
                tt >>= 1
                b += 1
            q = b + 1
            eps[q] = -eps[q]
            for j in range(L):
                v[j] += 2.0 * eps[q] * a[q] * G[q, j]
        acc = 0.0
        for j in range(L):
            av = abs(v[j])
            t1 = av ** (s - 1.0) if av > 0 else 0.0
            acc += w[j] * t1 * av
            psi[j] = w[j] * t1 if v[j] >= 0 else -w[j] * t1
        nv = acc ** (1.0 / s)
        row = 0
        for k in range(1, n):
            if eps[k] < 0:
                row |= 1 << (k - 1)
        norms[row] = nv
        if nv > 0:
            scale = nv ** (1.0 - s)
            for k in range(n):
                d = 0.0
                for j in range(L):
                    d += psi[j] * G[k, j]
                grads[row, k] = eps[k] * d * scale
    return norms, grads


# --------------------------------------------------------------------------
# brute-force max of ||M x||_q over sign patterns x simplex grid on the p-sphere
# --------------------------------------------------------------------------

def _compositions(total: int, parts: int) -> np.ndarray:
    """All weak compositions of ``total`` into ``parts`` parts (stars and bars)."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(total + parts - 1), parts - 1)), dtype=np.int64)
    out = np.empty((bars.shape[0], parts), dtype=np.int64)
    out[:, 0] = bars[:, 0]
    out[:, 1:-1] = np.diff(bars, axis=1) - 1
    out[:, -1] = total + parts - 2 - bars[:, -1]
    return out


def _bruteforce_np(M, p, q, N, chunk=200_000):
    m, L = M.shape
    comps = _compositions(N, L)
    signs = _sign_matrix(L, fix_first=True)
    best = -1.0
    best_x = np.zeros(L)
    for start in range(0, comps.shape[0], chunk):
        U = (comps[start:start + chunk] / N) ** (1.0 / p)
        for sg in signs:
            X = U * sg[None, :]
            vals = np.sum(np.abs(X @ M.T) ** q, axis=1)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best = float(vals[i])
                best_x = X[i].copy()
    return best ** (1.0 / q), best_x


def _bruteforce_py(M, p, q, N):
    m, L = M.shape
    r = L - 1
    nn = N + L - 1
    c = np.arange(r)
    k = np.zeros(L, dtype=np.int64)
    u = np.empty(L)
    x = np.empty(L)
    y = np.empty(m)
    best = -1.0
    best_x = np.zeros(L)
    nsign = 1 << (L - 1)
    while True:
        if r == 0:
            k[0] = N
        else:
            k[0] = c[0]
            for i in range(1, r):
                k[i] = c[i] - c[i - 1] - 1
            k[L - 1] = nn - 1 - c[r - 1]
        for i in range(L):
            u[i] = (k[i] / N) ** (1.0 / p)
        # Gray code over the signs of coordinates 1..L-1; y = M x updated in place
        for i in range(L):
            x[i] = u[i]
        for row in range(m):
            acc = 0.0
            for i in range(L):
                acc += M[row, i] * x[i]
            y[row] = acc
        for sp in range(nsign):
            if sp > 0:
                b = 0
                tt = sp
                while tt & 1 == 0:
                    tt >>= 1
                    b += 1
                i = b + 1
                x[i] = -x[i]
                for row in range(m):
                    y[row] += 2.0 * M[row, i] * x[i]
            val = 0.0
            for row in range(m):
                val += abs(y[row]) ** q
            if val > best:
                best = val
                for i in range(L):
                    best_x[i] = x[i]
        # next (r)-combination of range(nn), lexicographic
        i = r - 1
        while i >= 0 and c[i] == nn - r + i:
            i -= 1
        if i < 0:
            break
        c[i] += 1
        for j in range(i + 1, r):
            c[j] = c[j - 1] + 1
    return best ** (1.0 / q), best_x


if HAVE_NUMBA:
    _rademacher_moments_nb = njit(cache=True)(_rademacher_moments_py)
    _sign_sum_norms_nb = njit(cache=True)(_sign_sum_norms_py)
    _bruteforce_nb = njit(cache=True)(_bruteforce_py)
else:  # pragma: no cover
    _rademacher_moments_nb = _rademacher_moments_np
    _sign_sum_norms_nb = _sign_sum_norms_np
    _bruteforce_nb = _bruteforce_np


def rademacher_moments(x, use_numba: bool | None = None):
    """Return (E|S|, E S^2) for S = sum eps_i x_i, by full enumeration."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    fast = USING_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    e1, e2 = (_rademacher_moments_nb if fast else _rademacher_moments_np)(x)
    return float(e1), float(e2)


def sign_sum_norms(G, a, w, s, use_numba: bool | None = None):
    """Weighted l^s norms of sum_Q eps_Q a_Q G[Q] for every pattern with eps_0 = +1.

    Returns ``(norms, grads)`` with ``grads[t, Q]`` the derivative of the t-th
    norm with respect to ``a_Q``.  Row t encodes the signs of Q = 1.. in its bits.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    fast = USING_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    return (_sign_sum_norms_nb if fast else _sign_sum_norms_np)(G, a, w, float(s))


def bruteforce_max(M, p, q, N, use_numba: bool | None = None):
    """max ||M x||_q over sign patterns and |x_i|^p on the resolution-N simplex grid."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    fast = USING_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    val, x = (_bruteforce_nb if fast else _bruteforce_np)(M, float(p), float(q), int(N))
    return float(val), np.asarray(x)
