"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``MFTSIM_DISABLE_NUMBA`` is unset/falsy.  Both backends perform
the same floating-point operations in the same order (explicit
left-to-right accumulation over the small asset dimension, sequential
recursion over time steps), so switching backends does not change
results.  ``benchmarks/bench_kernels.py`` compares their throughput.

Everything here works on *blocks*: the leading axis is the path axis and
the kernels never reduce across it, which keeps Monte Carlo accumulation
order independent of threading and block layout.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_disabled() -> bool:
    flag = os.environ.get("MFTSIM_DISABLE_NUMBA", "")
    return flag.strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# pure-numpy implementations (canonical semantics)
# ---------------------------------------------------------------------------

def wealth_step_numpy(pi, a_tilde, sigma, dw, dt):
    """One log-wealth increment per path.

    pi, a_tilde, dw: (B, n); sigma: (B, n, n); dt: float.
    Returns (B,) increments (pi'a~ - 0.5*|pi'sigma|^2)*dt + pi'sigma dw.
    """
    B, n = pi.shape
    drift = np.zeros(B)
    for k in range(n):
        drift = drift + pi[:, k] * a_tilde[:, k]
    quad = np.zeros(B)
    noise = np.zeros(B)
    for j in range(n):
        v = np.zeros(B)
        for k in range(n):
            v = v + pi[:, k] * sigma[:, k, j]
        quad = quad + v * v
        noise = noise + v * dw[:, j]
    return (drift - 0.5 * quad) * dt + noise


def wealth_path_numpy(pi, a_tilde, sigma, dw, dt):
    """Cumulative log-wealth path from a full per-node allocation trace.

    pi, a_tilde, dw: (B, M, n); sigma: (B, M, n, n).
    Returns (B, M+1) with row 0 equal to 0 (relative to log X0).
    """
    B, M, _ = pi.shape
    y = np.zeros((B, M + 1))
    for i in range(M):
        y[:, i + 1] = y[:, i] + wealth_step_numpy(
            pi[:, i], a_tilde[:, i], sigma[:, i], dw[:, i], dt
        )
    return y


def regime_chain_numpy(init, u, cum):
    """Evolve a finite-state chain across grid nodes.

    init: (B,) int64 states at node 0; u: (B, M) uniforms, one per step;
    cum: (S, S) row-wise cumulative transition probabilities.
    Returns (B, M+1) int64 state indices.
    """
    B, M = u.shape
    S = cum.shape[0]
    states = np.empty((B, M + 1), dtype=np.int64)
    states[:, 0] = init
    for i in range(M):
        rows = cum[states[:, i]]
        nxt = (u[:, i][:, None] >= rows).sum(axis=1)
        states[:, i + 1] = np.minimum(nxt, S - 1)
    return states


def lagged_window_mean_numpy(values, k):
    """Backward-lagged moving average over k grid cells.

    values: (B, L, D).  Entry m of the output is the mean of entries
    m-2k .. m-k-1 with negative indices clamped to 0 (the path is
    extended backward by its initial value).  Output entry m therefore
    depends only on raw entries at indices <= m-k for m >= k.
    """
    B, L, D = values.shape
    idx = np.arange(L)
    acc = np.zeros((B, L, D))
    for off in range(k):
        j = np.clip(idx - 2 * k + off, 0, None)
        acc = acc + values[:, j, :]
    return acc / k


# ---------------------------------------------------------------------------
# numba implementations (same operation order)
# ---------------------------------------------------------------------------

NUMBA_AVAILABLE = False
if not _numba_disabled():
    try:
        from numba import njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - depends on environment
        NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def wealth_step_numba(pi, a_tilde, sigma, dw, dt):
        B, n = pi.shape
        out = np.empty(B)
        for b in range(B):
            drift = 0.0
            for k in range(n):
                drift = drift + pi[b, k] * a_tilde[b, k]
            quad = 0.0
            noise = 0.0
            for j in range(n):
                v = 0.0
                for k in range(n):
                    v = v + pi[b, k] * sigma[b, k, j]
                quad = quad + v * v
                noise = noise + v * dw[b, j]
            out[b] = (drift - 0.5 * quad) * dt + noise
        return out

    @njit(cache=True)
    def wealth_path_numba(pi, a_tilde, sigma, dw, dt):
        B, M, n = pi.shape
        y = np.zeros((B, M + 1))
        for b in range(B):
            acc = 0.0
            for i in range(M):
                drift = 0.0
                for k in range(n):
                    drift = drift + pi[b, i, k] * a_tilde[b, i, k]
                quad = 0.0
                noise = 0.0
                for j in range(n):
                    v = 0.0
                    for k in range(n):
                        v = v + pi[b, i, k] * sigma[b, i, k, j]
                    quad = quad + v * v
                    noise = noise + v * dw[b, i, j]
                inc = (drift - 0.5 * quad) * dt + noise
                acc = acc + inc
                y[b, i + 1] = acc
        return y

    @njit(cache=True)
    def regime_chain_numba(init, u, cum):
        B, M = u.shape
        S = cum.shape[0]
        states = np.empty((B, M + 1), dtype=np.int64)
        for b in range(B):
            s = init[b]
            states[b, 0] = s
            for i in range(M):
                x = u[b, i]
                j = 0
                while j < S - 1 and x >= cum[s, j]:
                    j += 1
                s = j
                states[b, i + 1] = s
        return states

    @njit(cache=True)
    def lagged_window_mean_numba(values, k):
        B, L, D = values.shape
        acc = np.zeros((B, L, D))
        for b in range(B):
            for m in range(L):
                for off in range(k):
                    j = m - 2 * k + off
                    if j < 0:
                        j = 0
                    for d in range(D):
                        acc[b, m, d] = acc[b, m, d] + values[b, j, d]
        return acc / k


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    BACKEND = "numba"
    wealth_step = wealth_step_numba
    wealth_path = wealth_path_numba
    regime_chain = regime_chain_numba
    lagged_window_mean = lagged_window_mean_numba
else:
    BACKEND = "numpy"
    wealth_step = wealth_step_numpy
    wealth_path = wealth_path_numpy
    regime_chain = regime_chain_numpy
    lagged_window_mean = lagged_window_mean_numpy
