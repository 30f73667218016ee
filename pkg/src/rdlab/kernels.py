"""Hot loops: batched exponential-Euler stepping and the singular convolution.

Each kernel exists twice, as a numba ``@njit`` loop nest and as a vectorized
numpy fallback.  ``RDLAB_BACKEND=numpy`` (or a missing numba) selects the
fallback; the default is numba.  The stepping kernels perform the same
floating-point operations in the same order, so trajectories agree bit for bit
across backends and do not depend on how paths are batched.  The convolution
kernels agree to round-off.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


def backend() -> str:
    """Active backend name, read from ``RDLAB_BACKEND`` on every call."""
    name = os.environ.get("RDLAB_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"RDLAB_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name


# ---------------------------------------------------------------------------
# shapes


@njit(cache=True)
def _interp_scalar(r, xp, fp):
    # same conventions as np.interp: constant extrapolation beyond the table
    m = xp.shape[0]
    if r <= xp[0]:
        return fp[0]
    if r >= xp[m - 1]:
        return fp[m - 1]
    lo, hi = 0, m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xp[mid] <= r:
            lo = mid
        else:
            hi = mid
    slope = (fp[hi] - fp[lo]) / (xp[hi] - xp[lo])
    return fp[lo] + slope * (r - xp[lo])


@njit(cache=True, inline="always")
def _shape_row(U, b, code, cap, tab_r, tab_g, rho):
    # branch once per row; a per-node branch blocks vectorization
    n = rho.shape[0]
    if code == 0:
        for j in range(n):
            rho[j] = 1.0
    elif code == 1:
        for j in range(n):
            rho[j] = min(max(U[b, j], -cap), cap)
    elif code == 2:
        for j in range(n):
            rho[j] = np.sqrt(min(abs(U[b, j]), cap))
    else:
        for j in range(n):
            rho[j] = _interp_scalar(min(max(U[b, j], -cap), cap), tab_r, tab_g)


def _shape_numpy(U, code, cap, tab_r, tab_g, fn):
    if np.isfinite(cap):
        U = np.clip(U, -cap, cap)
    if code == 0:
        return np.ones_like(U)
    if code == 1:
        return U
    if code == 2:
        return np.sqrt(np.abs(U))
    if code == 3:
        return np.interp(U, tab_r, tab_g)
    return np.asarray(fn(U), dtype=float) * np.ones_like(U)


# ---------------------------------------------------------------------------
# exponential Euler


@njit(cache=True, nogil=True)
def _mild_paths_numba(PT, coeffs, spatial, code, cap, tab_r, tab_g, U0, dW, dt, stop_level, stride, horizon,
                      states, stop_index, blown):
    B, n = U0.shape
    steps = dW.shape[1]
    K = spatial.shape[1]
    deg = coeffs.shape[0] - 1
    U = U0.copy()
    V = np.zeros((B, n))
    W = np.empty((B, n))
    active = np.empty(B, dtype=np.bool_)
    rho = np.empty(n)
    for b in range(B):
        stop_index[b] = -1
        blown[b] = False
        norm = 0.0
        finite = True
        for j in range(n):
            if not np.isfinite(U[b, j]):
                finite = False
            elif abs(U[b, j]) > norm:
                norm = abs(U[b, j])
        if not finite:
            blown[b] = True
            stop_index[b] = 0
        elif norm >= stop_level:
            stop_index[b] = 0
        active[b] = stop_index[b] < 0
        for j in range(n):
            states[b, 0, j] = U[b, j]
    rec = 1
    for i in range(steps):
        for b in range(B):
            if active[b] and i >= horizon[b]:
                active[b] = False
            if not active[b]:
                for j in range(n):
                    V[b, j] = 0.0
                continue
            _shape_row(U, b, code, cap, tab_r, tab_g, rho)
            for j in range(n):
                r = U[b, j]
                f = coeffs[deg, j]
                for d in range(deg - 1, -1, -1):
                    f = f * r + coeffs[d, j]
                noise = 0.0
                for k in range(K):
                    noise += spatial[j, k] * dW[b, i, k]
                V[b, j] = r + dt * f + rho[j] * noise
        for b in range(B):
            if not active[b]:
                continue
            # row-wise axpy order: the result for a path never depends on the batch
            for j in range(n):
                W[b, j] = 0.0
            for m in range(n):
                vm = V[b, m]
                for j in range(n):
                    W[b, j] += PT[m, j] * vm
            finite = True
            norm = 0.0
            for j in range(n):
                x = W[b, j]
                if not np.isfinite(x):
                    finite = False
                elif abs(x) > norm:
                    norm = abs(x)
            if not finite:
                active[b] = False
                blown[b] = True
                stop_index[b] = i
                continue
            for j in range(n):
                U[b, j] = W[b, j]
            if norm >= stop_level:
                active[b] = False
                stop_index[b] = i + 1
        if (i + 1) % stride == 0:
            for b in range(B):
                for j in range(n):
                    states[b, rec, j] = U[b, j]
            rec += 1


def _mild_paths_numpy(P, coeffs, spatial, code, cap, tab_r, tab_g, fn, U0, dW, dt, stop_level, stride, horizon,
                      states, stop_index, blown):
    B, n = U0.shape
    steps = dW.shape[1]
    U = np.array(U0, dtype=float)
    norms = np.abs(U).max(axis=1)
    finite = np.all(np.isfinite(U), axis=1)
    blown[:] = ~finite
    stop_index[:] = np.where(~finite | (norms >= stop_level), 0, -1)
    active = stop_index < 0
    states[:, 0] = U
    PT = np.ascontiguousarray(P.T)
    spatial_T = np.ascontiguousarray(spatial.T)
    rec = 1
    for i in range(steps):
        active &= i < horizon
        if active.any():
            Ua = U[active]
            f = np.broadcast_to(coeffs[-1], Ua.shape).copy()
            for c in coeffs[-2::-1]:
                f *= Ua
                f += c
            noise = np.zeros_like(Ua)
            dWa = dW[active, i]
            for k in range(spatial.shape[1]):
                noise += spatial_T[k] * dWa[:, k:k + 1]
            V = Ua + dt * f + _shape_numpy(Ua, code, cap, tab_r, tab_g, fn) * noise
            # same summation order as the compiled kernel, independent of the batch
            W = np.zeros_like(V)
            for m in range(n):
                W += V[:, m:m + 1] * PT[m]
            ok = np.all(np.isfinite(W), axis=1)
            idx = np.flatnonzero(active)
            bad = idx[~ok]
            blown[bad] = True
            stop_index[bad] = i
            good = idx[ok]
            U[good] = W[ok]
            hit = good[np.abs(W[ok]).max(axis=1) >= stop_level]
            stop_index[hit] = i + 1
            stopped = np.zeros(B, dtype=bool)
            stopped[bad] = True
            stopped[hit] = True
            active &= ~stopped
        if (i + 1) % stride == 0:
            states[:, rec] = U
            rec += 1


def mild_paths(P, coeffs, spatial, shape, U0, dW, dt, stop_level, stride=1, horizon=None):
    """Integrate a batch of paths; returns ``(states, stop_index, blown)``.

    ``states[b, r]`` is the state after ``r * stride`` steps.  Stopped paths
    are frozen; ``stop_index`` is the first step whose state has sup norm at
    least ``stop_level`` (``-1`` if none), or the last finite step for paths
    flagged in ``blown``.  Path ``b`` takes at most ``horizon[b]`` steps and is
    held constant afterwards.
    """
    U0 = np.ascontiguousarray(U0, dtype=float)
    dW = np.ascontiguousarray(dW, dtype=float)
    B, n = U0.shape
    steps = dW.shape[1]
    nrec = steps // stride + 1
    states = np.empty((B, nrec, n))
    stop_index = np.empty(B, dtype=np.int64)
    blown = np.empty(B, dtype=np.bool_)
    tab_r = np.ascontiguousarray(shape.table_r if shape.table_r is not None else np.zeros(2), dtype=float)
    tab_g = np.ascontiguousarray(shape.table_g if shape.table_g is not None else np.zeros(2), dtype=float)
    cap = float(shape.cap)
    stop_level = float(stop_level)
    if horizon is None:
        horizon = np.full(B, steps, dtype=np.int64)
    horizon = np.ascontiguousarray(horizon, dtype=np.int64)
    if backend() == "numba" and shape.jittable:
        _mild_paths_numba(np.ascontiguousarray(P.T), np.ascontiguousarray(coeffs), np.ascontiguousarray(spatial),
                          shape.code, cap, tab_r, tab_g, U0, dW, float(dt), stop_level, int(stride),
                          horizon, states, stop_index, blown)
    else:
        _mild_paths_numpy(P, coeffs, spatial, shape.code, cap, tab_r, tab_g, shape.fn, U0, dW, float(dt),
                          stop_level, int(stride), horizon, states, stop_index, blown)
    return states, stop_index, blown


# ---------------------------------------------------------------------------
# causal convolution for the factorization operator


@njit(cache=True, nogil=True)
def _causal_conv_numba(W, C):
    N1, m = C.shape
    out = np.zeros((N1, m))
    for i in range(1, N1):
        for j in range(i):
            d = i - j
            for k in range(m):
                out[i, k] += W[d, k] * C[j, k]
    return out


def _causal_conv_numpy(W, C):
    N1, m = C.shape
    out = np.zeros((N1, m))
    for d in range(1, N1):
        out[d:] += W[d] * C[: N1 - d]
    return out


def causal_conv(W, C):
    """``out[i] = sum_{j<i} W[i-j] * C[j]`` per column; ``W[0]`` is unused."""
    W = np.ascontiguousarray(W, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    if backend() == "numba":
        return _causal_conv_numba(W, C)
    return _causal_conv_numpy(W, C)
