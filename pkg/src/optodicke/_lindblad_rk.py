"""Compiled Dormand-Prince 5(4) stepper for the vectorized master equation.

Specialization of the generic adaptive loop to y' = L y with a sparse CSR
generator; the matrix-vector product and all stage updates run inside one
numba-compiled loop (matvec parallelized over rows), which removes the
per-step Python overhead that dominates solve_ivp at large dimensions.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ._dp54 import _A, _B, _C, _E  # Butcher tableau shared with the mean-field stepper


@njit(cache=True, parallel=True)
def _matvec(data, indices, indptr, x, out):
    n = out.shape[0]
    for i in prange(n):
        acc = 0.0 + 0.0j
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


@njit(cache=True, parallel=True)
def _stage_state(y, k, h, coeffs, s, out):
    n = y.shape[0]
    for i in prange(n):
        acc = 0.0 + 0.0j
        for q in range(s):
            c = coeffs[q]
            if c != 0.0:
                acc += c * k[q, i]
        out[i] = y[i] + h * acc


@njit(cache=True, parallel=True)
def _combine(y, k, h, b_tab, e_tab, ynew, err):
    n = y.shape[0]
    for i in prange(n):
        acc = 0.0 + 0.0j
        eacc = 0.0 + 0.0j
        for s in range(7):
            bs = b_tab[s]
            if bs != 0.0:
                acc += bs * k[s, i]
            es = e_tab[s]
            if es != 0.0:
                eacc += es * k[s, i]
        ynew[i] = y[i] + h * acc
        err[i] = h * eacc


@njit(cache=True, parallel=True)
def _err_norm_sq(err, y0, y1, rtol, atol, partial):
    n = err.shape[0]
    nb = partial.shape[0]
    chunk = (n + nb - 1) // nb
    for b in prange(nb):
        lo = b * chunk
        hi = min(lo + chunk, n)
        acc = 0.0
        for i in range(lo, hi):
            sc = atol + rtol * max(abs(y0[i]), abs(y1[i]))
            r = abs(err[i]) / sc
            acc += r * r
        partial[b] = acc


@njit(cache=True)
def _rk45_csr_loop(data, indices, indptr, y, t0, t_end, rtol, atol, h0):
    """Advance y from t0 to t_end. Returns (status, t, h_last, n_steps).

    status: 0 done, 1 non-finite state, 2 step underflow.  y is updated
    in place; h0 <= 0 requests automatic initial-step selection.
    """
    n = y.shape[0]
    k = np.empty((7, n), dtype=np.complex128)
    ytmp = np.empty(n, dtype=np.complex128)
    ynew = np.empty(n, dtype=np.complex128)
    err = np.empty(n, dtype=np.complex128)
    partial = np.empty(16, dtype=np.float64)
    t = t0
    if t_end <= t0:
        return 0, t, h0, 0

    _matvec(data, indices, indptr, y, k[0])
    if h0 > 0.0:
        h = h0
    else:
        # first guess from the RHS scale, then let the controller adapt
        _err_norm_sq(k[0], y, y, rtol, atol, partial)
        d1 = np.sqrt(partial.sum() / n)
        h = 0.01 / max(d1, 1e-10)
    h = min(h, t_end - t0)

    n_steps = 0
    max_factor = 10.0
    while t < t_end:
        if h < 1e-14 * max(1.0, abs(t)):
            return 2, t, h, n_steps
        clipped = False
        if t + h >= t_end:
            h = t_end - t
            clipped = True
        for s in range(1, 7):
            _stage_state(y, k, h, _A[s], s, ytmp)
            _matvec(data, indices, indptr, ytmp, k[s])
        _combine(y, k, h, _B, _E, ynew, err)
        ok = True
        for i in range(0, n, max(1, n // 64)):
            v = ynew[i]
            if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                ok = False
                break
        _err_norm_sq(err, y, ynew, rtol, atol, partial)
        enorm = np.sqrt(partial.sum() / n)
        if not (ok and np.isfinite(enorm)):
            return 1, t, h, n_steps
        if enorm <= 1.0:
            t = t + h
            y[:] = ynew
            k[0, :] = k[6]  # FSAL
            n_steps += 1
            factor = max_factor if enorm == 0.0 else min(max_factor, 0.9 * enorm**-0.2)
            if clipped:
                factor = max(factor, 1.0)
            h = h * factor
            max_factor = 10.0
        else:
            h = h * max(0.2, 0.9 * enorm**-0.2)
            max_factor = 1.0
    return 0, t, h, n_steps


def rk45_csr_evolve(lv, y0, t_points, rtol, atol):
    """Propagate vec(rho) through the increasing times in t_points.

    Returns the state at each requested time (the step size carries over
    between intervals).
    """
    data = lv.data.astype(np.complex128)
    indices = lv.indices
    indptr = lv.indptr
    y = np.array(y0, dtype=np.complex128, copy=True)
    out = np.empty((len(t_points), y.shape[0]), dtype=np.complex128)
    t = 0.0
    h = -1.0
    for i, tp in enumerate(t_points):
        status, t, h, _ = _rk45_csr_loop(data, indices, indptr, y, t, float(tp), rtol, atol, h)
        if status == 1:
            raise RuntimeError(f"non-finite state in master-equation step at t={t:.6g}")
        if status == 2:
            raise RuntimeError(f"step underflow in master-equation step at t={t:.6g}")
        out[i] = y
    return out
