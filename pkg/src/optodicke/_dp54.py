"""Dormand-Prince 5(4) kernels for the mean-field equations of motion.

The stepper is compiled with numba so that full-model runs, which have to
resolve the bare mechanical frequency, stay cheap.  Status codes returned
by the loop: 0 = reached t_end, 1 = non-finite state encountered,
2 = step size underflow.
"""

from __future__ import annotations

import numpy as np
from numba import njit

RHS_EFFECTIVE = 0
RHS_FULL = 1

# Butcher tableau (Dormand & Prince 1980), fifth-order propagation weights,
# embedded fourth-order error weights and the quartic dense-output matrix.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 6))
_A[1, 0] = 1 / 5
_A[2, :2] = (3 / 40, 9 / 40)
_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


@njit(cache=True)
def _rhs(rhs_id, t, y, p, out):
    if rhs_id == RHS_EFFECTIVE:
        # p = [delta, J, kappa, gamma, 2 g1 |alpha|, 2 g2 |alpha|]
        b1 = y[0]
        b2 = y[1]
        d = y[2]
        delta = p[0].real
        jj = p[1].real
        kap = p[2].real
        gam = p[3].real
        c1 = p[4].real
        c2 = p[5].real
        x = 2.0 * d.real
        out[0] = -1j * (c1 * x * b1 - 2.0 * jj * b2) - gam * b1
        out[1] = -1j * (-c2 * x * b2 - 2.0 * jj * b1) - gam * b2
        n1 = b1.real * b1.real + b1.imag * b1.imag
        n2 = b2.real * b2.real + b2.imag * b2.imag
        out[2] = -1j * (delta * d + c1 * n1 - c2 * n2) - kap * d
    else:
        # p = [delta, J, kappa, gamma, g1, g2, w1, w2, A]
        b1 = y[0]
        b2 = y[1]
        a = y[2]
        delta = p[0].real
        jj = p[1].real
        kap = p[2].real
        gam = p[3].real
        g1 = p[4].real
        g2 = p[5].real
        w1 = p[6].real
        w2 = p[7].real
        drive = p[8]
        x1 = 2.0 * b1.real
        x2 = 2.0 * b2.real
        na = a.real * a.real + a.imag * a.imag
        xd = x1 - x2
        out[0] = -1j * (w1 * b1 + 2.0 * g1 * na * x1 + 2.0 * jj * xd) - gam * b1
        out[1] = -1j * (w2 * b2 - 2.0 * g2 * na * x2 - 2.0 * jj * xd) - gam * b2
        out[2] = -1j * (delta * a + (g1 * x1 * x1 - g2 * x2 * x2) * a + drive) - kap * a


@njit(cache=True)
def _error_norm(err, y0, y1, rtol, atol):
    acc = 0.0
    for i in range(err.shape[0]):
        sc = atol + rtol * max(abs(y0[i]), abs(y1[i]))
        r = abs(err[i]) / sc
        acc += r * r
    return np.sqrt(acc / err.shape[0])


@njit(cache=True)
def _initial_step(rhs_id, t0, y0, p, f0, rtol, atol, max_step):
    d0 = 0.0
    d1 = 0.0
    n = y0.shape[0]
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d0 += (abs(y0[i]) / sc) ** 2
        d1 += (abs(f0[i]) / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + h0 * f0
    f1 = np.empty_like(y0)
    _rhs(rhs_id, t0 + h0, y1, p, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d2 += (abs(f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / n) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    return min(100.0 * h0, h1, max_step)


@njit(cache=True)
def _dp54_loop(
    rhs_id,
    p,
    y0,
    t0,
    t_end,
    rtol,
    atol,
    max_step,
    t_samples,
    out_samples,
    a_tab,
    b_tab,
    c_tab,
    e_tab,
    p_tab,
):
    """Integrate y' = f(t, y) over [t0, t_end], filling samples by dense output.

    Returns (status, t_reached, y_final, n_filled, n_steps).
    """
    n = y0.shape[0]
    y = y0.copy()
    t = t0
    n_samples = t_samples.shape[0]
    i_sample = 0
    # emit any samples at/before t0 (the grid starts at t0)
    while i_sample < n_samples and t_samples[i_sample] <= t0:
        for j in range(n):
            out_samples[i_sample, j] = y[j]
        i_sample += 1
    if t_end <= t0:
        return (0, t, y, i_sample, 0)

    k_stages = np.empty((7, n), dtype=np.complex128)
    f0 = np.empty(n, dtype=np.complex128)
    _rhs(rhs_id, t, y, p, f0)
    for i in range(n):
        if not (np.isfinite(f0[i].real) and np.isfinite(f0[i].imag)):
            return (1, t, y, i_sample, 0)
    h = _initial_step(rhs_id, t0, y, p, f0, rtol, atol, max_step)
    h = min(h, t_end - t0)

    ytmp = np.empty(n, dtype=np.complex128)
    ynew = np.empty(n, dtype=np.complex128)
    err = np.empty(n, dtype=np.complex128)
    n_steps = 0
    max_factor = 10.0

    while t < t_end:
        if h < 1e-14 * max(1.0, abs(t)):
            return (2, t, y, i_sample, n_steps)
        clipped = False
        if t + h >= t_end:
            h = t_end - t
            clipped = True

        for j in range(n):
            k_stages[0, j] = f0[j]
        for s in range(1, 7):
            for j in range(n):
                acc = 0.0 + 0.0j
                for q in range(s):
                    aq = a_tab[s, q]
                    if aq != 0.0:
                        acc += aq * k_stages[q, j]
                ytmp[j] = y[j] + h * acc
            _rhs(rhs_id, t + c_tab[s] * h, ytmp, p, k_stages[s])
        for j in range(n):
            acc = 0.0 + 0.0j
            eacc = 0.0 + 0.0j
            for s in range(7):
                bs = b_tab[s]
                if bs != 0.0:
                    acc += bs * k_stages[s, j]
                es = e_tab[s]
                if es != 0.0:
                    eacc += es * k_stages[s, j]
            ynew[j] = y[j] + h * acc
            err[j] = h * eacc

        bad = False
        for j in range(n):
            if not (np.isfinite(ynew[j].real) and np.isfinite(ynew[j].imag)):
                bad = True
        if bad:
            return (1, t, y, i_sample, n_steps)

        enorm = _error_norm(err, y, ynew, rtol, atol)
        if enorm <= 1.0:
            t_new = t + h
            # dense output for samples inside (t, t_new]
            while i_sample < n_samples and t_samples[i_sample] <= t_new + 1e-14 * max(1.0, abs(t_new)):
                ts = t_samples[i_sample]
                if ts >= t_end:
                    break
                theta = (ts - t) / h
                th2 = theta * theta
                for j in range(n):
                    acc = 0.0 + 0.0j
                    for s in range(7):
                        qs = (
                            p_tab[s, 0] * theta
                            + p_tab[s, 1] * th2
                            + p_tab[s, 2] * th2 * theta
                            + p_tab[s, 3] * th2 * th2
                        )
                        if qs != 0.0:
                            acc += qs * k_stages[s, j]
                    out_samples[i_sample, j] = y[j] + h * acc
                i_sample += 1
            for j in range(n):
                y[j] = ynew[j]
                f0[j] = k_stages[6, j]  # FSAL
            t = t_new
            n_steps += 1
            if enorm == 0.0:
                factor = max_factor
            else:
                factor = min(max_factor, 0.9 * enorm ** -0.2)
            if clipped:
                factor = max(factor, 1.0)
            h = min(h * factor, max_step)
            max_factor = 10.0
        else:
            h = h * max(0.2, 0.9 * enorm ** -0.2)
            max_factor = 1.0  # no growth right after a rejection

    # emit remaining samples at t_end (grid may include the endpoint)
    while i_sample < n_samples and t_samples[i_sample] <= t_end + 1e-12 * max(1.0, abs(t_end)):
        for j in range(n):
            out_samples[i_sample, j] = y[j]
        i_sample += 1
    return (0, t, y, i_sample, n_steps)


def dp54_integrate(rhs_id, pars, y0, t0, t_end, rtol, atol, max_step, t_samples):
    """Wrapper allocating output storage and invoking the compiled loop."""
    out = np.empty((t_samples.shape[0], y0.shape[0]), dtype=np.complex128)
    status, t_last, y_final, n_filled, n_steps = _dp54_loop(
        rhs_id,
        np.asarray(pars, dtype=np.complex128),
        np.asarray(y0, dtype=np.complex128),
        float(t0),
        float(t_end),
        float(rtol),
        float(atol),
        float(max_step),
        np.asarray(t_samples, dtype=np.float64),
        out,
        _A,
        _B,
        _C,
        _E,
        _P,
    )
    return status, t_last, y_final, n_filled, n_steps, out
