"""Mean-field dynamics of the full and effective models.

Provides the right-hand sides of both sets of equations of motion, a
deterministic adaptive Dormand-Prince 5(4) integrator with uniform
trajectory sampling, and CSV/JSON trajectory export.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _dp54
from .model import ModelParams, membrane_frequencies


class IntegrationError(RuntimeError):
    """Integration failure; carries the last successfully reached time."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last good time t = {t_last:.6g})")
        self.t_last = t_last


@dataclass(frozen=True)
class MeanFieldState:
    """Complex mean-field amplitudes: two membranes plus the cavity slot.

    ``cav`` is the displaced amplitude d for the effective model, or the
    drive-frame cavity amplitude for the full model.
    """

    b1: complex
    b2: complex
    cav: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.b1, self.b2, self.cav], dtype=np.complex128)

    @staticmethod
    def from_array(y) -> "MeanFieldState":
        return MeanFieldState(complex(y[0]), complex(y[1]), complex(y[2]))

    @property
    def delta_n(self) -> float:
        return 0.5 * (abs(self.b1) ** 2 - abs(self.b2) ** 2)

    @property
    def n_total(self) -> float:
        return abs(self.b1) ** 2 + abs(self.b2) ** 2


class EffectiveRHS:
    """d/dt of (b1, b2, d) for the effective (rotating-frame) model."""

    rhs_id = _dp54.RHS_EFFECTIVE

    def __init__(self, params: ModelParams, g1: float | None = None, g2: float | None = None):
        self.params = params
        g1 = params.g1 if g1 is None else g1
        g2 = params.g2 if g2 is None else g2
        a = params.alpha_abs
        self.pars = np.array(
            [
                params.delta,
                params.j_coupling,
                params.kappa,
                params.gamma,
                2.0 * g1 * a,
                2.0 * g2 * a,
            ],
            dtype=np.complex128,
        )
        self.cav_ref = 0.0 + 0.0j

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.empty(3, dtype=np.complex128)
        delta, jj, kap, gam, c1, c2 = (p.real for p in self.pars)
        b1, b2, d = y
        x = 2.0 * d.real
        out[0] = -1j * (c1 * x * b1 - 2 * jj * b2) - gam * b1
        out[1] = -1j * (-c2 * x * b2 - 2 * jj * b1) - gam * b2
        out[2] = -1j * (delta * d + c1 * abs(b1) ** 2 - c2 * abs(b2) ** 2) - kap * d
        return out


class FullRHS:
    """d/dt of (b1, b2, a) for the full model in the drive-rotating frame.

    The cavity amplitude is taken in the frame rotating at the drive
    frequency; the membrane amplitudes stay in the lab frame and oscillate
    near omega_m, so the integrator must resolve that scale (see the
    default max_step below).
    """

    rhs_id = _dp54.RHS_FULL

    def __init__(self, params: ModelParams):
        self.params = params
        w1, w2 = membrane_frequencies(params)
        self.pars = np.array(
            [
                params.delta,
                params.j_coupling,
                params.kappa,
                params.gamma,
                params.g1,
                params.g2,
                w1,
                w2,
                params.drive,
            ],
            dtype=np.complex128,
        )
        self.cav_ref = params.alpha
        self.default_max_step = 2.0 * math.pi / (50.0 * params.omega_m)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.empty(3, dtype=np.complex128)
        delta, jj, kap, gam, g1, g2, w1, w2 = (p.real for p in self.pars[:8])
        drive = complex(self.pars[8])
        b1, b2, a = y
        x1, x2 = 2.0 * b1.real, 2.0 * b2.real
        na = abs(a) ** 2
        xd = x1 - x2
        out[0] = -1j * (w1 * b1 + 2 * g1 * na * x1 + 2 * jj * xd) - gam * b1
        out[1] = -1j * (w2 * b2 - 2 * g2 * na * x2 - 2 * jj * xd) - gam * b2
        out[2] = -1j * (delta * a + (g1 * x1 * x1 - g2 * x2 * x2) * a + drive) - kap * a
        return out


def effective_rhs(state: MeanFieldState, params: ModelParams,
                  g_override: tuple[float, float] | None = None) -> MeanFieldState:
    """Single evaluation of the effective-model equations of motion."""
    g1, g2 = g_override if g_override is not None else (None, None)
    dy = EffectiveRHS(params, g1, g2)(0.0, state.as_array())
    return MeanFieldState.from_array(dy)


def full_rhs(state: MeanFieldState, params: ModelParams) -> MeanFieldState:
    """Single evaluation of the full-model equations of motion."""
    dy = FullRHS(params)(0.0, state.as_array())
    return MeanFieldState.from_array(dy)


@dataclass
class Trajectory:
    """Uniformly sampled mean-field trajectory with derived observables."""

    times: np.ndarray
    states: np.ndarray          # shape (n_samples, 3) complex
    cav_ref: complex            # reference amplitude for |cav - ref|^2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def b1(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def b2(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def cav(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def delta_n(self) -> np.ndarray:
        return 0.5 * (np.abs(self.b1) ** 2 - np.abs(self.b2) ** 2)

    @property
    def n_total(self) -> np.ndarray:
        return np.abs(self.b1) ** 2 + np.abs(self.b2) ** 2

    @property
    def cav_dev_sq(self) -> np.ndarray:
        return np.abs(self.cav - self.cav_ref) ** 2

    def final_state(self) -> MeanFieldState:
        return MeanFieldState.from_array(self.states[-1])

    def to_csv(self, path) -> None:
        from .runner import write_csv

        cols = {
            "t": self.times,
            "re_b1": self.b1.real,
            "im_b1": self.b1.imag,
            "re_b2": self.b2.real,
            "im_b2": self.b2.imag,
            "re_cav": self.cav.real,
            "im_cav": self.cav.imag,
            "delta_n": self.delta_n,
            "n_total": self.n_total,
            "cav_dev_sq": self.cav_dev_sq,
        }
        write_csv(path, cols)

    def write_meta(self, path) -> None:
        Path(path).write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")


def sample_grid(t0: float, t1: float, sample_dt: float) -> np.ndarray:
    """Uniform sample times covering [t0, t1], endpoint always included."""
    if sample_dt <= 0:
        raise ValueError("sample_dt must be > 0")
    n = int(math.floor((t1 - t0) / sample_dt + 1e-9))
    ts = t0 + sample_dt * np.arange(n + 1)
    if ts[-1] < t1 - 1e-9 * max(1.0, abs(t1)):
        ts = np.append(ts, t1)
    else:
        ts[-1] = t1
    return ts


def integrate(
    rhs,
    initial: MeanFieldState,
    t_span: tuple[float, float],
    *,
    sample_dt: float | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    max_step: float | None = None,
    meta: dict | None = None,
) -> Trajectory:
    """Adaptive DP5(4) integration with uniform dense-output sampling.

    ``rhs`` is an :class:`EffectiveRHS` or :class:`FullRHS` instance (fast
    compiled path) or any callable f(t, y) -> dy/dt over complex arrays.
    Deterministic for fixed inputs.  Raises IntegrationError on a
    non-finite state or step-size underflow.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValueError("t_span must be ordered")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be > 0")
    if max_step is None:
        max_step = getattr(rhs, "default_max_step", np.inf)
    if sample_dt is None:
        sample_dt = (t1 - t0) / 500.0 if t1 > t0 else 1.0
    ts = sample_grid(t0, t1, sample_dt)
    y0 = initial.as_array()

    rhs_id = getattr(rhs, "rhs_id", None)
    if rhs_id is not None:
        status, t_last, y_final, n_filled, n_steps, out = _dp54.dp54_integrate(
            rhs_id, rhs.pars, y0, t0, t1, rtol, atol, max_step, ts
        )
    else:
        status, t_last, y_final, n_filled, n_steps, out = _dp54_python(
            rhs, y0, t0, t1, rtol, atol, max_step, ts
        )
    if status == 1:
        raise IntegrationError("non-finite state encountered", t_last)
    if status == 2:
        raise IntegrationError("step size underflow", t_last)
    out[-1] = y_final  # endpoint is the exact step value, not interpolated
    info = {
        "rtol": rtol,
        "atol": atol,
        "max_step": None if np.isinf(max_step) else max_step,
        "sample_dt": sample_dt,
        "n_steps": int(n_steps),
    }
    if meta:
        info.update(meta)
    return Trajectory(times=ts, states=out, cav_ref=getattr(rhs, "cav_ref", 0.0 + 0.0j), meta=info)


def _dp54_python(rhs, y0, t0, t_end, rtol, atol, max_step, t_samples):
    """Pure-python twin of the compiled loop for arbitrary callables."""
    a_tab, b_tab, c_tab, e_tab, p_tab = _dp54._A, _dp54._B, _dp54._C, _dp54._E, _dp54._P
    n = y0.shape[0]
    y = y0.astype(np.complex128).copy()
    t = t0
    out = np.empty((t_samples.shape[0], n), dtype=np.complex128)
    i_sample = 0
    while i_sample < len(t_samples) and t_samples[i_sample] <= t0:
        out[i_sample] = y
        i_sample += 1
    if t_end <= t0:
        return 0, t, y, i_sample, 0, out

    def enorm(err, ya, yb):
        sc = atol + rtol * np.maximum(np.abs(ya), np.abs(yb))
        return math.sqrt(float(np.mean((np.abs(err) / sc) ** 2)))

    f0 = np.asarray(rhs(t, y), dtype=np.complex128)
    if not np.all(np.isfinite(f0)):
        return 1, t, y, i_sample, 0, out
    sc = atol + rtol * np.abs(y)
    d0 = math.sqrt(float(np.mean((np.abs(y) / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((np.abs(f0) / sc) ** 2)))
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, max_step, t_end - t0)

    k = np.empty((7, n), dtype=np.complex128)
    n_steps = 0
    max_factor = 10.0
    while t < t_end:
        if h < 1e-14 * max(1.0, abs(t)):
            return 2, t, y, i_sample, n_steps, out
        clipped = False
        if t + h >= t_end:
            h = t_end - t
            clipped = True
        k[0] = f0
        for s in range(1, 7):
            k[s] = np.asarray(
                rhs(t + c_tab[s] * h, y + h * (a_tab[s, :s] @ k[:s])),
                dtype=np.complex128,
            )
        ynew = y + h * (b_tab @ k)
        err = h * (e_tab @ k)
        if not np.all(np.isfinite(ynew)):
            return 1, t, y, i_sample, n_steps, out
        e = enorm(err, y, ynew)
        if e <= 1.0:
            t_new = t + h
            while i_sample < len(t_samples) and t_samples[i_sample] <= t_new + 1e-14 * max(1.0, abs(t_new)):
                ts = t_samples[i_sample]
                if ts >= t_end:
                    break
                theta = (ts - t) / h
                pvec = np.array([theta, theta**2, theta**3, theta**4])
                out[i_sample] = y + h * ((p_tab @ pvec) @ k)
                i_sample += 1
            y = ynew
            f0 = k[6].copy()
            t = t_new
            n_steps += 1
            factor = max_factor if e == 0.0 else min(max_factor, 0.9 * e**-0.2)
            if clipped:
                factor = max(factor, 1.0)
            h = min(h * factor, max_step)
            max_factor = 10.0
        else:
            h = h * max(0.2, 0.9 * e**-0.2)
            max_factor = 1.0
    while i_sample < len(t_samples) and t_samples[i_sample] <= t_end + 1e-12 * max(1.0, abs(t_end)):
        out[i_sample] = y
        i_sample += 1
    return 0, t, y, i_sample, n_steps, out
