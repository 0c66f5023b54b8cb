"""Small-N Lindblad dynamics of the effective Hamiltonian in the collective
spin representation: truncated-Fock cavity coupled to a spin N/2, with
cavity decay as the only dissipation channel.

The density matrix is evolved by adaptive explicit Runge-Kutta on the
vectorized master equation; the Liouvillian is applied through a sparse
matrix for speed, and a dense matrix-exponential propagator is available
as an independent oracle at small dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import ode, solve_ivp

from .model import ModelParams, ParameterError, mode_amplitudes, steady_state
from .dtc import PulseSchedule


@dataclass(frozen=True)
class HilbertSpec:
    """Truncated product space: cavity Fock levels 0..fock_cutoff, spin N/2."""

    n_phonon: int
    fock_cutoff: int
    dim_limit: int = 20000

    def __post_init__(self):
        if self.n_phonon < 0:
            raise ParameterError("n_phonon must be >= 0")
        if self.fock_cutoff < 1:
            raise ParameterError("fock_cutoff must be >= 1")
        if self.dim > self.dim_limit:
            raise ParameterError(
                f"Hilbert dimension {self.dim} exceeds the limit {self.dim_limit}"
            )

    @property
    def spin_dim(self) -> int:
        return self.n_phonon + 1

    @property
    def cav_dim(self) -> int:
        return self.fock_cutoff + 1

    @property
    def dim(self) -> int:
        return (self.n_phonon + 1) * (self.fock_cutoff + 1)


def spin_matrices(two_j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (Jx, Jy, Jz) for spin j = two_j / 2 in the Jz eigenbasis."""
    j = two_j / 2.0
    m = j - np.arange(two_j + 1)
    jz = np.diag(m).astype(complex)
    cp = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp = np.zeros((two_j + 1, two_j + 1), dtype=complex)
    jp[np.arange(two_j), np.arange(1, two_j + 1)] = cp
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    return jx, jy, jz


@dataclass
class OperatorSet:
    """Dense operators on the product space (cavity factor first)."""

    spec: HilbertSpec
    d: np.ndarray
    d_dag: np.ndarray
    n_cav: np.ndarray
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray


def build_operators(spec: HilbertSpec) -> OperatorSet:
    """Truncated cavity ladder and spin components as tensor products."""
    nc = spec.cav_dim
    a = np.zeros((nc, nc), dtype=complex)
    a[np.arange(nc - 1), np.arange(1, nc)] = np.sqrt(np.arange(1, nc))
    eye_s = np.eye(spec.spin_dim, dtype=complex)
    eye_c = np.eye(nc, dtype=complex)
    sx, sy, sz = spin_matrices(spec.n_phonon)
    return OperatorSet(
        spec=spec,
        d=np.kron(a, eye_s),
        d_dag=np.kron(a.conj().T, eye_s),
        n_cav=np.kron(a.conj().T @ a, eye_s),
        jx=np.kron(eye_c, sx),
        jy=np.kron(eye_c, sy),
        jz=np.kron(eye_c, sz),
    )


def build_hamiltonian(
    spec: HilbertSpec,
    delta: float,
    j_coupling: float,
    g: float,
    alpha_mod: float,
    ops: OperatorSet | None = None,
) -> np.ndarray:
    """H = delta d'd + 4J Jz + 4 g |alpha| (d + d') Jx on the product space."""
    if ops is None:
        ops = build_operators(spec)
    return (
        delta * ops.n_cav
        + 4.0 * j_coupling * ops.jz
        + 4.0 * g * alpha_mod * (ops.d + ops.d_dag) @ ops.jx
    )


@dataclass
class QuantumState:
    """Density matrix on the truncated product space at a given time."""

    rho: np.ndarray
    time: float = 0.0

    def validate(self, check_positivity: bool = True) -> None:
        herm = np.max(np.abs(self.rho - self.rho.conj().T))
        if herm > 1e-10:
            raise ValueError(f"density matrix not Hermitian: deviation {herm:.3g}")
        tr = np.trace(self.rho).real
        if abs(tr - 1.0) > 1e-8:
            raise ValueError(f"trace deviates from 1 by {tr - 1.0:.3g}")
        if check_positivity:
            lam = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
            if lam[0] < -1e-7:
                raise ValueError(
                    f"negative eigenvalue {lam[0]:.3g}: increase fock_cutoff"
                )

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(op @ self.rho))

    @property
    def purity(self) -> float:
        return float(np.real(np.sum(self.rho * self.rho.T)))


def liouvillian(H: np.ndarray, collapse: np.ndarray, rate: float) -> sp.csr_matrix:
    """Sparse vectorized generator for drho/dt (row-major vec convention)."""
    dim = H.shape[0]
    eye = sp.identity(dim, dtype=complex, format="csr")
    hs = sp.csr_matrix(H)
    cs = sp.csr_matrix(collapse)
    cdc = (cs.conj().T @ cs).tocsr()
    lv = -1j * (sp.kron(hs, eye) - sp.kron(eye, hs.T))
    lv = lv + rate * (
        sp.kron(cs, cs.conj())
        - 0.5 * (sp.kron(cdc, eye) + sp.kron(eye, cdc.T))
    )
    return lv.tocsr()


def _symmetrize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def evolve_master_equation(
    rho0: np.ndarray,
    lv: sp.csr_matrix,
    t_span: tuple[float, float],
    t_eval: np.ndarray,
    *,
    method: str = "DOP853",
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> np.ndarray:
    """Evolution of vec(rho); returns rho at each t_eval.

    Methods: adaptive explicit Runge-Kutta ("DOP853", "RK45"; the default),
    "zvode" (adaptive complex Adams multistep, much faster on large
    Hilbert spaces), or "expm" (dense matrix exponential of the generator,
    exact up to roundoff; small dimensions only).
    """
    dim = rho0.shape[0]
    out = np.empty((len(t_eval), dim, dim), dtype=complex)
    if method == "nbrk45":
        from ._lindblad_rk import rk45_csr_evolve

        ys = rk45_csr_evolve(lv, rho0.reshape(-1), t_eval, rtol, atol)
        for i in range(len(t_eval)):
            out[i] = _symmetrize(ys[i].reshape(dim, dim))
        return out
    if method == "expm":
        dense = lv.toarray()
        t_prev = t_span[0]
        rho = rho0.reshape(-1).copy()
        for i, t in enumerate(t_eval):
            if t > t_prev:
                rho = scipy.linalg.expm(dense * (t - t_prev)) @ rho
                t_prev = t
            out[i] = _symmetrize(rho.reshape(dim, dim))
        return out
    if method == "zvode":
        r = ode(lambda t, y: lv.dot(y))
        r.set_integrator("zvode", method="adams", rtol=rtol, atol=atol, nsteps=10**7)
        r.set_initial_value(rho0.reshape(-1).astype(complex), t_span[0])
        for i, t in enumerate(t_eval):
            if t > r.t:
                r.integrate(t)
                if not r.successful():
                    raise RuntimeError("master-equation integration failed (zvode)")
            out[i] = _symmetrize(r.y.reshape(dim, dim))
        return out
    sol = solve_ivp(
        lambda t, y: lv.dot(y),
        t_span,
        rho0.reshape(-1),
        method=method,
        t_eval=t_eval,
        rtol=rtol,
        atol=atol,
        dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")
    for i in range(len(t_eval)):
        out[i] = _symmetrize(sol.y[:, i].reshape(dim, dim))
    return out


def lindblad_step(
    state: QuantumState,
    H: np.ndarray,
    kappa_rate: float,
    t_step: float,
    *,
    collapse: np.ndarray | None = None,
    lindblad_rate: float | None = None,
    method: str = "DOP853",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    ops: OperatorSet | None = None,
    spec: HilbertSpec | None = None,
) -> QuantumState:
    """Evolve the state by t_step under H with cavity decay.

    The dissipator rate defaults to 2*kappa so the field amplitude obeys
    d<d>/dt = -(i delta + kappa) <d>, consistent with the mean-field
    equations (the bare master equation as printed would halve the
    amplitude decay); pass lindblad_rate to override.
    """
    if collapse is None:
        if ops is None:
            if spec is None:
                raise ParameterError("need collapse operator, ops or spec")
            ops = build_operators(spec)
        collapse = ops.d
    rate = 2.0 * kappa_rate if lindblad_rate is None else lindblad_rate
    lv = liouvillian(H, collapse, rate)
    rho = evolve_master_equation(
        state.rho, lv, (0.0, t_step), np.array([t_step]),
        method=method, rtol=rtol, atol=atol,
    )[0]
    return QuantumState(rho=rho, time=state.time + t_step)


def coherent_vector(amplitude: complex, cav_dim: int) -> tuple[np.ndarray, float]:
    """Truncated coherent state |amplitude>; returns (vector, tail mass)."""
    n = np.arange(cav_dim)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    log_mag = n * np.log(max(abs(amplitude), 1e-300)) - 0.5 * log_fact
    mag = np.exp(log_mag - 0.5 * abs(amplitude) ** 2)
    phase = np.exp(1j * n * np.angle(amplitude)) if amplitude != 0 else np.ones(cav_dim)
    vec = mag * phase
    if amplitude == 0:
        vec = np.zeros(cav_dim, dtype=complex)
        vec[0] = 1.0
        return vec, 0.0
    tail = max(0.0, 1.0 - float(np.sum(mag**2)))
    return vec / np.linalg.norm(vec), tail


def required_fock_cutoff(amplitude: float, tail: float = 1e-8, headroom: int = 10) -> int:
    """Smallest cutoff keeping the coherent tail below ``tail``, plus headroom."""
    nbar = amplitude**2
    n = max(4, int(nbar))
    while True:
        _, t = coherent_vector(amplitude, n + 1)
        if t < tail:
            return n + headroom
        n += 1


def spin_coherent_vector(direction: np.ndarray, two_j: int) -> np.ndarray:
    """Spin coherent state along the unit vector ``direction``."""
    nx, ny, nz = direction
    jx, jy, jz = spin_matrices(two_j)
    theta = math.atan2(math.hypot(nx, ny), nz)
    phi = math.atan2(ny, nx)
    top = np.zeros(two_j + 1, dtype=complex)
    top[0] = 1.0  # |j, m = +j>
    rot = scipy.linalg.expm(-1j * theta * (math.sin(phi) * (-jx) + math.cos(phi) * jy))
    # rotation about the axis (-sin phi, cos phi, 0) carries +z onto direction
    return rot @ top


def initial_state(
    spec: HilbertSpec,
    params: ModelParams,
    g: float,
    branch: int = +1,
    *,
    tail_tol: float = 1e-8,
) -> tuple[QuantumState, dict]:
    """Product of a cavity coherent state and a spin coherent state matched
    to the mean-field broken-symmetry fixed point of ``params``.

    Returns the pure initial state and a diagnostics dict (tail mass,
    spin direction, coherent amplitude).
    """
    ss = steady_state(params, g, branch)
    from .model import critical_coupling, effective_frequency

    gc = critical_coupling(params)
    omega = effective_frequency(g, gc, params.j_coupling)
    b1sq, b2sq = mode_amplitudes(ss.d_bar, omega, params, g)
    beta_prod = math.sqrt(b1sq * b2sq)
    j = spec.n_phonon / 2.0
    # Schwinger expectation values of the mean-field state: (Jx, Jy, Jz)
    direction = np.array([ss.delta_n_bar, 0.0, -beta_prod])
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else np.array([0.0, 0.0, -1.0])

    cav_vec, tail = coherent_vector(ss.d_bar, spec.cav_dim)
    if tail > tail_tol:
        raise ParameterError(
            f"coherent tail mass {tail:.3g} exceeds {tail_tol:.3g}: "
            f"increase fock_cutoff (|d| = {abs(ss.d_bar):.3g})"
        )
    spin_vec = spin_coherent_vector(direction, spec.n_phonon)
    psi = np.kron(cav_vec, spin_vec)
    rho = np.outer(psi, psi.conj())
    info = {
        "coherent_amplitude": ss.d_bar,
        "tail_mass": tail,
        "spin_direction": direction.tolist(),
        "delta_n_bar": ss.delta_n_bar,
    }
    return QuantumState(rho=rho, time=0.0), info


@dataclass
class QuantumTrajectory:
    """Observable records of a quantum protocol run."""

    times: np.ndarray
    d_expect: np.ndarray
    n_cav: np.ndarray
    jx_over_n: np.ndarray
    purity: np.ndarray
    strobe_k: np.ndarray
    strobe_jx_over_n: np.ndarray
    meta: dict = field(default_factory=dict)


def run_quantum_protocol(
    spec: HilbertSpec,
    schedule: PulseSchedule,
    params: ModelParams,
    n_periods: int,
    *,
    g: float | None = None,
    method: str = "DOP853",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    lindblad_rate: float | None = None,
    samples_per_phase: int = 4,
    check: str = "strobe",
    initial: QuantumState | None = None,
    init_info: dict | None = None,
) -> QuantumTrajectory:
    """Evolve the master equation under the two-phase pulse schedule.

    The two phase Liouvillians are built once and reused every period.
    check: "off", "strobe" (validate at period boundaries) or "all".
    """
    if g is None:
        g = params.symmetric_g
    if spec.n_phonon != int(round(params.n_phonon)):
        raise ParameterError("spec.n_phonon must match params.n_phonon")
    p2 = params.with_phase(schedule.delta2, schedule.drive2)
    if initial is None:
        initial, init_info = initial_state(spec, p2, g)
    alpha_mod = abs(schedule.alpha)
    ops = build_operators(spec)
    rate = 2.0 * params.kappa if lindblad_rate is None else lindblad_rate
    h1 = build_hamiltonian(spec, schedule.delta1, params.j_coupling, g, alpha_mod, ops)
    h2 = build_hamiltonian(spec, schedule.delta2, params.j_coupling, g, alpha_mod, ops)
    lv1 = liouvillian(h1, ops.d, rate)
    lv2 = liouvillian(h2, ops.d, rate)
    jx_s = sp.csr_matrix(ops.jx)
    d_s = sp.csr_matrix(ops.d)
    ncav_s = sp.csr_matrix(ops.n_cav)

    def observables(rho):
        jx = np.real(jx_s.multiply(rho.T).sum())
        dex = complex(d_s.multiply(rho.T).sum())
        nc = np.real(ncav_s.multiply(rho.T).sum())
        pur = float(np.real(np.sum(rho * rho.T)))
        return jx, dex, nc, pur

    n_big = spec.n_phonon
    rho = initial.rho.copy()
    times = [0.0]
    jx0, d0, nc0, pur0 = observables(rho)
    jx_list, d_list, nc_list, pur_list = [jx0 / n_big], [d0], [nc0], [pur0]
    strobe = [jx0 / n_big]
    t0 = 0.0
    for k in range(n_periods):
        for lv, span in ((lv1, schedule.t1), (lv2, schedule.t2)):
            te = np.linspace(0.0, span, samples_per_phase + 1)[1:]
            rhos = evolve_master_equation(
                rho, lv, (0.0, span), te, method=method, rtol=rtol, atol=atol
            )
            for i, tt in enumerate(te):
                jx, dex, nc, pur = observables(rhos[i])
                times.append(t0 + tt)
                jx_list.append(jx / n_big)
                d_list.append(dex)
                nc_list.append(nc)
                pur_list.append(pur)
                if check == "all":
                    QuantumState(rhos[i], t0 + tt).validate()
            rho = rhos[-1]
            t0 += span
        strobe.append(jx_list[-1])
        if check in ("strobe", "all"):
            QuantumState(rho, t0).validate()
    meta = {
        "fock_cutoff": spec.fock_cutoff,
        "dim": spec.dim,
        "method": method,
        "rtol": rtol,
        "atol": atol,
        "lindblad_rate": rate,
        "g": g,
    }
    if init_info:
        meta["initial_state"] = {
            k: (v if not isinstance(v, complex) else [v.real, v.imag])
            for k, v in init_info.items()
        }
    return QuantumTrajectory(
        times=np.array(times),
        d_expect=np.array(d_list),
        n_cav=np.array(nc_list),
        jx_over_n=np.array(jx_list),
        purity=np.array(pur_list),
        strobe_k=np.arange(n_periods + 1),
        strobe_jx_over_n=np.array(strobe),
        meta=meta,
    )


class LifetimeError(RuntimeError):
    """Stroboscopic series unsuitable for a lifetime fit."""


def extract_lifetime(
    strobe_k: np.ndarray,
    strobe_jx_over_n: np.ndarray,
    period: float,
    *,
    amplitude_floor: float = 1e-3,
    min_alternations: int = 10,
) -> dict:
    """Lifetime of the decaying subharmonic: log-linear fit of |<Jx>(kT)|/N.

    Fits over the window where the amplitude exceeds the floor; requires
    at least ``min_alternations`` consecutive sign alternations at the
    start of the series.  Returns the fit dictionary with ``lifetime``
    (time units; inf for non-decaying series, flagged separately).
    """
    s = np.asarray(strobe_jx_over_n, dtype=float)
    k = np.asarray(strobe_k)
    if len(s) < min_alternations + 1:
        raise LifetimeError("series too short")
    alt = (np.sign(s[1:]) == -np.sign(s[:-1])) & (s[1:] != 0.0) & (s[:-1] != 0.0)
    if not np.all(alt[:min_alternations]):
        raise LifetimeError(
            f"series does not alternate for the first {min_alternations} periods"
        )
    mask = np.abs(s) > amplitude_floor
    mask[0] = False  # the k = 0 sample precedes the first flip
    if np.count_nonzero(mask) < 3:
        raise LifetimeError("too few samples above the amplitude floor")
    t = k[mask] * period
    y = np.log(np.abs(s[mask]))
    slope, intercept = np.polyfit(t, y, 1)
    if slope >= 0:
        return {
            "lifetime": math.inf,
            "slope": float(slope),
            "n_fit": int(np.count_nonzero(mask)),
            "decaying": False,
        }
    return {
        "lifetime": float(-1.0 / slope),
        "slope": float(slope),
        "intercept": float(intercept),
        "n_fit": int(np.count_nonzero(mask)),
        "decaying": True,
    }
