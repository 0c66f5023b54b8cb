"""Parameter types, the optomechanics-to-Dicke mapping, and closed-form results.

Everything is expressed in units of the membrane-membrane coupling J
(set J=1 to work in these units directly).  Derived quantities (classical
cavity amplitude, bare membrane frequencies, critical couplings, broken
symmetry steady states, effective potential) are computed on demand and
never stored, so a parameter set cannot drift into an inconsistent state.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace


class ParameterError(ValueError):
    """Raised when a physical parameter or combination is rejected."""


def classical_amplitude(drive: complex, delta: float, kappa: float) -> complex:
    """Classical amplitude of the driven cavity mode, A / (i*kappa - delta)."""
    if delta == 0.0 and kappa == 0.0:
        raise ParameterError("classical amplitude undefined for delta = kappa = 0")
    return complex(drive) / complex(-delta, kappa)


def amplitude_from_power(power: float, kappa: float, omega_c: float) -> float:
    """Drive amplitude sqrt(2 * P * kappa / omega_c) from the laser power."""
    if power < 0:
        raise ParameterError("power must be >= 0")
    if kappa <= 0 or omega_c <= 0:
        raise ParameterError("kappa and omega_c must be > 0")
    return math.sqrt(2.0 * power * kappa / omega_c)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the two-membrane cavity model.

    delta      cavity detuning (> 0 for all closed-form results)
    drive      drive amplitude; complex so pulse schedules can carry a phase
    kappa      cavity field decay rate
    g1, g2     second-order optomechanical couplings (symmetric case g1 = g2)
    j_coupling direct membrane-membrane coupling J
    omega_m    matched effective mechanical frequency
    gamma      mechanical decay rate of each membrane
    n_phonon   total phonon number N (continuous mean-field quantity)
    """

    delta: float
    drive: complex
    kappa: float
    g1: float
    g2: float
    j_coupling: float
    omega_m: float
    gamma: float = 0.0
    n_phonon: float = 200.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ParameterError("kappa must be >= 0")
        if self.gamma < 0:
            raise ParameterError("gamma must be >= 0")
        if self.j_coupling <= 0:
            raise ParameterError("j_coupling must be > 0")
        if self.n_phonon <= 0:
            raise ParameterError("n_phonon must be > 0")
        if self.omega_m <= 0:
            raise ParameterError("omega_m must be > 0")
        if self.delta == 0.0 and self.kappa == 0.0:
            raise ParameterError("delta and kappa cannot both vanish")
        # reject parameter sets whose bare membrane frequencies come out negative
        w1, w2 = membrane_frequencies(self)
        if w1 <= 0 or w2 <= 0:
            raise ParameterError(
                f"bare membrane frequencies must be positive, got ({w1:g}, {w2:g})"
            )

    @property
    def alpha(self) -> complex:
        return classical_amplitude(self.drive, self.delta, self.kappa)

    @property
    def alpha_abs(self) -> float:
        return abs(self.alpha)

    @property
    def symmetric_g(self) -> float:
        if self.g1 != self.g2:
            raise ParameterError(
                "g1 != g2: closed-form results hold only for symmetric couplings; "
                "use the mean-field simulator for the asymmetric case"
            )
        return self.g1

    def with_phase(self, delta: float, drive: complex) -> "ModelParams":
        """Copy with a different (detuning, drive) working point."""
        return replace(self, delta=delta, drive=drive)


def membrane_frequencies(params: ModelParams) -> tuple[float, float]:
    """Bare membrane frequencies that yield equal effective frequencies omega_m.

    omega_1 = omega_m - 2J - 2 g1 |alpha|^2 and
    omega_2 = omega_m - 2J + 2 g2 |alpha|^2, so both light-shifted
    frequencies equal omega_m at the chosen working point.
    """
    a2 = abs(classical_amplitude(params.drive, params.delta, params.kappa)) ** 2
    w1 = params.omega_m - 2.0 * params.j_coupling - 2.0 * params.g1 * a2
    w2 = params.omega_m - 2.0 * params.j_coupling + 2.0 * params.g2 * a2
    return (w1, w2)


@dataclass(frozen=True)
class DickeParams:
    """Parameters of the equivalent open Dicke model."""

    omega0: float      # cavity frequency, = delta
    omegaz: float      # collective spin frequency, = 4J
    coupling: float    # lambda = 2 g |alpha| sqrt(N)
    n_atoms: float     # ensemble size, identified with the phonon number N

    def __post_init__(self):
        if not (math.isfinite(self.omega0) and math.isfinite(self.omegaz)):
            raise ParameterError("omega0, omegaz must be finite")
        if self.coupling < 0:
            raise ParameterError("coupling must be >= 0")
        if self.n_atoms <= 0:
            raise ParameterError("n_atoms must be > 0")


def dicke_params(params: ModelParams) -> DickeParams:
    """Map symmetric-coupling model parameters onto the Dicke model."""
    g = params.symmetric_g
    return DickeParams(
        omega0=params.delta,
        omegaz=4.0 * params.j_coupling,
        coupling=2.0 * abs(g) * params.alpha_abs * math.sqrt(params.n_phonon),
        n_atoms=params.n_phonon,
    )


def critical_coupling_dicke(dicke: DickeParams, kappa: float) -> float:
    """Dicke critical coupling lambda_c = sqrt((w0^2 + kappa^2) wz / (4 w0))."""
    if dicke.omega0 <= 0:
        raise ParameterError("omega0 must be > 0 (positive detuning)")
    if dicke.omegaz <= 0:
        raise ParameterError("omegaz must be > 0")
    return math.sqrt(
        (dicke.omega0**2 + kappa**2) * dicke.omegaz / (4.0 * dicke.omega0)
    )


def critical_coupling(params: ModelParams) -> float:
    """Optomechanical critical coupling g_c = sqrt((D^2+k^2) J / (4|a|^2 N D))."""
    if params.delta <= 0:
        raise ParameterError("delta must be > 0")
    a2 = params.alpha_abs**2
    if a2 == 0:
        raise ParameterError("zero classical amplitude: no transition")
    return math.sqrt(
        (params.delta**2 + params.kappa**2)
        * params.j_coupling
        / (4.0 * a2 * params.n_phonon * params.delta)
    )


@dataclass(frozen=True)
class SteadyState:
    """Mean-field stationary state of the effective model.

    ``d_bar`` and ``delta_n_bar`` are the actual fixed-point values of the
    displaced cavity amplitude and the phonon imbalance, so for branch = +1
    the imbalance is positive and the cavity displacement carries the
    opposite sign (the two broken states pair +delta_n with -d and vice
    versa).  In the normal phase both vanish.
    """

    d_bar: complex
    delta_n_bar: float
    branch: int


def steady_state(params: ModelParams, g: float, branch: int = +1) -> SteadyState:
    """Stationary state for coupling g: normal below g_c, broken above."""
    if branch not in (+1, -1):
        raise ParameterError("branch must be +1 or -1")
    if params.delta <= 0:
        raise ParameterError("delta must be > 0")
    gc = critical_coupling(params)
    if g <= gc:
        return SteadyState(d_bar=0.0 + 0.0j, delta_n_bar=0.0, branch=branch)
    root = math.sqrt(1.0 - (gc / g) ** 4)
    d_mag = (
        2.0 * g * params.alpha_abs * params.n_phonon
        / complex(params.delta, -params.kappa)
        * root
    )
    dn = 0.5 * params.n_phonon * root
    return SteadyState(d_bar=-branch * d_mag, delta_n_bar=branch * dn, branch=branch)


def effective_frequency(g: float, g_c: float, j_coupling: float) -> float:
    """Effective rotating-frame frequency of the membrane normal mode.

    2J below threshold; 2J g^2/g_c^2 above (continuous at g = g_c).
    """
    if g_c <= 0:
        raise ParameterError("g_c must be > 0")
    if g > g_c:
        return 2.0 * j_coupling * (g / g_c) ** 2
    return 2.0 * j_coupling


def mode_amplitudes(
    d: complex, omega: float, params: ModelParams, g: float | None = None
) -> tuple[float, float]:
    """Squared stationary membrane amplitudes (|b1|^2, |b2|^2).

    Evaluated on the rotating ansatz b_i = beta_i exp(i omega t) for a given
    cavity displacement d; the pair always sums to the total phonon number.
    """
    if g is None:
        g = params.symmetric_g
    n = params.n_phonon
    jj = params.j_coupling
    x = 2.0 * g * params.alpha_abs * (d + d.conjugate()).real
    denom = 4.0 * jj**2 + (x + omega) ** 2
    if denom == 0:
        raise ParameterError("degenerate mode amplitudes: 4J^2 + (x+w)^2 = 0")
    b1 = 4.0 * jj**2 * n / denom
    b2 = n * (x + omega) ** 2 / denom
    return (b1, b2)


def stationary_mean_field(params: ModelParams, g: float, branch: int = +1):
    """Full mean-field fixed point (b1, b2, d) for the effective model.

    Membrane amplitudes are the positive real representatives; the entire
    orbit is (b1, b2) * exp(i omega t) with omega from effective_frequency.
    """
    ss = steady_state(params, g, branch)
    gc = critical_coupling(params)
    if g <= gc:
        b = math.sqrt(params.n_phonon / 2.0)
        return (b, b, 0.0 + 0.0j)
    omega = effective_frequency(g, gc, params.j_coupling)
    # the branch with positive imbalance pairs with x = 2g|a|(d+d*) < 0,
    # i.e. omega^2 = 4J^2 + x^2 resolves to x = -sqrt(omega^2 - 4J^2) there
    b1sq, b2sq = mode_amplitudes(ss.d_bar, omega, params, g)
    return (math.sqrt(b1sq), math.sqrt(b2sq), ss.d_bar)


def effective_potential(x: float, params: ModelParams, g: float) -> float:
    """Effective potential governing the cavity quadrature x = (d + d*)/sqrt2.

    V(x) = (1/2)(delta^2 + kappa^2) x^2 - 2 delta N sqrt(J^2 + 2|alpha|^2 g^2 x^2).

    The square-root term enters with a minus sign for positive detuning:
    that sign is fixed by the quadrature equation of motion and is what
    produces the double well above threshold (V''(0) changes sign exactly
    at g = g_c).
    """
    a2 = params.alpha_abs**2
    return 0.5 * (params.delta**2 + params.kappa**2) * x * x - (
        2.0
        * params.delta
        * params.n_phonon
        * math.sqrt(params.j_coupling**2 + 2.0 * a2 * g * g * x * x)
    )


def effective_potential_gradient(x: float, params: ModelParams, g: float) -> float:
    """dV/dx of the effective cavity potential."""
    a2 = params.alpha_abs**2
    root = math.sqrt(params.j_coupling**2 + 2.0 * a2 * g * g * x * x)
    return (params.delta**2 + params.kappa**2) * x - (
        4.0 * params.delta * params.n_phonon * a2 * g * g * x / root
    )


def potential_minima(params: ModelParams, g: float) -> tuple[float, ...]:
    """Stationary minima of the effective potential (0,) or (-x*, +x*)."""
    gc = critical_coupling(params)
    if g <= gc:
        return (0.0,)
    # solve dV/dx = 0 for x != 0 in closed form
    a2 = params.alpha_abs**2
    d2k2 = params.delta**2 + params.kappa**2
    rhs = (4.0 * params.delta * params.n_phonon * a2 * g * g / d2k2) ** 2
    xsq = (rhs - params.j_coupling**2) / (2.0 * a2 * g * g)
    xs = math.sqrt(xsq)
    return (-xs, xs)
