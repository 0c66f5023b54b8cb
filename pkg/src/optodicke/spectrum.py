"""Optical spectrum of the two-membrane cavity: transcendental mode
condition, root finding with branch tracking, the analytic equilibrium
geometry, and finite-difference optomechanical-coupling checks.

Lengths are measured in units of the cavity half-length L unless a
different L is supplied; wave numbers then carry units 1/L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import ParameterError


@dataclass(frozen=True)
class SpectrumProblem:
    """Cavity of half-length L with two membranes of equal transmission."""

    half_length: float
    transmission: float
    x1: float
    x2: float

    def __post_init__(self):
        if self.half_length <= 0:
            raise ParameterError("half_length must be > 0")
        if not (0 < self.transmission <= 1):
            raise ParameterError("transmission must be in (0, 1]")
        if not (-self.half_length < self.x1 < self.x2 < self.half_length):
            raise ParameterError("membrane positions must satisfy -L < x1 < x2 < L")

    @property
    def phi(self) -> float:
        return math.acos(math.sqrt(self.transmission))

    def at(self, x1: float, x2: float) -> "SpectrumProblem":
        return SpectrumProblem(self.half_length, self.transmission, x1, x2)


def spectrum_residual(k: float, prob: SpectrumProblem) -> float:
    """Residual of the transcendental mode condition at wave number k."""
    phi = prob.phi
    length = prob.half_length
    x1, x2 = prob.x1, prob.x2
    sp = math.sin(phi)
    return (
        math.sin(2 * k * length + 2 * phi)
        + math.sin(2 * k * length + 2 * k * (x1 - x2)) * sp * sp
        - 2 * sp * math.cos(k * (x1 - x2) - phi) * math.cos(k * (x1 + x2))
    )


def equilibrium_positions(
    m0: int, m1: int, m2: int, transmission: float, half_length: float = 1.0
) -> tuple[float, float, float]:
    """Analytic working point (k, x1, x2) with vanishing first-order and
    opposite second-order optomechanical couplings."""
    phi = math.acos(math.sqrt(transmission))
    k = ((2 * m0 + 1) * math.pi / 2 - phi) / half_length
    if k <= 0:
        raise ParameterError("resulting wave number must be positive")
    x1 = m1 * math.pi / k
    x2 = (m2 * math.pi + math.pi / 2 - phi) / k
    if not (-half_length < x1 < x2 < half_length):
        raise ParameterError(
            f"equilibrium positions ({x1:.4g}, {x2:.4g}) fall outside the cavity"
        )
    return k, x1, x2


def solve_k(
    prob: SpectrumProblem,
    bracket: tuple[float, float],
    *,
    scan_step: float | None = None,
    residual_tol: float = 1e-12,
) -> np.ndarray:
    """All roots of the mode condition inside the bracket, sorted.

    The bracket is scanned on a grid fine enough to separate branches,
    sign changes are refined by Brent's method, and every root is polished
    until the residual is below residual_tol.  Tangential (non-crossing)
    zeros are not returned.
    """
    lo, hi = bracket
    if not (0 < lo < hi):
        raise ParameterError("bracket must satisfy 0 < lo < hi")
    if scan_step is None:
        scan_step = math.pi / (40.0 * prob.half_length)
    n = max(8, int(math.ceil((hi - lo) / scan_step)))
    ks = np.linspace(lo, hi, n + 1)
    vals = np.array([spectrum_residual(k, prob) for k in ks])
    roots = []
    for i in range(n):
        a, b = ks[i], ks[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb < 0:
            r = brentq(lambda k: spectrum_residual(k, prob), a, b, xtol=1e-15, rtol=8.9e-16)
            if abs(spectrum_residual(r, prob)) > residual_tol:
                raise RuntimeError(f"root polish failed at k = {r:.12g}")
            roots.append(r)
    if vals[-1] == 0.0:
        roots.append(ks[-1])
    return np.array(sorted(roots))


def _root_near(prob: SpectrumProblem, k0: float, window: float) -> float:
    """Root of the mode condition nearest k0 within +-window (branch tracking)."""
    roots = solve_k(prob, (max(k0 - window, 1e-12), k0 + window),
                    scan_step=window / 24.0)
    if roots.size == 0:
        raise RuntimeError(f"no root near k = {k0:.9g} within {window:.3g}")
    r = float(roots[np.argmin(np.abs(roots - k0))])
    if abs(r - k0) > window:
        raise RuntimeError("branch tracking lost the root")
    return r


def coupling_derivatives(
    prob: SpectrumProblem,
    k0: float,
    h: float | None = None,
) -> dict:
    """Finite-difference derivatives of the implicit branch k(x1, x2).

    Central differences with Richardson extrapolation for the second
    derivatives; each displaced geometry is re-solved with branch
    continuity.  Raises if the root moves by more than a quarter branch
    spacing during any displacement.
    """
    length = prob.half_length
    if h is None:
        h = 1e-5 * length
    window = math.pi / (4.0 * length)

    def k_at(dx1: float, dx2: float) -> float:
        moved = prob.at(prob.x1 + dx1, prob.x2 + dx2)
        return _root_near(moved, k0, window)

    def second(axis: int, step: float) -> float:
        if axis == 0:
            kp, km = k_at(step, 0.0), k_at(-step, 0.0)
        else:
            kp, km = k_at(0.0, step), k_at(0.0, -step)
        return (kp - 2.0 * k0 + km) / step**2

    kp1, km1 = k_at(h, 0.0), k_at(-h, 0.0)
    kp2, km2 = k_at(0.0, h), k_at(0.0, -h)
    d1 = (kp1 - km1) / (2 * h)
    d2 = (kp2 - km2) / (2 * h)
    # Richardson: (4 D(h/2) - D(h)) / 3
    d११ = (4.0 * second(0, 0.5 * h) - second(0, h)) / 3.0
    d22 = (4.0 * second(1, 0.5 * h) - second(1, h)) / 3.0
    kpp = k_at(h, h)
    kpm = k_at(h, -h)
    kmp = k_at(-h, h)
    kmm = k_at(-h, -h)
    d12 = (kpp - kpm - kmp + kmm) / (4 * h * h)
    return {
        "dk_dx1": d1,
        "dk_dx2": d2,
        "d2k_dx12": d११,
        "d2k_dx22": d22,
        "d2k_dx1dx2": d12,
        "step": h,
    }


def spectrum_scan(
    prob: SpectrumProblem,
    dx1_grid: np.ndarray,
    dx2_grid: np.ndarray,
    branch_seed: float,
) -> np.ndarray:
    """Branch-tracked surface k(x1 + dx1, x2 + dx2) - branch_seed.

    The scan walks outward from the cell nearest the origin, seeding each
    root search with the nearest already-solved neighbour; cells where the
    branch is lost are set to NaN.
    """
    dx1_grid = np.asarray(dx1_grid, dtype=float)
    dx2_grid = np.asarray(dx2_grid, dtype=float)
    n1, n2 = len(dx1_grid), len(dx2_grid)
    out = np.full((n1, n2), np.nan)
    kmap = np.full((n1, n2), np.nan)
    window = math.pi / (4.0 * prob.half_length)
    i0 = int(np.argmin(np.abs(dx1_grid)))
    j0 = int(np.argmin(np.abs(dx2_grid)))

    order1 = sorted(range(n1), key=lambda i: (abs(i - i0), i))
    order2 = sorted(range(n2), key=lambda j: (abs(j - j0), j))
    for i in order1:
        for j in order2:
            # nearest solved neighbour (or the seed at the starting cell)
            seed = branch_seed
            best = None
            for di, dj in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if (di, dj) != (0, 0) and 0 <= ii < n1 and 0 <= jj < n2:
                    if not math.isnan(kmap[ii, jj]):
                        d = abs(ii - i) + abs(jj - j)
                        if best is None or d < best[0]:
                            best = (d, kmap[ii, jj])
            if best is not None:
                seed = best[1]
            try:
                moved = prob.at(prob.x1 + dx1_grid[i], prob.x2 + dx2_grid[j])
                k = _root_near(moved, seed, window)
            except (RuntimeError, ParameterError):
                continue
            kmap[i, j] = k
            out[i, j] = k - branch_seed
    return out


def curvature_fit(
    dx1_grid: np.ndarray, dx2_grid: np.ndarray, surface: np.ndarray
) -> dict:
    """Least-squares fit surface ~ a dx1^2 + b dx2^2 + c dx1 dx2.

    Also reports the relative RMS misfit of the antisymmetric model
    a (dx1^2 - dx2^2), which is the expected small-displacement form at
    the equilibrium geometry.
    """
    g1, g2 = np.meshgrid(np.asarray(dx1_grid), np.asarray(dx2_grid), indexing="ij")
    mask = np.isfinite(surface)
    a1 = (g1**2)[mask]
    a2 = (g2**2)[mask]
    a3 = (g1 * g2)[mask]
    rhs = surface[mask]
    mat = np.column_stack([a1, a2, a3])
    coef, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    a, b, c = coef
    sym, *_ = np.linalg.lstsq((a1 - a2)[:, None], rhs, rcond=None)
    model = sym[0] * (a1 - a2)
    scale = float(np.max(np.abs(rhs))) or 1.0
    misfit = float(np.sqrt(np.mean((rhs - model) ** 2))) / scale
    return {"a": float(a), "b": float(b), "cross": float(c),
            "antisym_coeff": float(sym[0]), "antisym_rel_rms": misfit}
