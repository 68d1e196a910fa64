"""Estimators and closed-form laws: visibilities, separability sum, CHSH, concurrence.

Error bars on correlation estimates use the multinomial delta method: for
``E = (N_corr - N_anti) / N`` with ``N`` conclusive events,
``sigma_E^2 = (1 - E^2) / N``. The CHSH parameter adds the four
independent setting errors in quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .opa_states import GainParams
from .records import CountsTable, FringeScan


@dataclass(frozen=True)
class VisibilityResult:
    V: float
    sigma_V: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.V <= 1.0:
            raise ValueError(f"visibility {self.V} outside [0, 1]")


@dataclass(frozen=True)
class CHSHResult:
    E: tuple
    sigma_E: tuple
    S: float
    sigma_S: float

    def __post_init__(self):
        if any(abs(e) > 1.0 + 1e-12 for e in self.E) or abs(self.S) > 4.0 + 1e-12:
            raise ValueError("correlations out of range")


def visibility_probs(p_aligned, p_perp, p_cross, p_cross_perp, n_events: float | None = None, tol: float = 1e-6) -> VisibilityResult:
    """``|P(psi,Phi) + P(psi_perp,Phi_perp) - P(psi,Phi_perp) - P(psi_perp,Phi)|``.

    Inputs are conclusive-renormalized probabilities; ``n_events`` (if given)
    sets the binomial error bar.
    """
    p = np.array([p_aligned, p_perp, p_cross, p_cross_perp], dtype=float)
    if (p < 0).any():
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"probabilities sum to {p.sum()}, expected 1")
    V = float(min(1.0, abs(p[0] + p[1] - p[2] - p[3])))
    sigma = math.sqrt(max(0.0, 1.0 - V * V) / n_events) if n_events else 0.0
    return VisibilityResult(V, sigma)


def visibility_counts(t: CountsTable) -> VisibilityResult:
    n = t.conclusive
    if n <= 0:
        raise ValueError("no conclusive events")
    return visibility_probs(t.n_pp / n, t.n_mm / n, t.n_pm / n, t.n_mp / n, n_events=n)


def visibility_fringe(scan: FringeScan, series: str = "plus") -> VisibilityResult:
    """Fit ``A + B cos(phi) + C sin(phi)`` (fixed period) and return
    ``(I_max - I_min)/(I_max + I_min) = sqrt(B^2 + C^2)/A``."""
    phi = np.asarray(scan.phases, dtype=float)
    y = np.asarray(scan.series(series), dtype=float)
    if np.unique(np.round(np.mod(phi, 2 * math.pi), 12)).size < 3:
        raise ValueError("fringe needs at least three distinct phases")
    X = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    A, B, C = coef
    if A <= 0:
        raise ValueError("degenerate fringe fit (non-positive mean)")
    R = math.hypot(B, C)
    V = float(R / A)
    dof = phi.size - 3
    sigma = 0.0
    if dof > 0 and R > 0:
        resid = y - X @ coef
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(X.T @ X)
        grad = np.array([-V / A, B / (A * R), C / (A * R)])
        sigma = math.sqrt(max(0.0, float(grad @ cov @ grad)))
    return VisibilityResult(float(min(V, 1.0)), sigma)


def separability_S(V1: float, V2: float, V3: float) -> tuple[float, bool]:
    """Visibility sum; a separable state has ``S <= 1``."""
    for v in (V1, V2, V3):
        if not 0.0 <= v <= 1.0:
            raise ValueError("visibilities must lie in [0, 1]")
    S = V1 + V2 + V3
    return S, S > 1.0


def correlation_E(t: CountsTable) -> tuple[float, float]:
    n = t.conclusive
    if n <= 0:
        raise ValueError("no conclusive events")
    E = float((t.correlated - t.anticorrelated) / n)
    return E, math.sqrt(max(0.0, 1.0 - E * E) / n)


def chsh_S(E) -> CHSHResult:
    """``S = E(a,b) + E(a',b) + E(a,b') - E(a',b')``.

    ``E`` is four ``(E, sigma)`` pairs ordered (a,b), (a',b), (a,b'), (a',b').
    """
    E = [tuple(e) if isinstance(e, (tuple, list)) else (float(e), 0.0) for e in E]
    if len(E) != 4:
        raise ValueError("need exactly four settings")
    vals = tuple(float(e[0]) for e in E)
    sig = tuple(float(e[1]) for e in E)
    S = vals[0] + vals[1] + vals[2] - vals[3]
    return CHSHResult(vals, sig, S, math.sqrt(sum(s * s for s in sig)))


def two_photon_fringe_law(phi: float, gp: GainParams) -> tuple[float, float, float]:
    """Mean photon numbers in the ``+``/``-`` modes for the amplified ``|2 phi>`` seed.

    ``N+ = mbar + (4 mbar + 2) cos^2(phi/2)`` and ``N- = mbar + (4 mbar + 2) sin^2(phi/2)``,
    which reach ``5 mbar + 2`` at ``phi = 0`` and ``mbar`` at ``phi = pi``. The
    third value is the gain-dependent visibility ``(4 mbar + 1)/(6 mbar + 2)``.
    """
    m = gp.mbar
    c2 = math.cos(phi / 2.0) ** 2
    n_plus = m + (4.0 * m + 2.0) * c2
    n_minus = m + (4.0 * m + 2.0) * (1.0 - c2)
    return n_plus, n_minus, (4.0 * m + 1.0) / (6.0 * m + 2.0)


def thermal_threshold_prob(mean_n: float, k: int) -> float:
    """Probability that a thermal count reaches ``k``: ``(<n>/(1+<n>))^k``."""
    if mean_n <= 0:
        raise ValueError("mean photon number must be > 0")
    if k < 0 or int(k) != k:
        raise ValueError("k must be a non-negative integer")
    return (mean_n / (1.0 + mean_n)) ** int(k)


_SY2 = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def wootters_concurrence(rho: np.ndarray, tol: float = 1e-9) -> float:
    """Concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("expected a 4x4 density matrix")
    if not np.allclose(rho, rho.conj().T, atol=tol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError("density matrix trace is not 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("density matrix is not positive")
    rt = _SY2 @ rho.conj() @ _SY2
    ev = np.linalg.eigvals(rho @ rt)
    lam = np.sort(np.sqrt(np.clip(ev.real, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))
