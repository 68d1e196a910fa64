"""Independent reference constructions used only by the tests."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm


def lfact(n: int) -> float:
    return math.lgamma(n + 1)


def gamma_ij(i: int, j: int, C: float, G: float) -> float:
    return C**-2 * (-G / 2) ** i * (G / 2) ** j


def single_photon_series(g: float, n: int, which: str) -> np.ndarray:
    """Printed sums for the amplified single photon, written out term by term."""
    C, G = math.cosh(g), math.tanh(g)
    c = np.zeros((n + 1, n + 1))
    for i in range(n // 2 + 1):
        for j in range(n // 2 + 1):
            if 2 * i + 1 > n:
                continue
            v = gamma_ij(i, j, C, G) * math.exp(0.5 * (lfact(2 * i + 1) + lfact(2 * j)) - lfact(i) - lfact(j))
            if which == "aligned":
                c[2 * i + 1, 2 * j] = v
            else:
                c[2 * j, 2 * i + 1] = v
    return c


def two_photon_series(g: float, n: int, first: float, second: float, swap: bool = False) -> np.ndarray:
    """Two-sum form for the amplified ``|2,0>`` with free prefactors."""
    C, G = math.cosh(g), math.tanh(g)
    c = np.zeros((n + 1, n + 1))
    for i in range(n // 2 + 1):
        for j in range(n // 2 + 1):
            gm = gamma_ij(i, j, C, G)
            base = 0.5 * lfact(2 * j) - lfact(i) - lfact(j)
            c[2 * i, 2 * j] += first * gm * math.exp(0.5 * lfact(2 * i) + base)
            if 2 * i + 2 <= n:
                c[2 * i + 2, 2 * j] += second * gm * math.exp(0.5 * lfact(2 * i + 2) + base)
    return c.T.copy() if swap else c


def plus_minus_series(g: float, n: int) -> np.ndarray:
    C, G = math.cosh(g), math.tanh(g)
    c = np.zeros((n + 1, n + 1))
    for i in range((n - 1) // 2 + 1):
        for j in range((n - 1) // 2 + 1):
            c[2 * i + 1, 2 * j + 1] = C**-3 * (-1) ** j * (G / 2) ** (i + j) * math.exp(
                0.5 * (lfact(2 * i + 1) + lfact(2 * j + 1)) - lfact(i) - lfact(j)
            )
    return c


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a.ravel(), b.ravel()
    return abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


def ladder(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n + 1)), 1)


def equatorial_ket_in_hv(p: int, q: int, phi: float, n: int) -> np.ndarray:
    """``|p, q>`` of the equatorial modes expanded on the H/V Fock grid.

    First mode ``a^dag = (h^dag + e^{i phi} v^dag)/sqrt 2``; second mode
    ``b^dag = (-e^{-i phi} h^dag + v^dag)/sqrt 2``. Expanded with binomials.
    """
    out = np.zeros((n + 1, n + 1), dtype=complex)
    e = np.exp(1j * phi)
    for r in range(p + 1):
        for s in range(q + 1):
            # h^(r + s) v^(p - r + q - s)
            coef = math.comb(p, r) * math.comb(q, s) * e ** (p - r) * (-1 / e) ** s
            nh, nv = r + s, p - r + q - s
            out[nh, nv] += coef * math.sqrt(math.factorial(nh) * math.factorial(nv))
    return out / math.sqrt(2 ** (p + q) * math.factorial(p) * math.factorial(q))


def thin_by_purification(c: np.ndarray, eta: float) -> np.ndarray:
    """Loss on a pure single-mode state via a beam splitter with a vacuum ancilla."""
    n = c.size - 1
    a = np.kron(ladder(n), np.eye(n + 1))
    b = np.kron(np.eye(n + 1), ladder(n))
    th = math.acos(math.sqrt(eta))
    U = expm(th * (a.conj().T @ b - b.conj().T @ a))
    psi = np.kron(c, np.eye(n + 1)[0])
    out = (U @ psi).reshape(n + 1, n + 1)
    return np.sum(np.abs(out) ** 2, axis=1)


def single_mode_squeezed(seed: int, zeta: complex, n: int, work: int = 200) -> np.ndarray:
    """``exp[(zeta a^dag^2 - zeta^* a^2)/2] |seed>`` by dense matrix exponential."""
    a = ladder(work)
    ad = a.conj().T
    U = expm(0.5 * (zeta * ad @ ad - np.conj(zeta) * a @ a))
    v = U[:, seed]
    return v[: n + 1]
