"""Truncated two-mode Fock space engine.

States live on a square grid ``c[m, n]`` of amplitudes, ``m`` photons in the
first polarization mode and ``n`` in the second, for ``m, n <= cutoff``.
Amplitudes are stored as ``(log|c|, arg c)`` so that products of large
factorials never overflow; ``-inf`` in the log-magnitude is the explicit
zero-amplitude marker.

Mode bases are polarization bases referred to the fixed ``{H, V}`` poles.
An equatorial basis of phase ``phi`` has first mode
``(H + e^{i phi} V)/sqrt(2)`` and second mode ``(-e^{-i phi} H + V)/sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import expm, logm
from scipy.sparse.linalg import expm_multiply

TWO_PI = 2.0 * math.pi
DEFAULT_EPS_TAIL = 1e-8
_NORM_TOL = 1e-9


class BasisMismatchError(ValueError):
    """Two states expressed in different mode bases were combined."""


class UnderTruncationError(RuntimeError):
    """Probability mass beyond the cutoff exceeds the configured tolerance."""

    def __init__(self, message: str, tail_deficit: float, suggested_cutoff: int):
        super().__init__(message)
        self.tail_deficit = tail_deficit
        self.suggested_cutoff = suggested_cutoff


def _normalize_phase(phi: float) -> float:
    phi = math.fmod(float(phi), TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    if TWO_PI - phi < 1e-12:
        phi = 0.0
    return phi


@dataclass(frozen=True)
class ModeBasis:
    """Polarization basis of the two modes: ``poles`` ({H, V}) or ``equatorial``."""

    kind: str
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("poles", "equatorial"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "poles" and self.phase != 0.0:
            raise ValueError("the poles basis carries no phase")
        object.__setattr__(self, "phase", _normalize_phase(self.phase))

    @classmethod
    def poles(cls) -> ModeBasis:
        return cls("poles")

    @classmethod
    def equatorial(cls, phi: float) -> ModeBasis:
        return cls("equatorial", phi)

    def vectors(self) -> np.ndarray:
        """Columns are the Jones vectors (H, V components) of the two modes."""
        if self.kind == "poles":
            return np.eye(2, dtype=complex)
        e = np.exp(1j * self.phase)
        return np.array([[1.0, -np.conj(e)], [e, 1.0]], dtype=complex) / math.sqrt(2.0)

    def same_as(self, other: ModeBasis, tol: float = 1e-12) -> bool:
        if self.kind != other.kind:
            return False
        d = abs(self.phase - other.phase)
        return min(d, TWO_PI - d) <= tol

    def __str__(self):
        if self.kind == "poles":
            return "poles{H,V}"
        return f"equatorial(phi={self.phase:.6g})"


POLES = ModeBasis.poles()
PLUS_MINUS = ModeBasis.equatorial(0.0)
RIGHT_LEFT = ModeBasis.equatorial(1.5 * math.pi)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _split_log(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mag = np.abs(c)
    with np.errstate(divide="ignore"):
        log_abs = np.log(mag)
    phase = np.where(mag > 0.0, np.angle(c), 0.0)
    return log_abs, phase


@dataclass(frozen=True, eq=False)
class TwoModeState:
    """Pure state on the truncated two-mode grid ``[0, cutoff]^2``.

    ``tail_deficit`` is the probability mass known to lie beyond the grid.
    """

    log_abs: np.ndarray
    phase: np.ndarray
    basis: ModeBasis
    tail_deficit: float = 0.0

    def __post_init__(self):
        la = np.asarray(self.log_abs, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if la.ndim != 2 or la.shape[0] != la.shape[1] or la.shape != ph.shape:
            raise ValueError("amplitude grid must be square (cutoff+1, cutoff+1)")
        if np.isnan(la).any() or np.isposinf(la).any():
            raise ValueError("log-magnitudes must be finite or -inf (zero marker)")
        object.__setattr__(self, "log_abs", _frozen(la))
        object.__setattr__(self, "phase", _frozen(np.where(np.isneginf(la), 0.0, ph)))
        object.__setattr__(self, "tail_deficit", max(0.0, float(self.tail_deficit)))

    @classmethod
    def from_amplitudes(cls, c, basis: ModeBasis = POLES, tail_deficit: float = 0.0):
        c = np.asarray(c, dtype=complex)
        log_abs, phase = _split_log(c)
        return cls(log_abs, phase, basis, tail_deficit)

    @classmethod
    def fock(cls, m: int, n: int, cutoff: int, basis: ModeBasis = POLES):
        if not (0 <= m <= cutoff and 0 <= n <= cutoff):
            raise ValueError(f"|{m},{n}> does not fit in cutoff {cutoff}")
        c = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        c[m, n] = 1.0
        return cls.from_amplitudes(c, basis)

    @classmethod
    def vacuum(cls, cutoff: int, basis: ModeBasis = POLES):
        return cls.fock(0, 0, cutoff, basis)

    @property
    def cutoff(self) -> int:
        return self.log_abs.shape[0] - 1

    @property
    def amplitudes(self) -> np.ndarray:
        return np.exp(self.log_abs) * np.exp(1j * self.phase)

    def norm_sq(self) -> float:
        return float(np.exp(2.0 * self.log_abs).sum())

    def is_under_truncated(self, eps_tail: float = DEFAULT_EPS_TAIL) -> bool:
        return self.tail_deficit >= eps_tail

    def with_cutoff(self, cutoff: int) -> TwoModeState:
        """Zero-pad or truncate; truncated mass is moved into ``tail_deficit``."""
        if cutoff == self.cutoff:
            return self
        la = np.full((cutoff + 1, cutoff + 1), -np.inf)
        ph = np.zeros_like(la)
        k = min(cutoff, self.cutoff) + 1
        la[:k, :k] = self.log_abs[:k, :k]
        ph[:k, :k] = self.phase[:k, :k]
        lost = self.norm_sq() - float(np.exp(2.0 * la).sum())
        return TwoModeState(la, ph, self.basis, self.tail_deficit + max(lost, 0.0))

    def normalized(self) -> TwoModeState:
        """Rescale the grid to unit norm, dropping the deficit bookkeeping."""
        shift = 0.5 * math.log(self.norm_sq())
        return TwoModeState(self.log_abs - shift, self.phase, self.basis, 0.0)


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Joint photon-number probabilities ``P[m, n]`` in a given basis."""

    P: np.ndarray
    basis: ModeBasis = POLES
    deficit: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2:
            raise ValueError("distribution grid must be two-dimensional")
        if (P < -1e-15).any():
            raise ValueError("negative probability in distribution")
        object.__setattr__(self, "P", _frozen(np.clip(P, 0.0, None)))
        object.__setattr__(self, "deficit", max(0.0, float(self.deficit)))

    @property
    def cutoff(self) -> int:
        return max(self.P.shape) - 1

    def total(self) -> float:
        return float(self.P.sum())

    def marginal(self, mode: str) -> np.ndarray:
        return self.P.sum(axis=1 if mode == "first" else 0)

    def mean(self, mode: str) -> float:
        p = self.marginal(mode)
        return float(np.dot(np.arange(p.size), p))

    def difference_distribution(self) -> tuple[int, np.ndarray]:
        """Distribution of ``m - n``; returns ``(offset, probs)`` with ``d = index - offset``."""
        rows, cols = self.P.shape
        out = np.zeros(rows + cols - 1)
        offset = cols - 1
        for d in range(-(cols - 1), rows):
            out[d + offset] = np.trace(self.P, offset=-d)
        return offset, out


@dataclass(frozen=True, eq=False)
class LinearOperatorMatrix:
    """Dense operator on the flattened two-mode grid (index ``m*(cutoff+1)+n``)."""

    matrix: np.ndarray
    cutoff: int
    basis: ModeBasis
    hermitian: bool = field(default=False)

    def __post_init__(self):
        dim = (self.cutoff + 1) ** 2
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"operator must be {dim}x{dim}")
        if self.hermitian and not np.allclose(self.matrix, self.matrix.conj().T, atol=1e-12):
            raise ValueError("operator flagged Hermitian but is not")

    def apply(self, s: TwoModeState) -> TwoModeState:
        _check_basis(s.basis, self.basis)
        v = s.with_cutoff(self.cutoff).amplitudes.ravel()
        return TwoModeState.from_amplitudes(
            (self.matrix @ v).reshape(self.cutoff + 1, -1), self.basis
        )


def _check_basis(a: ModeBasis, b: ModeBasis):
    if not a.same_as(b):
        raise BasisMismatchError(f"basis mismatch: {a} vs {b}; rotate first")


def inner_product(a: TwoModeState, b: TwoModeState) -> complex:
    """``<a|b>`` over the common grid (the smaller state is zero-padded)."""
    _check_basis(a.basis, b.basis)
    k = min(a.cutoff, b.cutoff) + 1
    la = a.log_abs[:k, :k] + b.log_abs[:k, :k]
    dphi = b.phase[:k, :k] - a.phase[:k, :k]
    return complex(np.sum(np.exp(la) * np.exp(1j * dphi)))


def fidelity(a: TwoModeState, b: TwoModeState) -> float:
    """Overlap of the grid-normalized states, ``|<a|b>|^2 / (<a|a><b|b>)``."""
    return abs(inner_product(a, b)) ** 2 / (a.norm_sq() * b.norm_sq())


def number_distribution(s: TwoModeState) -> PhotonDistribution:
    return PhotonDistribution(np.exp(2.0 * s.log_abs), s.basis, s.tail_deficit)


def mean_photon(s: TwoModeState, mode: str = "first", eps_tail: float = DEFAULT_EPS_TAIL) -> float:
    """Mean photon number of ``mode`` ('first' or 'second')."""
    if mode not in ("first", "second"):
        raise ValueError("mode must be 'first' or 'second'")
    if s.is_under_truncated(eps_tail):
        raise UnderTruncationError(
            f"state tail deficit {s.tail_deficit:.3g} >= {eps_tail:.3g}",
            s.tail_deficit,
            2 * s.cutoff,
        )
    return number_distribution(s).mean(mode)


# -- mode rotation ---------------------------------------------------------


def mode_overlap(source: ModeBasis, target: ModeBasis) -> np.ndarray:
    """``W[k, l] = <target_k | source_l>`` between single-photon mode vectors."""
    return target.vectors().conj().T @ source.vectors()


def _block_generator(L: np.ndarray, N: int) -> np.ndarray:
    """Matrix of ``sum_kl L[k,l] a_k^dag a_l`` on the N-photon block ``|p, N-p>``."""
    p = np.arange(N + 1)
    K = np.diag(L[0, 0] * p + L[1, 1] * (N - p)).astype(complex)
    up = np.sqrt((p[:-1] + 1.0) * (N - p[:-1]))  # a_1^dag a_2: p -> p+1
    K[p[1:], p[:-1]] += L[0, 1] * up
    K[p[:-1], p[1:]] += L[1, 0] * up
    return K


def rotate_mode(s: TwoModeState, target: ModeBasis) -> TwoModeState:
    """Re-express ``s`` in the ``target`` mode basis.

    Each total-photon-number block is transformed by the (N+1)-dimensional
    symmetric representation of the 2x2 mode unitary. Blocks with more photons
    than ``cutoff`` are only partly on the grid; what they push off the grid is
    added to ``tail_deficit``.
    """
    if s.basis.same_as(target):
        return s
    W = mode_overlap(s.basis, target)
    L = logm(W)
    c = s.amplitudes
    Nmax = s.cutoff
    out = np.zeros_like(c)
    lost = 0.0
    for N in range(2 * Nmax + 1):
        lo, hi = max(0, N - Nmax), min(N, Nmax)
        p = np.arange(lo, hi + 1)
        vec = np.zeros(N + 1, dtype=complex)
        vec[p] = c[p, N - p]
        if not vec.any():
            continue
        new = expm(_block_generator(L, N)) @ vec
        out[p, N - p] = new[p]
        if lo > 0 or hi < N:
            lost += float(np.sum(np.abs(new) ** 2) - np.sum(np.abs(new[p]) ** 2))
    return TwoModeState.from_amplitudes(out, target, s.tail_deficit + max(lost, 0.0))


# -- squeezing evolution ---------------------------------------------------


def default_cutoff(g: float) -> int:
    """Starting cutoff of the adaptive rule, ``ceil(8 sinh^2 g + 16)``."""
    return int(math.ceil(8.0 * math.sinh(g) ** 2 + 16.0))


def creation_operators(cutoff: int) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    d = cutoff + 1
    adag = sparse.diags(np.sqrt(np.arange(1, d, dtype=float)), -1, format="csr")
    eye = sparse.identity(d, format="csr")
    return sparse.kron(adag, eye, format="csr"), sparse.kron(eye, adag, format="csr")


def squeezer_generator(g: float, basis: ModeBasis, cutoff: int) -> sparse.csr_matrix:
    """``g (a_H^dag a_V^dag - a_H a_V)`` written in the modes of ``basis``."""
    A1, A2 = creation_operators(cutoff)
    vec = basis.vectors()
    # a_H^dag = sum_k <t_k|H> a_k^dag
    cH, cV = vec[0, :].conj(), vec[1, :].conj()
    aH = cH[0] * A1 + cH[1] * A2
    aV = cV[0] * A1 + cV[1] * A2
    pair = g * (aH @ aV)
    return (pair - pair.conj().T).tocsr()


def _rk4(G: sparse.csr_matrix, v: np.ndarray, steps: int) -> np.ndarray:
    h = 1.0 / steps
    for _ in range(steps):
        k1 = G @ v
        k2 = G @ (v + 0.5 * h * k1)
        k3 = G @ (v + 0.5 * h * k2)
        k4 = G @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return v


def evolve_squeezer(
    state: TwoModeState,
    g: float,
    eps_tail: float = DEFAULT_EPS_TAIL,
    method: str = "expm",
    rk4_steps: int | None = None,
) -> TwoModeState:
    """Apply ``U = exp[g(a_H^dag a_V^dag - a_H a_V)]`` numerically.

    The evolution runs on a doubled working grid and is then cut back to the
    input cutoff; the mass left outside becomes ``tail_deficit``. ``method`` is
    ``'expm'`` (scaling-and-squaring Taylor action) or ``'rk4'``.
    """
    if g < 0:
        raise ValueError("gain g must be >= 0")
    if g == 0:
        return state
    N = state.cutoff
    work = 2 * N
    v = state.with_cutoff(work).amplitudes.ravel()
    G = squeezer_generator(g, state.basis, work)
    if method == "expm":
        out = expm_multiply(G, v)
    elif method == "rk4":
        steps = rk4_steps or max(200, int(math.ceil(4.0 * g * work)))
        out = _rk4(G, v, steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    full = out.reshape(work + 1, work + 1)
    kept = full[: N + 1, : N + 1]
    deficit = state.tail_deficit + max(0.0, float(np.sum(np.abs(full) ** 2) - np.sum(np.abs(kept) ** 2)))
    if deficit >= eps_tail:
        raise UnderTruncationError(
            f"evolved tail deficit {deficit:.3g} >= {eps_tail:.3g} at cutoff {N}",
            deficit,
            2 * N,
        )
    return TwoModeState.from_amplitudes(kept, state.basis, deficit)


def write_distribution_csv(d: PhotonDistribution, path) -> None:
    """Grid dump ``m,n,p`` row-major, shortest round-trip float text."""
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("m,n,p\n")
        rows, cols = d.P.shape
        for m in range(rows):
            for n in range(cols):
                fh.write(f"{m},{n},{float(d.P[m, n])!r}\n")
