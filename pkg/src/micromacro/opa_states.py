"""Closed-form macro-states of the quantum-injected parametric amplifier.

In an equatorial basis of phase ``phi`` the amplifier factorizes into two
single-mode squeezers with complex parameters ``g e^{-i phi}`` (first mode)
and ``-g e^{i phi}`` (second mode). Every macro-state is therefore a sum of
products of single-mode squeezed Fock kets, whose amplitudes have closed
forms evaluated here in log space. At ``phi = pi`` the single-photon
macro-state coincides term by term with the printed expansion
``gamma_ij sqrt((2i+1)!(2j)!)/(i! j!)``; other phases differ by the mode phase
factors ``e^{i theta (m - s)/2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, xlogy

from .fock_core import (
    DEFAULT_EPS_TAIL,
    LinearOperatorMatrix,
    ModeBasis,
    POLES,
    TwoModeState,
    UnderTruncationError,
    default_cutoff,
    evolve_squeezer,
    inner_product,
    rotate_mode,
)

MAX_DENSE_CUTOFF = 1024
MAX_MODE_CUTOFF = 1 << 22


@dataclass(frozen=True)
class GainParams:
    """Nonlinear gain ``g`` and the derived ``cosh g``, ``tanh g``, ``sinh^2 g``."""

    g: float

    def __post_init__(self):
        if not (self.g >= 0 and math.isfinite(self.g)):
            raise ValueError(f"gain must be finite and >= 0, got {self.g}")

    @property
    def C(self) -> float:
        return math.cosh(self.g)

    @property
    def Gamma(self) -> float:
        return math.tanh(self.g)

    @property
    def mbar(self) -> float:
        return math.sinh(self.g) ** 2


class LogValue(NamedTuple):
    log_abs: float
    phase: float

    @property
    def value(self) -> complex:
        if self.log_abs == -math.inf:
            return 0j
        return complex(math.exp(self.log_abs) * np.exp(1j * self.phase))


def gamma_coeff(i: int, j: int, gp: GainParams) -> LogValue:
    """``gamma_ij = C^-2 (-Gamma/2)^i (Gamma/2)^j`` in log-magnitude/phase form."""
    if i < 0 or j < 0:
        raise ValueError("indices must be non-negative")
    log_abs = -2.0 * math.log(gp.C) + float(xlogy(i + j, gp.Gamma / 2.0))
    return LogValue(log_abs, math.pi * (i % 2))


# -- single-mode squeezed Fock factors -------------------------------------


def squeezed_fock_log(seed: int, g: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Real amplitudes of ``S(g)|seed>`` for a real squeezing parameter.

    Returns ``(log|a|, sign)`` over photon numbers ``0..n_max``. A complex
    parameter ``g e^{i theta}`` multiplies entry ``m`` by ``e^{i theta (m-seed)/2}``.
    """
    if seed not in (0, 1, 2):
        raise ValueError("seed photon number must be 0, 1 or 2")
    C, G = math.cosh(g), math.tanh(g)
    logC = math.log(C)
    m = np.arange(n_max + 1)
    log_a = np.full(n_max + 1, -np.inf)
    sign = np.ones(n_max + 1)
    if seed == 0:
        n = m[::2] // 2
        log_a[::2] = -0.5 * logC + 0.5 * gammaln(2 * n + 1) - gammaln(n + 1) + xlogy(n, G / 2)
    elif seed == 1:
        n = m[1::2] // 2
        log_a[1::2] = -1.5 * logC + 0.5 * gammaln(2 * n + 2) - gammaln(n + 1) + xlogy(n, G / 2)
    else:
        # c_0 = -Gamma/sqrt(2) C^{-1/2};  c_2n = C^{-5/2}(G/2)^{n-1} sqrt((2n)!)/((n-1)! sqrt 2) (1 - m/(2n))
        if G > 0:
            log_a[0] = -0.5 * logC + math.log(G) - 0.5 * math.log(2.0)
            sign[0] = -1.0
        n = m[2::2] // 2
        mbar = math.sinh(g) ** 2
        bracket = 1.0 - mbar / (2.0 * n)
        with np.errstate(divide="ignore"):
            log_a[2::2] = (
                -2.5 * logC
                + xlogy(n - 1, G / 2)
                + 0.5 * gammaln(2 * n + 1)
                - gammaln(n)
                - 0.5 * math.log(2.0)
                + np.log(np.abs(bracket))
            )
        sign[2::2] = np.where(bracket < 0, -1.0, 1.0)
    sign = np.where(np.isneginf(log_a), 1.0, sign)
    return log_a, sign


@lru_cache(maxsize=64)
def _mode_amplitudes(seed: int, g: float, n_max: int) -> np.ndarray:
    log_a, sign = squeezed_fock_log(seed, g, n_max)
    out = sign * np.exp(log_a)
    out.setflags(write=False)
    return out


def mode_tail(seed: int, g: float, n_max: int) -> float:
    a = _mode_amplitudes(seed, g, n_max)
    return max(0.0, 1.0 - float(np.dot(a, a)))


def adaptive_mode_cutoff(g: float, seeds=(0, 1, 2), eps_tail: float = DEFAULT_EPS_TAIL) -> int:
    """Smallest doubling of the default cutoff whose per-mode tail is below ``eps_tail``."""
    n = default_cutoff(g)
    while max(mode_tail(s, g, n) for s in seeds) >= eps_tail:
        n *= 2
        if n > MAX_MODE_CUTOFF:
            raise UnderTruncationError("mode cutoff exceeds hard limit", 1.0, n)
    return n


def mode_thetas(basis: ModeBasis) -> tuple[float, float]:
    """Squeezing phases of the two modes of an equatorial basis."""
    if basis.kind != "equatorial":
        raise ValueError("closed forms exist only in equatorial bases")
    return -basis.phase, math.pi + basis.phase


# -- amplified seeds -------------------------------------------------------


def _seed_dict(seed) -> dict[tuple[int, int], complex]:
    out = {}
    for (p, q), c in dict(seed).items():
        if p + q > 2 or p < 0 or q < 0:
            raise ValueError("seeds carry at most two photons")
        if c != 0:
            out[(int(p), int(q))] = complex(c)
    return out


@dataclass(frozen=True, eq=False)
class AmplifiedState:
    """``U`` applied to a few-photon seed written in an equatorial basis.

    Grid-free: amplitudes, distributions and means are evaluated from the
    closed-form single-mode factors, so any gain is representable.
    """

    seed: dict
    basis: ModeBasis
    gp: GainParams

    def __post_init__(self):
        seed = _seed_dict(self.seed)
        norm = sum(abs(c) ** 2 for c in seed.values())
        if norm <= 0:
            raise ValueError("empty seed")
        if self.basis.kind != "equatorial":
            raise ValueError("amplified states are expressed in equatorial bases")
        object.__setattr__(self, "seed", {k: v / math.sqrt(norm) for k, v in seed.items()})

    def seed_state(self) -> TwoModeState:
        c = np.zeros((3, 3), dtype=complex)
        for (p, q), v in self.seed.items():
            c[p, q] = v
        return TwoModeState.from_amplitudes(c, self.basis)

    def in_basis(self, target: ModeBasis) -> AmplifiedState:
        """Same physical state in another equatorial basis (the amplifier is covariant)."""
        if target.same_as(self.basis):
            return self
        s = rotate_mode(self.seed_state(), target).amplitudes
        seed = {(p, q): s[p, q] for p in range(3) for q in range(3) if p + q <= 2 and abs(s[p, q]) > 1e-15}
        return AmplifiedState(seed, target, self.gp)

    def overlap(self, other: AmplifiedState) -> complex:
        """``<self|other>``; the amplifier is unitary so only seeds matter."""
        b = other.in_basis(self.basis).seed
        return sum(np.conj(v) * b.get(k, 0j) for k, v in self.seed.items())

    def photon_numbers(self) -> int:
        ns = {p + q for p, q in self.seed}
        if len(ns) != 1:
            raise ValueError("seed mixes photon numbers")
        return ns.pop()

    def to_state(self, cutoff: int | None = None, eps_tail: float = DEFAULT_EPS_TAIL) -> TwoModeState:
        """Dense grid; adaptive cutoff when ``cutoff`` is None."""
        if cutoff is not None:
            if cutoff > MAX_DENSE_CUTOFF:
                raise ValueError(f"dense cutoff {cutoff} exceeds {MAX_DENSE_CUTOFF}")
            return self._grid(cutoff)
        n = default_cutoff(self.gp.g)
        if n > MAX_DENSE_CUTOFF:
            raise UnderTruncationError(
                f"dense grid would need cutoff ~{n} > {MAX_DENSE_CUTOFF}; use the factored path",
                1.0,
                n,
            )
        while True:
            s = self._grid(n)
            if s.tail_deficit < eps_tail:
                return s
            if 2 * n > MAX_DENSE_CUTOFF:
                raise UnderTruncationError(
                    f"dense grid would need cutoff > {MAX_DENSE_CUTOFF}; use the factored path",
                    s.tail_deficit,
                    2 * n,
                )
            n *= 2

    def _grid(self, cutoff: int) -> TwoModeState:
        g = self.gp.g
        ta, tb = mode_thetas(self.basis)
        m = np.arange(cutoff + 1)
        terms = list(self.seed.items())
        if len(terms) == 1:
            (p, q), c = terms[0]
            la, sa = squeezed_fock_log(p, g, cutoff)
            lb, sb = squeezed_fock_log(q, g, cutoff)
            log_abs = la[:, None] + lb[None, :] + math.log(abs(c))
            phase = (
                np.angle(c)
                + np.where(sa < 0, math.pi, 0.0)[:, None]
                + np.where(sb < 0, math.pi, 0.0)[None, :]
                + (ta * (m - p) / 2.0)[:, None]
                + (tb * (m - q) / 2.0)[None, :]
            )
            s = TwoModeState(log_abs, np.where(np.isneginf(log_abs), 0.0, phase), self.basis)
        else:
            amp = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
            for (p, q), c in terms:
                A = np.asarray(_mode_amplitudes(p, g, cutoff)) * np.exp(1j * ta * (m - p) / 2.0)
                B = np.asarray(_mode_amplitudes(q, g, cutoff)) * np.exp(1j * tb * (m - q) / 2.0)
                amp += c * np.outer(A, B)
            s = TwoModeState.from_amplitudes(amp, self.basis)
        return TwoModeState(s.log_abs, s.phase, self.basis, max(0.0, 1.0 - s.norm_sq()))

    def distribution_terms(self):
        """Photon-number distribution as ``sum Re(w) u_pair (x) v_pair``.

        Yields ``(weight, (p_r, p_s), (q_r, q_s))``; the factor vectors are the
        real products ``a_{p_r} a_{p_s}`` of single-mode amplitudes.
        """
        ta, tb = mode_thetas(self.basis)
        items = list(self.seed.items())
        out = []
        for (pr, qr), cr in items:
            for (ps, qs), cs in items:
                if (pr - ps) % 2 or (qr - qs) % 2:
                    continue
                w = cr * np.conj(cs) * np.exp(1j * (ta * (ps - pr) + tb * (qs - qr)) / 2.0)
                if abs(w.real) > 1e-15:
                    out.append((float(w.real), (min(pr, ps), max(pr, ps)), (min(qr, qs), max(qr, qs))))
        return out

    def mean_photon(self, mode: str = "first") -> float:
        """Exact mean photon number of ``mode`` from seed-level moments.

        Uses ``S^dag n S = C^2 n + Sh^2 (n+1) + C Sh (e^{i theta} a^dag2 + h.c.)``.
        """
        C, Sh = self.gp.C, math.sinh(self.gp.g)
        theta = mode_thetas(self.basis)[0 if mode == "first" else 1]
        idx = 0 if mode == "first" else 1
        total = 0j
        for kr, cr in self.seed.items():
            for ks, cs in self.seed.items():
                if kr[1 - idx] != ks[1 - idx]:
                    continue
                pr, ps = kr[idx], ks[idx]
                if pr == ps:
                    elem = C * C * pr + Sh * Sh * (pr + 1)
                elif pr == ps + 2:
                    elem = C * Sh * np.exp(1j * theta) * math.sqrt(pr * (pr - 1))
                elif ps == pr + 2:
                    elem = C * Sh * np.exp(-1j * theta) * math.sqrt(ps * (ps - 1))
                else:
                    continue
                total += np.conj(cr) * cs * elem
        return float(total.real)


def seed_ket(p: int, q: int) -> dict:
    return {(p, q): 1.0}


def macro_single(
    which: str,
    phi: float,
    gp: GainParams,
    cutoff: int | None = None,
    eps_tail: float = DEFAULT_EPS_TAIL,
) -> TwoModeState:
    """Amplified single photon: ``aligned`` (photon in mode phi) or ``orthogonal``."""
    seeds = {"aligned": (1, 0), "orthogonal": (0, 1)}
    if which not in seeds:
        raise ValueError("which must be 'aligned' or 'orthogonal'")
    st = AmplifiedState(seed_ket(*seeds[which]), ModeBasis.equatorial(phi), gp)
    return st.to_state(cutoff, eps_tail)


def macro_qubit(
    alpha: complex,
    beta: complex,
    phi: float,
    gp: GainParams,
    cutoff: int | None = None,
    eps_tail: float = DEFAULT_EPS_TAIL,
) -> TwoModeState:
    """Amplified qubit ``alpha |phi> + beta |phi_perp>``."""
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > 1e-9:
        raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
    st = AmplifiedState({(1, 0): alpha, (0, 1): beta}, ModeBasis.equatorial(phi), gp)
    return st.to_state(cutoff, eps_tail)


TWO_PHOTON_SEEDS = {"two_plus": (2, 0), "two_minus": (0, 2), "plus_minus": (1, 1)}


def macro_two_photon(
    kind: str,
    gp: GainParams,
    cutoff: int | None = None,
    phi: float = 0.0,
    eps_tail: float = DEFAULT_EPS_TAIL,
) -> TwoModeState:
    """Amplified two-photon seeds ``|2,0>``, ``|0,2>`` or ``|1,1>`` in basis ``phi``."""
    if kind not in TWO_PHOTON_SEEDS:
        raise ValueError(f"kind must be one of {sorted(TWO_PHOTON_SEEDS)}")
    st = AmplifiedState(seed_ket(*TWO_PHOTON_SEEDS[kind]), ModeBasis.equatorial(phi), gp)
    return st.to_state(cutoff, eps_tail)


def two_photon_series(gp: GainParams, cutoff: int, first: float, second: float) -> np.ndarray:
    """Two-sum expansion ``first*sum gamma_ij sqrt((2i)!(2j)!)/(i!j!)|2i,2j>
    + second*sum gamma_ij sqrt((2i+2)!(2j)!)/(i!j!)|2i+2,2j>`` as a raw grid."""
    c = np.zeros((cutoff + 1, cutoff + 1))
    for i in range(cutoff // 2 + 1):
        for j in range(cutoff // 2 + 1):
            gm = gamma_coeff(i, j, gp)
            g_val = gm.value.real
            if g_val == 0.0:
                continue
            lf = 0.5 * gammaln(2 * j + 1) - gammaln(i + 1) - gammaln(j + 1)
            c[2 * i, 2 * j] += first * g_val * math.exp(0.5 * gammaln(2 * i + 1) + lf)
            if 2 * i + 2 <= cutoff:
                c[2 * i + 2, 2 * j] += second * g_val * math.exp(0.5 * gammaln(2 * i + 3) + lf)
    return c


# -- joint states ----------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    alice: tuple[int, int]
    weight: complex
    bob_seed: tuple[int, int]


@dataclass(frozen=True, eq=False)
class JointState:
    """Alice Fock kets paired with Bob macro-states, all in basis ``phi``."""

    branches: tuple[Branch, ...]
    basis_phase: float
    gp: GainParams
    cutoff: int | None = None
    eps_tail: float = DEFAULT_EPS_TAIL

    def __post_init__(self):
        labels = [b.alice for b in self.branches]
        if len(set(labels)) != len(labels):
            raise ValueError("Alice labels must be distinct Fock kets")
        tot = sum(abs(b.weight) ** 2 for b in self.branches)
        if abs(tot - 1.0) > 1e-9:
            raise ValueError("branch weights must be normalized")

    @property
    def basis(self) -> ModeBasis:
        return ModeBasis.equatorial(self.basis_phase)

    @property
    def kind(self) -> str:
        return "micro" if sum(self.branches[0].alice) == 1 else "spin1"

    def bob_amplified(self, branch: Branch) -> AmplifiedState:
        return AmplifiedState(seed_ket(*branch.bob_seed), self.basis, self.gp)

    def bob_state(self, branch: Branch) -> TwoModeState:
        return self.bob_amplified(branch).to_state(self.cutoff, self.eps_tail)


R2 = 1.0 / math.sqrt(2.0)
R3 = 1.0 / math.sqrt(3.0)


def micro_macro_joint(phi: float, gp: GainParams, cutoff: int | None = None, eps_tail: float = DEFAULT_EPS_TAIL) -> JointState:
    """Amplified singlet: ``(|1phi_perp>|Phi^phi> - |1phi>|Phi^phi_perp>)/sqrt 2``."""
    return JointState(
        (Branch((0, 1), R2, (1, 0)), Branch((1, 0), -R2, (0, 1))),
        phi, gp, cutoff, eps_tail,
    )


def spin1_joint(phi: float, gp: GainParams, cutoff: int | None = None, eps_tail: float = DEFAULT_EPS_TAIL) -> JointState:
    """Amplified spin-1 singlet with weights ``(1, -1, 1)/sqrt 3``."""
    return JointState(
        (
            Branch((2, 0), R3, (0, 2)),
            Branch((1, 1), -R3, (1, 1)),
            Branch((0, 2), R3, (2, 0)),
        ),
        phi, gp, cutoff, eps_tail,
    )


def _alice_overlap(outcome: tuple[int, int], phi_a: float, label: tuple[int, int], phi: float) -> complex:
    n = sum(label)
    if sum(outcome) != n:
        return 0j
    c = np.zeros((n + 1, n + 1), dtype=complex)
    c[label] = 1.0
    rot = rotate_mode(TwoModeState.from_amplitudes(c, ModeBasis.equatorial(phi)), ModeBasis.equatorial(phi_a))
    return complex(rot.amplitudes[outcome])


def condition_on_alice_seed(j: JointState, phi_a: float, alice_outcome: tuple[int, int], phi_b: float):
    """Project Alice onto ``alice_outcome`` in basis ``phi_a``; Bob's state in basis ``phi_b``.

    Returns ``(probability, AmplifiedState)``.
    """
    n = sum(j.branches[0].alice)
    if sum(alice_outcome) != n or min(alice_outcome) < 0:
        raise ValueError(f"outcome {alice_outcome} invalid for a {n}-photon Alice mode")
    seed: dict[tuple[int, int], complex] = {}
    for br in j.branches:
        amp = br.weight * _alice_overlap(alice_outcome, phi_a, br.alice, j.basis_phase)
        seed[br.bob_seed] = seed.get(br.bob_seed, 0j) + amp
    prob = sum(abs(v) ** 2 for v in seed.values())
    if prob < 1e-14:
        err = ValueError(f"Alice outcome {alice_outcome} has zero probability")
        err.probability = 0.0
        raise err
    bob = AmplifiedState(seed, j.basis, j.gp).in_basis(ModeBasis.equatorial(phi_b))
    return float(prob), bob


def condition_on_alice(j: JointState, phi_a: float, alice_outcome: tuple[int, int], phi_b: float):
    """Like :func:`condition_on_alice_seed` but returns Bob's dense :class:`TwoModeState`."""
    prob, bob = condition_on_alice_seed(j, phi_a, alice_outcome, phi_b)
    return prob, bob.to_state(j.cutoff, j.eps_tail)


# -- macro-spin operators --------------------------------------------------

_BASIS_RL = 1.5 * math.pi


def macro_spin_operator(i: int, gp: GainParams, cutoff: int, eps_tail: float = DEFAULT_EPS_TAIL) -> LinearOperatorMatrix:
    """``Sigma_i = |Phi^psi_i><Phi^psi_i| - |Phi^psi_i_perp><Phi^psi_i_perp|`` in the poles basis.

    ``i = 1`` {H, V}, ``i = 2`` {R, L}, ``i = 3`` {+, -}. All are built from the
    numerically amplified ``|1_H>`` and ``|1_V>`` and linear combination.
    """
    if i not in (1, 2, 3):
        raise ValueError("basis index must be 1, 2 or 3")
    phi_h = evolve_squeezer(TwoModeState.fock(1, 0, cutoff, POLES), gp.g, eps_tail)
    phi_v = evolve_squeezer(TwoModeState.fock(0, 1, cutoff, POLES), gp.g, eps_tail)
    h, v = phi_h.amplitudes.ravel(), phi_v.amplitudes.ravel()
    if i == 1:
        up, down = h, v
    else:
        phase = _BASIS_RL if i == 2 else 0.0
        vecs = ModeBasis.equatorial(phase).vectors()
        up = vecs[0, 0] * h + vecs[1, 0] * v
        down = vecs[0, 1] * h + vecs[1, 1] * v
    M = np.outer(up, up.conj()) - np.outer(down, down.conj())
    return LinearOperatorMatrix(M, cutoff, POLES, hermitian=True)


def hv_decomposition(phi: float, gp: GainParams, cutoff: int, eps_tail: float = DEFAULT_EPS_TAIL) -> tuple[complex, complex]:
    """Coefficients of ``|Phi^phi>`` on the amplified ``|1_H>`` and ``|1_V>``."""
    target = rotate_mode(macro_single("aligned", phi, gp, cutoff), POLES)
    phi_h = evolve_squeezer(TwoModeState.fock(1, 0, cutoff, POLES), gp.g, eps_tail)
    phi_v = evolve_squeezer(TwoModeState.fock(0, 1, cutoff, POLES), gp.g, eps_tail)
    return inner_product(phi_h, target), inner_product(phi_v, target)
