"""Bob's measurement chain: photon loss, photomultiplier signals, orthogonality filter.

Loss acts on photon-number statistics only. For number observables the
beam-splitter loss channel maps the diagonal of the input density matrix to
the diagonal of the output by independent binomial thinning of each mode, so
no amplitude-level mixed state is needed.

The filter fires ``plus`` when ``I+ - I- > xi k``, ``minus`` when
``I- - I+ > xi k`` and is inconclusive otherwise; equality is inconclusive.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gammaln, ndtr
from scipy.stats import binom

from .fock_core import DEFAULT_EPS_TAIL, ModeBasis, PhotonDistribution
from .opa_states import AmplifiedState, _mode_amplitudes, adaptive_mode_cutoff


@dataclass(frozen=True)
class DetectorChain:
    """Efficiency ``eta``, signal scale ``xi`` (mV/photon), jitter, background, threshold ``k``."""

    eta: float = 0.03
    xi: float = 1.0
    sigma_noise: float = 0.0
    background_rate: float = 0.0
    k: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.xi > 0.0:
            raise ValueError(f"xi must be > 0, got {self.xi}")
        if self.sigma_noise < 0.0:
            raise ValueError("sigma_noise must be >= 0")
        if not 0.0 <= self.background_rate <= 1.0:
            raise ValueError("background_rate must lie in [0, 1]")
        if self.k < 0.0:
            raise ValueError("threshold k must be >= 0")


class OFOutcome(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class FactoredDistribution:
    """``P[m, n] = sum_t w_t u_t[m] v_t[n]`` with real weights and vectors.

    Used where the dense grid would be far too large (high gain).
    """

    terms: tuple
    basis: ModeBasis
    deficit: float = 0.0

    def to_dense(self) -> PhotonDistribution:
        rows = max(len(u) for _, u, _ in self.terms)
        cols = max(len(v) for _, _, v in self.terms)
        P = np.zeros((rows, cols))
        for w, u, v in self.terms:
            P[: len(u), : len(v)] += w * np.outer(u, v)
        return PhotonDistribution(np.clip(P, 0.0, None), self.basis, self.deficit)

    def total(self) -> float:
        return float(sum(w * u.sum() * v.sum() for w, u, v in self.terms))

    def mean(self, mode: str) -> float:
        idx = 1 if mode == "first" else 2
        tot = 0.0
        for t in self.terms:
            x, y = t[idx], t[3 - idx]
            tot += t[0] * float(np.dot(np.arange(x.size), x)) * float(y.sum())
        return tot

    def difference_distribution(self) -> tuple[int, np.ndarray]:
        cols = max(len(v) for _, _, v in self.terms)
        rows = max(len(u) for _, u, _ in self.terms)
        out = np.zeros(rows + cols - 1)
        offset = cols - 1
        for w, u, v in self.terms:
            c = fftconvolve(u, v[::-1])
            # index i of c -> d = i - (len(v) - 1)
            start = offset - (len(v) - 1)
            out[start : start + c.size] += w * c
        return offset, out


# -- loss ------------------------------------------------------------------


def binomial_matrix(n: int, eta: float) -> np.ndarray:
    """``B[k, m] = Bin(k; m, eta)`` for ``k, m <= n``."""
    m = np.arange(n + 1)
    return binom.pmf(m[:, None], m[None, :], eta)


def thin_vector(p: np.ndarray, eta: float, eps_tail: float = 1e-15, block: int = 512, nsig: float = 10.0) -> np.ndarray:
    """Binomial thinning of a (possibly signed) photon-number vector.

    Banded evaluation: for input count ``m`` only outputs within ``nsig``
    standard deviations of ``eta m`` are summed.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    if eta == 1.0:
        return p.copy()
    if eta == 0.0:
        return np.array([p.sum()])
    q = 1.0 - eta
    L = gammaln(np.arange(n + 1) + 1.0)
    le, lq = math.log(eta), math.log(q)
    kmax = min(n - 1, int(eta * (n - 1) + nsig * math.sqrt(n * eta * q) + nsig + 2))
    out = np.zeros(kmax + 1)
    for m0 in range(0, n, block):
        m1 = min(n, m0 + block)
        pb = p[m0:m1]
        if not pb.any():
            continue
        w = nsig * math.sqrt(m1 * eta * q) + nsig
        k0 = max(0, int(eta * m0 - w))
        k1 = min(kmax, int(eta * (m1 - 1) + w) + 1)
        m = np.arange(m0, m1)[:, None]
        k = np.arange(k0, k1 + 1)[None, :]
        mk = m - k
        ok = mk >= 0
        lp = L[m] - L[k] - L[np.where(ok, mk, 0)] + k * le + mk * lq
        out[k0 : k1 + 1] += pb @ np.where(ok, np.exp(lp), 0.0)
    # trim a negligible tail
    mag = np.abs(out)
    tail = np.cumsum(mag[::-1])[::-1]
    keep = int(np.searchsorted(-tail, -eps_tail * max(tail[0], 1e-300)))
    return out[: max(keep, 1)]


def apply_loss(d, eta: float):
    """Independent binomial thinning of both modes."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if isinstance(d, FactoredDistribution):
        terms = tuple((w, thin_vector(u, eta), thin_vector(v, eta)) for w, u, v in d.terms)
        return FactoredDistribution(terms, d.basis, d.deficit)
    if eta == 1.0:
        return d
    rows, cols = d.P.shape
    Br = binomial_matrix(rows - 1, eta)
    Bc = binomial_matrix(cols - 1, eta)
    return PhotonDistribution(Br @ d.P @ Bc.T, d.basis, d.deficit)


@lru_cache(maxsize=256)
def _thinned_pair(pair: tuple[int, int], g: float, n_max: int, eta: float) -> np.ndarray:
    a, b = pair
    v = np.asarray(_mode_amplitudes(a, g, n_max)) * np.asarray(_mode_amplitudes(b, g, n_max))
    out = thin_vector(v, eta)
    out.setflags(write=False)
    return out


def detected_distribution(
    state: AmplifiedState,
    eta: float,
    n_max: int | None = None,
    eps_tail: float = DEFAULT_EPS_TAIL,
) -> FactoredDistribution:
    """Photon-number distribution of an amplified state after loss ``eta``.

    Thinned factor vectors are cached per gain, cutoff and efficiency, so
    scanning phases or Alice outcomes reuses them.
    """
    g = state.gp.g
    if n_max is None:
        n_max = adaptive_mode_cutoff(g, eps_tail=eps_tail)
    terms = []
    for w, pa, pb in state.distribution_terms():
        terms.append((w, _thinned_pair(pa, g, n_max, float(eta)), _thinned_pair(pb, g, n_max, float(eta))))
    deficit = max(0.0, 1.0 - sum(w * u.sum() * v.sum() for w, u, v in terms))
    return FactoredDistribution(tuple(terms), state.basis, deficit)


def thermal_pair(mean_n: float, eta: float = 1.0, eps_tail: float = 1e-15) -> FactoredDistribution:
    """Two independent thermal modes of mean ``mean_n`` each, after loss."""
    mu = eta * mean_n
    if mu <= 0:
        return FactoredDistribution(((1.0, np.array([1.0]), np.array([1.0])),), ModeBasis.equatorial(0.0))
    x = mu / (1.0 + mu)
    n = int(math.ceil(math.log(eps_tail) / math.log(x))) + 1
    p = (1.0 - x) * x ** np.arange(n)
    return FactoredDistribution(((1.0, p, p),), ModeBasis.equatorial(0.0), max(0.0, 1.0 - p.sum() ** 2))


# -- signals and filter ----------------------------------------------------


def pm_response(m: int, n: int, chain: DetectorChain, rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Photomultiplier pulse heights ``xi * count + N(0, sigma_noise)``."""
    if m < 0 or n < 0:
        raise ValueError("photon counts must be non-negative")
    ip, im = chain.xi * m, chain.xi * n
    if chain.sigma_noise > 0:
        if rng is None:
            raise ValueError("a random generator is required when sigma_noise > 0")
        ip += rng.normal(0.0, chain.sigma_noise)
        im += rng.normal(0.0, chain.sigma_noise)
    return float(ip), float(im)


def of_decide(i_plus: float, i_minus: float, chain: DetectorChain) -> OFOutcome:
    thr = chain.xi * chain.k
    diff = i_plus - i_minus
    if diff > thr:
        return OFOutcome.PLUS
    if -diff > thr:
        return OFOutcome.MINUS
    return OFOutcome.INCONCLUSIVE


def of_region_probabilities(diff_dist: tuple[int, np.ndarray], chain: DetectorChain) -> tuple[float, float]:
    """``(p_plus, p_minus)`` from a detected difference distribution ``m' - n'``."""
    offset, P = diff_dist
    d = np.arange(P.size) - offset
    if chain.sigma_noise > 0:
        s = math.sqrt(2.0) * chain.sigma_noise / chain.xi
        w_plus = ndtr((d - chain.k) / s)
        w_minus = ndtr((-d - chain.k) / s)
    else:
        w_plus = (d > chain.k).astype(float)
        w_minus = (-d > chain.k).astype(float)
    return float(np.dot(P, w_plus)), float(np.dot(P, w_minus))


def of_probabilities(d, chain: DetectorChain, lossy: bool = True) -> tuple[float, float, float]:
    """Exact ``(p_plus, p_minus, p_inconclusive)`` of the filter on a distribution.

    ``d`` is a :class:`PhotonDistribution`, a :class:`FactoredDistribution`
    or an :class:`AmplifiedState` (loss then uses the cached factored path).
    Set ``lossy=False`` when ``d`` is already the detected distribution.
    """
    if isinstance(d, AmplifiedState):
        det = detected_distribution(d, chain.eta)
    elif lossy:
        det = apply_loss(d, chain.eta)
    else:
        det = d
    pp, pm = of_region_probabilities(det.difference_distribution(), chain)
    pp, pm = max(pp, 0.0), max(pm, 0.0)
    return pp, pm, max(0.0, 1.0 - det.deficit - pp - pm)


def sample_events(d: PhotonDistribution, chain: DetectorChain, n: int, rng: np.random.Generator) -> dict:
    """Monte Carlo of the full chain on a dense distribution: draw ``(m, n)``,
    thin, generate PM signals and run the filter. Returns outcome counts."""
    P = d.P.ravel() / d.P.sum()
    cols = d.P.shape[1]
    idx = rng.choice(P.size, size=n, p=P)
    m, k = np.divmod(idx, cols)
    m = rng.binomial(m, chain.eta)
    k = rng.binomial(k, chain.eta)
    counts = {o: 0 for o in OFOutcome}
    for mi, ki in zip(m, k):
        counts[of_decide(*pm_response(int(mi), int(ki), chain, rng), chain)] += 1
    return counts
